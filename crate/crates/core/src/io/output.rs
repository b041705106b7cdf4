//! Artifact files. CSV for fields and ledgers, JSON for reports.
//!
//! | file | columns / keys |
//! |------|----------------|
//! | `snapshots/step_NNNNN.csv` | `t,cell,x,y,u,p` |
//! | `trajectory_long.csv` | `t,cell,x,y,field,value` with `field` in `u`, `p` |
//! | `mass_ledger.csv` | `step,t,mass,source_mass,dirichlet_outflux,mass_residual` |
//! | `summary.json` | see [`super::RunSummary`] |
//! | `timings.json` | `total_seconds`, `phases` |

use crate::error::Result;
use crate::evolution::StepReport;
use crate::geometry::{ScalarField, StructuredGrid};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const OUTPUT_ROOT_ENV: &str = "HELESHAW_OUTPUT_ROOT";

/// `root / name`, where the root is `root_override`, else the environment
/// variable, else `./output`.
pub fn run_directory(name: &str, root_override: Option<&Path>) -> PathBuf {
    let root = root_override
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("output"));
    root.join(name)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Per-cell `t,cell,x,y,u,p` table.
pub fn write_snapshot(path: &Path, grid: &StructuredGrid<f64>, t: f64, u: &ScalarField<f64>, p: &ScalarField<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "cell", "x", "y", "u", "p"])?;
    for c in 0..grid.n_cells() {
        let [x, y] = grid.cell_center(c);
        w.write_record([
            t.to_string(),
            c.to_string(),
            x.to_string(),
            y.to_string(),
            u.values()[c].to_string(),
            p.values()[c].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MassEntry {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub source_mass: f64,
    pub dirichlet_outflux: f64,
    pub mass_residual: f64,
}

impl MassEntry {
    pub fn initial(mass: f64) -> Self {
        Self {
            step: 0,
            t: 0.0,
            mass,
            source_mass: 0.0,
            dirichlet_outflux: 0.0,
            mass_residual: 0.0,
        }
    }

    pub fn after(r: &StepReport) -> Self {
        Self {
            step: r.step + 1,
            t: r.time,
            mass: r.mass_after,
            source_mass: r.source_mass,
            dirichlet_outflux: r.dirichlet_outflux,
            mass_residual: r.mass_residual,
        }
    }
}

/// Writes snapshots, the long-format table and the mass ledger as the run
/// advances; every file is flushed after each step.
pub struct TrajectoryWriter {
    dir: PathBuf,
    grid: StructuredGrid<f64>,
    every: usize,
    long: Option<csv::Writer<File>>,
    ledger: csv::Writer<File>,
    written: Vec<usize>,
}

impl TrajectoryWriter {
    pub fn create(dir: &Path, grid: &StructuredGrid<f64>, every: usize, long_csv: bool) -> Result<Self> {
        std::fs::create_dir_all(dir.join("snapshots"))?;
        let long = if long_csv {
            let mut w = csv::Writer::from_path(dir.join("trajectory_long.csv"))?;
            w.write_record(["t", "cell", "x", "y", "field", "value"])?;
            Some(w)
        } else {
            None
        };
        let mut ledger = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("mass_ledger.csv"))?;
        ledger.write_record(["step", "t", "mass", "source_mass", "dirichlet_outflux", "mass_residual"])?;
        Ok(Self {
            dir: dir.to_path_buf(),
            grid: grid.clone(),
            every: every.max(1),
            long,
            ledger,
            written: Vec::new(),
        })
    }

    /// Records node `step` (0 is the initial state).
    pub fn record(&mut self, step: usize, last: bool, entry: &MassEntry, u: &ScalarField<f64>, p: &ScalarField<f64>) -> Result<()> {
        let t = entry.t;
        if step % self.every == 0 || last {
            write_snapshot(&self.dir.join(format!("snapshots/step_{step:05}.csv")), &self.grid, t, u, p)?;
            self.written.push(step);
            if let Some(w) = &mut self.long {
                for (name, f) in [("u", u), ("p", p)] {
                    for c in 0..self.grid.n_cells() {
                        let [x, y] = self.grid.cell_center(c);
                        w.write_record([
                            t.to_string(),
                            c.to_string(),
                            x.to_string(),
                            y.to_string(),
                            name.to_string(),
                            f.values()[c].to_string(),
                        ])?;
                    }
                }
                w.flush()?;
            }
        }
        self.ledger.serialize(entry)?;
        self.ledger.flush()?;
        Ok(())
    }

    pub fn snapshot_steps(&self) -> &[usize] {
        &self.written
    }
}
