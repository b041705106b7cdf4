//! Run configuration: a TOML document of flat sections.
//!
//! Relative file paths inside the config are resolved against the directory
//! of the config file.

use crate::error::{Error, Result};
use crate::evolution::{steps_for, EvolutionProblem, Source, SourceField};
use crate::geometry::{BoundaryKind, ScalarField, StructuredGrid};
use crate::graphs::GraphKind;
use crate::linalg::LinearSolver;
use crate::reaction::ReactionTerm;
use crate::stationary::{geometric_schedule, SolverParams};
use crate::velocity::{crowd_motion_field, VelocityField};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn dirichlet() -> BoundaryKind {
    BoundaryKind::Dirichlet
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    pub nx: usize,
    #[serde(default = "one_usize")]
    pub ny: usize,
    #[serde(default = "dirichlet")]
    pub left: BoundaryKind,
    #[serde(default = "dirichlet")]
    pub right: BoundaryKind,
    #[serde(default = "dirichlet")]
    pub bottom: BoundaryKind,
    #[serde(default = "dirichlet")]
    pub top: BoundaryKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySection {
    Zero,
    Constant {
        vx: f64,
        #[serde(default)]
        vy: f64,
        #[serde(default)]
        zero_on_neumann: bool,
    },
    /// `V = slope * x + offset`, componentwise.
    Linear {
        #[serde(default)]
        slope_x: f64,
        #[serde(default)]
        slope_y: f64,
        #[serde(default)]
        offset_x: f64,
        #[serde(default)]
        offset_y: f64,
        #[serde(default)]
        zero_on_neumann: bool,
    },
    CrowdMotion {
        blend_width: f64,
    },
    /// CSV `face,value` of normal face velocities.
    Table { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionSection {
    Zero,
    Constant {
        c: f64,
    },
    /// `g(r) = a - b r`.
    LinearDecay {
        a: f64,
        b: f64,
    },
    /// `g(r) = rate r (1 - r)`.
    Logistic {
        rate: f64,
    },
    /// CSV `r,g`, interpolated linearly in `r`. The modulus is declared as a
    /// constant or as a CSV `t,modulus`.
    Table {
        file: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modulus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modulus_file: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSection {
    Zero,
    Constant {
        value: f64,
    },
    /// `value` on the box, `background` elsewhere.
    Box {
        value: f64,
        #[serde(default)]
        background: f64,
        x_min: f64,
        x_max: f64,
        #[serde(default = "neg_inf")]
        y_min: f64,
        #[serde(default = "pos_inf")]
        y_max: f64,
    },
    /// CSV `cell,value`, constant in time.
    Table { file: PathBuf },
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        value: f64,
    },
    Box {
        value: f64,
        #[serde(default)]
        background: f64,
        x_min: f64,
        x_max: f64,
        #[serde(default = "neg_inf")]
        y_min: f64,
        #[serde(default = "pos_inf")]
        y_max: f64,
    },
    /// `amplitude sin^2` bump on `(x_min, x_max)` in the first coordinate.
    Bump {
        amplitude: f64,
        x_min: f64,
        x_max: f64,
        #[serde(default)]
        background: f64,
    },
    /// CSV `cell,value`.
    Table { file: PathBuf },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Constant { value: 0.0 }
    }
}

fn reaction_tol() -> f64 {
    1e-12
}
fn reaction_max_iter() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tau: f64,
    #[serde(default = "reaction_tol")]
    pub reaction_tol: f64,
    #[serde(default = "reaction_max_iter")]
    pub reaction_max_iter: usize,
}

fn solver_tol() -> f64 {
    1e-10
}
fn solver_max_iter() -> usize {
    50
}
fn cauchy_tol() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "solver_tol")]
    pub tol: f64,
    #[serde(default = "solver_max_iter")]
    pub max_iter: usize,
    /// Final regularization; reached by a factor-10 schedule from `1e-2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_epsilon: Option<f64>,
    /// Explicit decreasing schedule, exclusive with `graph_epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub linear_solver: LinearSolver,
    #[serde(default = "two_phase")]
    pub graph: GraphKind,
    #[serde(default = "cauchy_tol")]
    pub cauchy_tol: f64,
}

fn two_phase() -> GraphKind {
    GraphKind::TwoPhase
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: solver_tol(),
            max_iter: solver_max_iter(),
            graph_epsilon: None,
            schedule: None,
            linear_solver: LinearSolver::default(),
            graph: two_phase(),
            cauchy_tol: cauchy_tol(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Run directory below the output root; defaults to the config file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write every n-th snapshot (the last step is always written).
    #[serde(default = "one_usize")]
    pub snapshot_every: usize,
    #[serde(default = "yes")]
    pub long_csv: bool,
}

fn suite_all() -> String {
    "all".into()
}
fn seed() -> u64 {
    2024
}
fn pack_size() -> usize {
    20
}
fn pack_cells() -> usize {
    100
}
fn pack_tau() -> f64 {
    0.01
}
fn tol_c() -> f64 {
    1e-8
}
fn stability_tol() -> f64 {
    1e-7
}
fn deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn tol_p() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "suite_all")]
    pub suite: String,
    #[serde(default = "seed")]
    pub seed: u64,
    #[serde(default = "pack_size")]
    pub pack_size: usize,
    #[serde(default = "pack_cells")]
    pub pack_cells: usize,
    #[serde(default = "one")]
    pub pack_horizon: f64,
    #[serde(default = "pack_tau")]
    pub pack_tau: f64,
    #[serde(default = "tol_c")]
    pub tol: f64,
    #[serde(default = "stability_tol")]
    pub stability_tol: f64,
    #[serde(default = "deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "tol_p")]
    pub tol_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_cmp: Option<f64>,
    #[serde(default = "one")]
    pub c_e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<f64>>,
    /// Second run config; contraction and comparison then compare the two
    /// runs instead of the seeded pack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_with: Option<PathBuf>,
}

impl Default for VerifySection {
    fn default() -> Self {
        toml::Table::new().try_into().expect("all verify keys have defaults")
    }
}

pub const SUITES: [&str; 8] = [
    "contraction",
    "comparison",
    "one_phase",
    "congestion_free",
    "stability",
    "entropy",
    "negative_controls",
    "all",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridSection,
    pub velocity: VelocitySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<ReactionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSection>,
    pub initial: InitialSection,
    pub time: TimeSection,
    pub solver: SolverSection,
    pub output: OutputSection,
    pub verify: VerifySection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn section<S: DeserializeOwned>(table: &toml::Table, name: &str, required: bool, errors: &mut Vec<String>) -> Option<S> {
    match table.get(name) {
        None if required => {
            errors.push(format!("[{name}]: missing section"));
            None
        }
        None => None,
        Some(v) if !v.is_table() => {
            errors.push(format!("[{name}]: expected a table"));
            None
        }
        Some(v) => match v.clone().try_into::<S>() {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("[{name}]: {}", e.message().trim()));
                None
            }
        },
    }
}

fn defaulted<S: DeserializeOwned>(table: &toml::Table, name: &str, errors: &mut Vec<String>) -> Option<S> {
    let empty = toml::Value::Table(toml::Table::new());
    let v = table.get(name).unwrap_or(&empty);
    if !v.is_table() {
        errors.push(format!("[{name}]: expected a table"));
        return None;
    }
    match v.clone().try_into::<S>() {
        Ok(s) => Some(s),
        Err(e) => {
            errors.push(format!("[{name}]: {}", e.message().trim()));
            None
        }
    }
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}

/// Parses and validates config text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let mut errors = Vec::new();
    const KNOWN: [&str; 9] = ["grid", "velocity", "reaction", "source", "initial", "time", "solver", "output", "verify"];
    for key in table.keys() {
        if !KNOWN.contains(&key.as_str()) {
            errors.push(format!("[{key}]: unknown section"));
        }
    }
    let grid = section::<GridSection>(&table, "grid", true, &mut errors);
    let velocity = match table.get("velocity") {
        None => Some(VelocitySection::Zero),
        Some(_) => section::<VelocitySection>(&table, "velocity", true, &mut errors),
    };
    let reaction = section::<ReactionSection>(&table, "reaction", false, &mut errors);
    let source = section::<SourceSection>(&table, "source", false, &mut errors);
    let initial = match table.get("initial") {
        None => Some(InitialSection::default()),
        Some(_) => section::<InitialSection>(&table, "initial", true, &mut errors),
    };
    let time = section::<TimeSection>(&table, "time", true, &mut errors);
    let solver = defaulted::<SolverSection>(&table, "solver", &mut errors);
    let output = defaulted::<OutputSection>(&table, "output", &mut errors);
    let verify = defaulted::<VerifySection>(&table, "verify", &mut errors);
    if table.contains_key("reaction") && table.contains_key("source") {
        errors.push("[reaction], [source]: give at most one of the two".into());
    }
    match (grid, velocity, initial, time, solver, output, verify) {
        (Some(grid), Some(velocity), Some(initial), Some(time), Some(solver), Some(output), Some(verify))
            if errors.is_empty() =>
        {
            let cfg = RunConfig {
                grid,
                velocity,
                reaction,
                source,
                initial,
                time,
                solver,
                output,
                verify,
                base_dir: base_dir.to_path_buf(),
            };
            let errs = cfg.validation_errors();
            if errs.is_empty() {
                Ok(cfg)
            } else {
                Err(Error::ConfigValidation(errs))
            }
        }
        _ => Err(Error::ConfigValidation(errors)),
    }
}

/// TOML text that parses back to `cfg`.
pub fn write_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::InvalidParameter(format!("config serialization: {e}")))
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("{}: row {}: expected two numeric columns", path.display(), i + 2)))
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}

/// Values indexed by the integer first column, which must cover `0..n`.
fn read_indexed(path: &Path, n: usize, what: &str) -> Result<Vec<f64>> {
    let rows = read_pairs(path)?;
    if rows.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{}: expected {n} {what} values, found {}",
            path.display(),
            rows.len()
        )));
    }
    let mut out = vec![f64::NAN; n];
    for (k, v) in rows {
        let i = k as usize;
        if k < 0.0 || k.fract() != 0.0 || i >= n {
            return Err(Error::InvalidParameter(format!("{}: bad {what} index {k}", path.display())));
        }
        out[i] = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter(format!("{}: duplicate {what} index", path.display())));
    }
    Ok(out)
}

fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let k = table.partition_point(|(a, _)| *a <= x);
    if k == 0 {
        return table[0].1;
    }
    if k == table.len() {
        return table[k - 1].1;
    }
    let ((x0, y0), (x1, y1)) = (table[k - 1], table[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn sorted_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_pairs(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!("{}: empty table", path.display())));
    }
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(format!("{}: first column must increase", path.display())));
    }
    Ok(rows)
}

fn in_box(x: [f64; 2], dim: usize, b: (f64, f64, f64, f64)) -> bool {
    x[0] >= b.0 && x[0] <= b.1 && (dim == 1 || (x[1] >= b.2 && x[1] <= b.3))
}

impl RunConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn uses_files(&self) -> bool {
        matches!(self.velocity, VelocitySection::Table { .. })
            || matches!(self.initial, InitialSection::Table { .. })
            || matches!(self.source, Some(SourceSection::Table { .. }))
    }

    /// Every violation found, each prefixed with its key path.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            e.push(format!("grid.dim: must be 1 or 2, got {}", g.dim));
        }
        if !(g.lx > 0.0) || (g.dim == 2 && !(g.ly > 0.0)) {
            e.push("grid.lx/ly: extents must be positive".into());
        }
        if g.nx == 0 || g.ny == 0 {
            e.push("grid.nx/ny: cell counts must be positive".into());
        }
        if g.dim == 1 && g.ny != 1 {
            e.push("grid.ny: must be 1 for dim = 1".into());
        }
        let t = &self.time;
        if !(t.tau > 0.0) {
            e.push("time.tau: must be positive".into());
        }
        if !(t.horizon > 0.0) {
            e.push("time.T: must be positive".into());
        }
        if t.tau > 0.0 && t.horizon > 0.0 {
            if let Err(err) = steps_for(t.horizon, t.tau) {
                e.push(format!("time.T: {}", err.to_string().trim_start_matches("invalid parameter: ")));
            }
        }
        if !(t.reaction_tol > 0.0) {
            e.push("time.reaction_tol: must be positive".into());
        }
        let s = &self.solver;
        if s.graph_epsilon.is_some() && s.schedule.is_some() {
            e.push("solver.graph_epsilon: give either graph_epsilon or schedule".into());
        }
        if let Some(eps) = s.graph_epsilon {
            if !(eps > 0.0 && eps < 1.0) {
                e.push("solver.graph_epsilon: must lie in (0, 1)".into());
            }
        }
        if let Some(sch) = &s.schedule {
            if sch.is_empty() || sch.iter().any(|x| !(*x > 0.0 && *x < 1.0)) || sch.windows(2).any(|w| w[1] >= w[0]) {
                e.push("solver.schedule: must be a nonempty strictly decreasing list in (0, 1)".into());
            }
        }
        if !(s.tol > 0.0) || s.max_iter == 0 || !(s.cauchy_tol > 0.0) {
            e.push("solver.tol/max_iter/cauchy_tol: must be positive".into());
        }
        if self.output.snapshot_every == 0 {
            e.push("output.snapshot_every: must be positive".into());
        }
        let v = &self.verify;
        if !SUITES.contains(&v.suite.as_str()) {
            e.push(format!("verify.suite: unknown suite `{}`", v.suite));
        }
        if v.deltas.iter().any(|d| !(*d > 0.0)) {
            e.push("verify.deltas: must be positive".into());
        }
        if let Some(k) = &v.k_grid {
            if k.iter().any(|k| !(k.abs() < 1.0)) {
                e.push("verify.k_grid: levels must lie in (-1, 1)".into());
            }
        }
        if v.pack_cells < 5 || v.pack_size == 0 || !(v.pack_tau > 0.0) || !(v.pack_horizon > 0.0) {
            e.push("verify.pack_*: pack needs at least 5 cells, one pair and positive times".into());
        } else if let Err(err) = steps_for(v.pack_horizon, v.pack_tau) {
            e.push(format!("verify.pack_horizon: {}", err.to_string().trim_start_matches("invalid parameter: ")));
        }
        if let Some(p) = &v.compare_with {
            if !self.resolve(p).is_file() {
                e.push(format!("verify.compare_with: file not found: {}", p.display()));
            }
        }
        let mut file_key = |key: &str, p: &Path| {
            if !self.resolve(p).is_file() {
                e.push(format!("{key}: file not found: {}", p.display()));
                false
            } else {
                true
            }
        };
        let mut files_ok = true;
        if let VelocitySection::Table { file } = &self.velocity {
            files_ok &= file_key("velocity.file", file);
        }
        if let InitialSection::Table { file } = &self.initial {
            files_ok &= file_key("initial.file", file);
        }
        if let Some(SourceSection::Table { file }) = &self.source {
            files_ok &= file_key("source.file", file);
        }
        if let Some(ReactionSection::Table { file, modulus, modulus_file }) = &self.reaction {
            files_ok &= file_key("reaction.file", file);
            match (modulus, modulus_file) {
                (None, None) | (Some(_), Some(_)) => e.push("reaction.modulus: declare exactly one of modulus, modulus_file".into()),
                (None, Some(m)) => files_ok &= file_key("reaction.modulus_file", m),
                _ => {}
            }
        }
        if let VelocitySection::CrowdMotion { blend_width } = self.velocity {
            if !(blend_width > 0.0) {
                e.push("velocity.blend_width: must be positive".into());
            }
        }
        if e.is_empty() && files_ok {
            // builds the full problem: table lengths, admissibility, |u0| <= 1
            if let Err(err) = self.build_problem(0) {
                e.push(format!("problem: {err}"));
            }
        }
        e
    }

    /// Grid refined by `2^level` per axis.
    pub fn build_grid(&self, level: usize) -> Result<StructuredGrid<f64>> {
        let g = &self.grid;
        let m = 1usize << level;
        if g.dim == 1 {
            StructuredGrid::interval(g.lx, g.nx * m, g.left, g.right)
        } else {
            StructuredGrid::rectangle([g.lx, g.ly], [g.nx * m, g.ny * m], [g.left, g.right, g.bottom, g.top])
        }
    }

    fn build_velocity(&self, grid: &StructuredGrid<f64>) -> Result<VelocityField<f64>> {
        Ok(match &self.velocity {
            VelocitySection::Zero => VelocityField::zero(grid),
            VelocitySection::Constant { vx, vy, zero_on_neumann } => {
                let v = VelocityField::constant(grid, [*vx, *vy])?;
                if *zero_on_neumann {
                    v.zero_on_neumann(grid)
                } else {
                    v
                }
            }
            VelocitySection::Linear {
                slope_x,
                slope_y,
                offset_x,
                offset_y,
                zero_on_neumann,
            } => {
                let v = VelocityField::linear(grid, [*slope_x, *slope_y], [*offset_x, *offset_y])?;
                if *zero_on_neumann {
                    v.zero_on_neumann(grid)
                } else {
                    v
                }
            }
            VelocitySection::CrowdMotion { blend_width } => crowd_motion_field(grid, *blend_width)?,
            VelocitySection::Table { file } => {
                let vals = read_indexed(&self.resolve(file), grid.n_faces(), "face")?;
                VelocityField::new(grid, vals)?
            }
        })
    }

    fn build_initial(&self, grid: &StructuredGrid<f64>) -> Result<ScalarField<f64>> {
        let dim = grid.dimension();
        let u0 = match &self.initial {
            InitialSection::Constant { value } => ScalarField::constant(grid, *value),
            InitialSection::Box {
                value,
                background,
                x_min,
                x_max,
                y_min,
                y_max,
            } => ScalarField::from_fn(grid, |_, x| {
                if in_box(x, dim, (*x_min, *x_max, *y_min, *y_max)) {
                    *value
                } else {
                    *background
                }
            }),
            InitialSection::Bump {
                amplitude,
                x_min,
                x_max,
                background,
            } => ScalarField::from_fn(grid, |_, x| {
                if x[0] > *x_min && x[0] < *x_max {
                    background + amplitude * (std::f64::consts::PI * (x[0] - x_min) / (x_max - x_min)).sin().powi(2)
                } else {
                    *background
                }
            }),
            InitialSection::Table { file } => {
                ScalarField::from_vec(grid, read_indexed(&self.resolve(file), grid.n_cells(), "cell")?)?
            }
        };
        if u0.values().iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter("initial density must satisfy |u0| <= 1".into()));
        }
        Ok(u0)
    }

    fn build_source(&self, grid: &StructuredGrid<f64>) -> Result<Source<f64>> {
        if let Some(r) = &self.reaction {
            let g = match r {
                ReactionSection::Zero => ReactionTerm::zero(),
                ReactionSection::Constant { c } => ReactionTerm::constant(*c),
                ReactionSection::LinearDecay { a, b } => ReactionTerm::linear_decay(*a, *b),
                ReactionSection::Logistic { rate } => ReactionTerm::logistic(*rate),
                ReactionSection::Table {
                    file,
                    modulus,
                    modulus_file,
                } => {
                    let table = sorted_table(&self.resolve(file))?;
                    let label = format!("table({})", file.display());
                    match (modulus, modulus_file) {
                        (Some(m), _) => {
                            let m = *m;
                            ReactionTerm::new(label, move |_, _, r| interpolate(&table, r), move |_| m)
                        }
                        (None, Some(mf)) => {
                            let mt = sorted_table(&self.resolve(mf))?;
                            ReactionTerm::new(label, move |_, _, r| interpolate(&table, r), move |t| interpolate(&mt, t))
                        }
                        (None, None) => {
                            return Err(Error::InvalidParameter("reaction table needs a declared modulus".into()))
                        }
                    }
                }
            };
            return Ok(Source::Reaction(g));
        }
        let dim = grid.dimension();
        Ok(Source::Field(match self.source.as_ref().unwrap_or(&SourceSection::Zero) {
            SourceSection::Zero => SourceField::zero(),
            SourceSection::Constant { value } => SourceField::constant(*value),
            SourceSection::Box {
                value,
                background,
                x_min,
                x_max,
                y_min,
                y_max,
            } => {
                let (v, bg, b) = (*value, *background, (*x_min, *x_max, *y_min, *y_max));
                SourceField::from_space_time("box", grid, move |_, x| if in_box(x, dim, b) { v } else { bg })
            }
            SourceSection::Table { file } => SourceField::steady(
                format!("table({})", file.display()),
                ScalarField::from_vec(grid, read_indexed(&self.resolve(file), grid.n_cells(), "cell")?)?,
            ),
        }))
    }

    /// Solver parameters with every regularization scale divided by `2^level`.
    pub fn solver_params(&self, level: usize) -> SolverParams<f64> {
        let s = &self.solver;
        let schedule = match (&s.schedule, s.graph_epsilon) {
            (Some(sch), _) => sch.clone(),
            (None, Some(eps)) => {
                if eps >= 1e-2 {
                    vec![eps]
                } else {
                    geometric_schedule(1e-2, eps, 10.0)
                }
            }
            (None, None) => crate::stationary::default_schedule(),
        };
        let m = (1usize << level) as f64;
        SolverParams {
            tol: s.tol,
            max_iter: s.max_iter,
            linear_solver: s.linear_solver,
            schedule: schedule.into_iter().map(|e| e / m).collect(),
            kind: s.graph,
            cauchy_tol: s.cauchy_tol,
        }
    }

    /// The evolution problem at refinement `level`: `2^level` times the cells
    /// per axis, `tau / 2^level` and `eps / 2^level`. File-backed data exist
    /// only at level 0.
    pub fn build_problem(&self, level: usize) -> Result<EvolutionProblem<f64>> {
        if level > 0 && self.uses_files() {
            return Err(Error::InvalidParameter("file-backed fields cannot be refined".into()));
        }
        let grid = self.build_grid(level)?;
        let velocity = self.build_velocity(&grid)?;
        let u0 = self.build_initial(&grid)?;
        let source = self.build_source(&grid)?;
        let tau = self.time.tau / (1usize << level) as f64;
        let mut prob = EvolutionProblem::new(grid, velocity, u0, self.time.horizon, tau, source);
        prob.solver = self.solver_params(level);
        prob.reaction_tol = self.time.reaction_tol;
        prob.reaction_max_iter = self.time.reaction_max_iter;
        prob.validate()?;
        Ok(prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nnx = 20\n[time]\nT = 0.1\ntau = 0.01\n";

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.grid.dim, 1);
        assert_eq!(c.grid.left, BoundaryKind::Dirichlet);
        assert_eq!(c.velocity, VelocitySection::Zero);
        assert_eq!(c.solver.tol, 1e-10);
        assert_eq!(c.solver.max_iter, 50);
        assert_eq!(c.verify.pack_size, 20);
        assert_eq!(c.time.reaction_tol, 1e-12);
        let p = c.build_problem(0).unwrap();
        assert_eq!(p.n_steps().unwrap(), 10);
        assert!((p.solver.final_epsilon() - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn non_integral_horizon_is_rejected() {
        let e = parse("[grid]\nnx = 20\n[time]\nT = 1.0\ntau = 0.3\n").unwrap_err();
        match e {
            Error::ConfigValidation(v) => assert!(v.iter().any(|m| m.contains("T not an integer multiple of tau")), "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_grid_is_named() {
        match parse("[time]\nT = 1.0\ntau = 0.1\n").unwrap_err() {
            Error::ConfigValidation(v) => assert!(v.iter().any(|m| m.contains("[grid]")), "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn all_violations_are_collected() {
        let text = "[grid]\nnx = 0\ndim = 3\n[time]\nT = 1.0\ntau = 0.3\n[solver]\ngraph_epsilon = 2.0\n[verify]\nsuite = \"bogus\"\n";
        match parse(text).unwrap_err() {
            Error::ConfigValidation(v) => {
                for key in ["grid.dim", "grid.nx", "time.T", "solver.graph_epsilon", "verify.suite"] {
                    assert!(v.iter().any(|m| m.starts_with(key)), "{key} missing in {v:?}");
                }
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn type_errors_in_several_sections_are_all_reported() {
        let text = "[grid]\nnx = \"ten\"\n[time]\nT = 1.0\ntau = \"x\"\n[bogus]\na = 1\n";
        match parse(text).unwrap_err() {
            Error::ConfigValidation(v) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v[0].starts_with("[bogus]"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        match parse("[grid]\nnx = 20\n[time\nT = 1\n").unwrap_err() {
            Error::ConfigParse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column >= 1);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_file_is_reported_with_key() {
        let text = format!("{MINIMAL}[velocity]\nkind = \"table\"\nfile = \"nope.csv\"\n");
        match parse(&text).unwrap_err() {
            Error::ConfigValidation(v) => assert!(v.iter().any(|m| m.starts_with("velocity.file")), "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn velocity_table_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("v.csv"), "face,value\n0,0\n1,0\n").unwrap();
        let text = format!("{MINIMAL}[velocity]\nkind = \"table\"\nfile = \"v.csv\"\n");
        match parse_config_str(&text, dir.path()).unwrap_err() {
            Error::ConfigValidation(v) => assert!(v.iter().any(|m| m.contains("expected 21 face values")), "{v:?}"),
            other => panic!("{other}"),
        }
        let rows: String = (0..21).map(|i| format!("{i},0.0\n")).collect();
        std::fs::write(dir.path().join("v.csv"), format!("face,value\n{rows}")).unwrap();
        assert!(parse_config_str(&text, dir.path()).is_ok());
    }

    #[test]
    fn reaction_and_source_are_exclusive() {
        let text = format!("{MINIMAL}[reaction]\nkind = \"zero\"\n[source]\nkind = \"zero\"\n");
        assert!(matches!(parse(&text), Err(Error::ConfigValidation(_))));
    }

    #[test]
    fn reaction_table_interpolates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("g.csv"), "r,g\n-1,2\n1,0\n").unwrap();
        let text = format!("{MINIMAL}[reaction]\nkind = \"table\"\nfile = \"g.csv\"\nmodulus = 0.0\n");
        let c = parse_config_str(&text, dir.path()).unwrap();
        match c.build_problem(0).unwrap().source {
            Source::Reaction(g) => {
                assert!((g.eval(0.0, 0, 0.5) - 0.5).abs() < 1e-15);
                assert_eq!(g.eval(0.0, 0, 3.0), 0.0);
            }
            _ => panic!("expected reaction"),
        }
    }

    #[test]
    fn refinement_halves_everything() {
        let c = parse(MINIMAL).unwrap();
        let p = c.build_problem(2).unwrap();
        assert_eq!(p.grid.n_cells(), 80);
        assert!((p.tau - 0.0025).abs() < 1e-15);
        assert!((p.solver.final_epsilon() - 0.25e-8).abs() < 1e-20);
    }

    #[test]
    fn written_config_parses_back() {
        let text = format!(
            "[grid]\nnx = 20\nleft = \"neumann\"\n[time]\nT = 0.1\ntau = 0.01\n[velocity]\nkind = \"constant\"\nvx = 0.5\nzero_on_neumann = true\n[source]\nkind = \"box\"\nvalue = 0.3\nx_min = 0.2\nx_max = 0.4\n[solver]\nschedule = [1e-2, 1e-4, 1e-6]\n[verify]\nk_grid = [0.5]\n"
        );
        let c = parse(&text).unwrap();
        let back = parse(&write_config(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
