//! The four CLI commands. Each writes into one run directory and returns
//! the summary it wrote.

use super::config::{parse_config, write_config, RunConfig};
use super::output::{write_json, write_snapshot, MassEntry, TrajectoryWriter};
use crate::error::{Error, Result};
use crate::evolution::{run_evolution, run_evolution_observed, EvolutionProblem, Source, StepReport, Trajectory};
use crate::geometry::ScalarField;
use crate::stationary::{energy_estimate_check, resolvent_a, EnergyReport, StationaryProblem};
use crate::verification::{
    check_comparison, check_congestion_free, check_contraction, check_one_phase, check_stability, comparison_pack,
    entropy_residual, negative_controls, CongestionOptions, EntropyOptions, PropertyReport, TOL_C,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest grid a convergence study may build.
pub const MAX_CELLS: usize = 1_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct Skipped {
    pub property: String,
    pub scenario: String,
    pub reason: String,
}

/// Contents of `summary.json`. Wall-clock data go to `timings.json` so that
/// this document is a deterministic function of the config.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    /// `completed` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: Vec<StepReport>,
    pub mass_ledger: Vec<MassEntry>,
    pub verdicts: Vec<PropertyReport>,
    pub skipped: Vec<Skipped>,
    /// Every verdict as expected (expected-fail controls count as passes).
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<serde_json::Value>,
}

impl RunSummary {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: cfg.clone(),
            status: "completed".into(),
            error: None,
            steps: Vec::new(),
            mass_ledger: Vec::new(),
            verdicts: Vec::new(),
            skipped: Vec::new(),
            passed: true,
            results: None,
        }
    }

    fn finish(&mut self) {
        self.passed = self.status == "completed" && self.verdicts.iter().all(PropertyReport::as_expected);
    }
}

#[derive(Default, Serialize)]
struct Timings {
    total_seconds: f64,
    phases: BTreeMap<String, f64>,
}

struct Clock {
    start: Instant,
    timings: Timings,
}

impl Clock {
    fn start() -> Self {
        Self {
            start: Instant::now(),
            timings: Timings::default(),
        }
    }

    fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        *self.timings.phases.entry(phase.into()).or_default() += t.elapsed().as_secs_f64();
        r
    }

    fn write(mut self, dir: &Path) -> Result<()> {
        self.timings.total_seconds = self.start.elapsed().as_secs_f64();
        write_json(&dir.join("timings.json"), &self.timings)
    }
}

fn prepare(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), write_config(cfg)?)?;
    Ok(())
}

/// Writes the summary and timings, then turns a failure into the error.
fn conclude<T>(dir: &Path, mut summary: RunSummary, clock: Clock, outcome: Result<T>) -> Result<RunSummary> {
    if let Err(e) = &outcome {
        summary.status = "failed".into();
        summary.error = Some(e.to_string());
    }
    summary.finish();
    write_json(&dir.join("summary.json"), &summary)?;
    clock.write(dir)?;
    outcome.map(|_| summary)
}

/// Runs a batch concurrently, one scoped thread per chunk; results keep the
/// input order.
fn par_map<I: Sync, O: Send>(items: &[I], f: impl Fn(&I) -> Result<O> + Sync) -> Result<Vec<O>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    let parts: Vec<Result<Vec<O>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<O>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn simulation_verdicts(traj: &Trajectory<f64>) -> Vec<PropertyReport> {
    let scale = traj.masses().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mass = traj.reports().iter().map(|r| TOL_C * scale - r.mass_residual.abs()).collect();
    let bounds: Vec<f64> = traj.densities().iter().map(|u| 1.0 - u.sup_norm()).collect();
    vec![
        PropertyReport::from_margins("mass_balance", "config", mass, 0.0),
        PropertyReport::from_margins("density_bounds", "config", bounds, 1e-12),
    ]
}

/// Runs the configured evolution, streaming snapshots and the mass ledger.
/// On a solver failure the files written so far stay on disk and the summary
/// records the error.
pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let mut clock = Clock::start();
    prepare(dir, cfg)?;
    let prob = cfg.build_problem(0)?;
    let n = prob.n_steps()?;
    let mut summary = RunSummary::new("simulate", cfg);
    let mut writer = TrajectoryWriter::create(dir, &prob.grid, cfg.output.snapshot_every, cfg.output.long_csv)?;
    let init = MassEntry::initial(prob.u0.integral(&prob.grid));
    writer.record(0, n == 0, &init, &prob.u0, &ScalarField::zeros(&prob.grid))?;
    summary.mass_ledger.push(init);
    let mut steps = Vec::new();
    let mut ledger = Vec::new();
    let run = clock.time("evolution", || {
        run_evolution_observed(&prob, |r, u, p| {
            let e = MassEntry::after(r);
            writer.record(r.step + 1, r.step + 1 == n, &e, u, p)?;
            steps.push(r.clone());
            ledger.push(e);
            Ok(())
        })
    });
    summary.steps = steps;
    summary.mass_ledger.extend(ledger);
    if let Ok(traj) = &run {
        summary.verdicts = simulation_verdicts(traj);
    }
    conclude(dir, summary, clock, run)
}

struct VerifyContext<'a> {
    cfg: &'a RunConfig,
    prob: EvolutionProblem<f64>,
    traj: Option<Trajectory<f64>>,
    pack: Option<Vec<(String, Trajectory<f64>, Trajectory<f64>)>>,
    lenient: bool,
    seed: u64,
}

impl VerifyContext<'_> {
    fn trajectory(&mut self) -> Result<&Trajectory<f64>> {
        if self.traj.is_none() {
            self.traj = Some(run_evolution(&self.prob)?);
        }
        Ok(self.traj.as_ref().unwrap())
    }

    fn pack(&mut self) -> Result<&[(String, Trajectory<f64>, Trajectory<f64>)]> {
        if self.pack.is_none() {
            let v = &self.cfg.verify;
            let pairs = comparison_pack::<f64>(self.seed, v.pack_size, v.pack_cells, v.pack_horizon, v.pack_tau)?;
            let runs = par_map(&pairs, |p| Ok((p.id.clone(), run_evolution(&p.lower)?, run_evolution(&p.upper)?)))?;
            self.pack = Some(runs);
        }
        Ok(self.pack.as_deref().unwrap())
    }

    fn partner(&self) -> Result<Option<(Trajectory<f64>, Trajectory<f64>)>> {
        let Some(path) = &self.cfg.verify.compare_with else {
            return Ok(None);
        };
        let other = parse_config(&self.cfg.resolve(path))?.build_problem(0)?;
        let runs = par_map(&[&self.prob, &other], |p| run_evolution(p))?;
        let mut it = runs.into_iter();
        Ok(Some((it.next().unwrap(), it.next().unwrap())))
    }

    /// Hypothesis failures become skip records when running the `all` suite.
    fn applicable(&self, property: &str, r: Result<PropertyReport>, out: &mut RunSummary) -> Result<()> {
        match r {
            Ok(rep) => {
                out.verdicts.push(rep);
                Ok(())
            }
            Err(Error::InvalidScenario(reason)) if self.lenient => {
                out.skipped.push(Skipped {
                    property: property.into(),
                    scenario: "config".into(),
                    reason,
                });
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn run(&mut self, suite: &str, out: &mut RunSummary) -> Result<()> {
        let v = self.cfg.verify.clone();
        match suite {
            "contraction" | "comparison" => {
                if let Some((a, b)) = self.partner()? {
                    out.verdicts.push(if suite == "contraction" {
                        check_contraction(&a, &b, "config-pair", v.tol)?
                    } else {
                        check_comparison(&a, &b, "config-pair", v.tol)?
                    });
                } else {
                    for (id, a, b) in self.pack()? {
                        out.verdicts.push(if suite == "contraction" {
                            check_contraction(a, b, id, v.tol)?
                        } else {
                            check_comparison(a, b, id, v.tol)?
                        });
                    }
                }
            }
            "one_phase" => {
                let reaction = match &self.prob.source {
                    Source::Reaction(g) => Some(g.clone()),
                    Source::Field(_) => None,
                };
                let r = self.trajectory().and_then(|t| check_one_phase(t, reaction.as_ref(), "config", v.tol));
                self.applicable("one_phase", r, out)?;
            }
            "congestion_free" => {
                let opts = CongestionOptions {
                    tol_p: v.tol_p,
                    c_cmp: v.c_cmp,
                };
                let r = check_congestion_free(&self.prob, opts, "config");
                self.applicable("congestion_free", r, out)?;
            }
            "stability" => {
                out.verdicts.push(check_stability(&self.prob, &v.deltas, self.seed, "config", v.stability_tol)?);
            }
            "entropy" => {
                let mut opts = EntropyOptions::<f64> {
                    c_e: v.c_e,
                    ..EntropyOptions::default()
                };
                if let Some(k) = &v.k_grid {
                    opts.k_grid = k.clone();
                }
                let rep = entropy_residual(self.trajectory()?, &opts, "config")?;
                out.verdicts.push(rep);
                for (id, a, b) in self.pack()? {
                    out.verdicts.push(entropy_residual(a, &opts, &format!("{id}-lower"))?);
                    out.verdicts.push(entropy_residual(b, &opts, &format!("{id}-upper"))?);
                }
            }
            "negative_controls" => out.verdicts.extend(negative_controls(self.seed)?),
            "all" => {
                for s in ["contraction", "comparison", "one_phase", "congestion_free", "stability", "entropy", "negative_controls"] {
                    self.run(s, out)?;
                }
            }
            other => return Err(Error::InvalidParameter(format!("unknown suite `{other}`"))),
        }
        Ok(())
    }
}

/// Runs a verification suite; one JSON report per property goes to
/// `reports/`. `seed` overrides `[verify] seed`.
pub fn cmd_verify(cfg: &RunConfig, suite: &str, seed: Option<u64>, dir: &Path) -> Result<RunSummary> {
    if !super::config::SUITES.contains(&suite) {
        return Err(Error::InvalidParameter(format!(
            "unknown suite `{suite}` (expected one of {})",
            super::config::SUITES.join(", ")
        )));
    }
    let mut clock = Clock::start();
    prepare(dir, cfg)?;
    let mut summary = RunSummary::new("verify", cfg);
    let mut ctx = VerifyContext {
        cfg,
        prob: cfg.build_problem(0)?,
        traj: None,
        pack: None,
        lenient: suite == "all",
        seed: seed.unwrap_or(cfg.verify.seed),
    };
    let outcome = clock.time(suite, || ctx.run(suite, &mut summary));
    let reports = dir.join("reports");
    std::fs::create_dir_all(&reports)?;
    for (i, r) in summary.verdicts.iter().enumerate() {
        write_json(&reports.join(format!("{i:03}_{}_{}.json", r.property, r.scenario)), r)?;
    }
    conclude(dir, summary, clock, outcome)
}

/// Fixed-width table of the verdicts.
pub fn summary_table(summary: &RunSummary) -> String {
    let mut s = format!("{:<20} {:<34} {:>13} {:>10}  verdict\n", "property", "scenario", "worst_margin", "tolerance");
    for r in &summary.verdicts {
        let verdict = match (r.passed, r.expected_fail) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (expected)",
            (true, true) => "PASS (unexpected)",
        };
        s += &format!(
            "{:<20} {:<34} {:>13.4e} {:>10.1e}  {verdict}\n",
            r.property, r.scenario, r.worst_margin, r.tolerance
        );
    }
    for k in &summary.skipped {
        s += &format!("{:<20} {:<34} {:>13} {:>10}  SKIP: {}\n", k.property, k.scenario, "-", "-", k.reason);
    }
    s
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub cells: usize,
    pub h: f64,
    pub tau: f64,
    pub epsilon: f64,
    /// `max_i |u_k(t_i) - R u_{k+1}(t_i)|_1`; empty on the finest level.
    pub successive_l1: Option<f64>,
    pub successive_order: Option<f64>,
    /// `max_i |u_k(t_i) - R u_L(t_i)|_1` against the finest level `L`.
    pub finest_l1: Option<f64>,
    pub finest_order: Option<f64>,
}

fn max_distance(coarse: &Trajectory<f64>, fine: &Trajectory<f64>, factor: usize) -> f64 {
    let g = coarse.grid();
    (0..=coarse.n_steps())
        .map(|i| coarse.u(i).l1_distance(&fine.u(factor * i).restrict(fine.grid(), factor), g))
        .fold(0.0, f64::max)
}

fn order(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
        _ => None,
    }
}

/// Joint `(h, tau, eps)` halving over `levels` refinements of the config.
pub fn convergence_table(cfg: &RunConfig, levels: usize) -> Result<Vec<ConvergenceRow>> {
    if levels < 3 {
        return Err(Error::InvalidParameter(format!("a convergence study needs at least 3 refinements, got {levels}")));
    }
    let finest = cfg.build_grid(0)?.n_cells() * (1usize << (levels * cfg.grid.dim));
    if finest > MAX_CELLS {
        return Err(Error::ResourceGuard(format!("finest level would have {finest} cells (limit {MAX_CELLS})")));
    }
    let ks: Vec<usize> = (0..=levels).collect();
    let trajs = par_map(&ks, |k| run_evolution(&cfg.build_problem(*k)?))?;
    let last = trajs.last().unwrap();
    let mut rows: Vec<ConvergenceRow> = trajs
        .iter()
        .enumerate()
        .map(|(k, t)| ConvergenceRow {
            level: k,
            cells: t.grid().n_cells(),
            h: t.grid().h(),
            tau: t.tau(),
            epsilon: t.epsilon(),
            successive_l1: (k < levels).then(|| max_distance(t, &trajs[k + 1], 2)),
            successive_order: None,
            finest_l1: (k < levels).then(|| max_distance(t, last, 1 << (levels - k))),
            finest_order: None,
        })
        .collect();
    for k in 1..rows.len() {
        rows[k].successive_order = order(rows[k - 1].successive_l1, rows[k].successive_l1);
        rows[k].finest_order = order(rows[k - 1].finest_l1, rows[k].finest_l1);
    }
    Ok(rows)
}

/// Writes `convergence.csv` alongside the summary.
pub fn cmd_convergence(cfg: &RunConfig, levels: usize, dir: &Path) -> Result<RunSummary> {
    let mut clock = Clock::start();
    prepare(dir, cfg)?;
    let mut summary = RunSummary::new("convergence", cfg);
    let rows = clock.time("study", || convergence_table(cfg, levels));
    if let Ok(rows) = &rows {
        let mut w = csv::Writer::from_path(dir.join("convergence.csv"))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let diffs: Vec<f64> = rows.iter().filter_map(|r| r.successive_l1).collect();
        summary.results = Some(serde_json::json!({
            "levels": levels,
            "rows": rows,
            "successive_monotone": diffs.windows(2).all(|w| w[1] <= w[0]),
        }));
    }
    conclude(dir, summary, clock, rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryResults {
    pub newton_iterations: usize,
    pub picard_sweeps: usize,
    pub residual_norm: f64,
    pub complementarity: f64,
    pub epsilon: f64,
    pub cauchy: Vec<f64>,
    pub energy: EnergyReport,
}

/// Solves `u + tau A u = z + tau f` with `z = u0` and `f` the source at
/// `t = 0`; writes `stationary.csv` with `t,cell,x,y,u,p`.
pub fn cmd_stationary(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let mut clock = Clock::start();
    prepare(dir, cfg)?;
    let prob = cfg.build_problem(0)?;
    let mut summary = RunSummary::new("stationary", cfg);
    let grid = &prob.grid;
    let z = &prob.u0;
    let f = ScalarField::from_fn(grid, |c, _| match &prob.source {
        Source::Field(s) => s.eval(0.0, c),
        Source::Reaction(g) => g.eval(0.0, c, z.values()[c]),
    });
    let solved = clock.time("solve", || -> Result<StationaryResults> {
        let sol = resolvent_a(grid, &prob.velocity, z, &f, prob.tau, &prob.solver)?;
        let sp = StationaryProblem {
            grid,
            velocity: &prob.velocity,
            rhs: z.zip_map(&f, |a, b| a + prob.tau * b),
            tau: prob.tau,
            reg: prob.solver.final_regularization()?,
        };
        let energy = energy_estimate_check(&sol, &sp)?;
        write_snapshot(&dir.join("stationary.csv"), grid, 0.0, &sol.u, &sol.p)?;
        Ok(StationaryResults {
            newton_iterations: sol.newton_iterations,
            picard_sweeps: sol.picard_sweeps,
            residual_norm: sol.residual_norm,
            complementarity: sol.complementarity,
            epsilon: sol.epsilon,
            cauchy: sol.cauchy.clone(),
            energy,
        })
    });
    if let Ok(r) = &solved {
        summary.verdicts.push(
            PropertyReport::from_margins("energy_estimate", "config", vec![r.energy.c_grid - r.energy.energy_ratio], 0.0)
                .with_detail("energy_ratio", r.energy.energy_ratio)
                .with_detail("c_grid", r.energy.c_grid),
        );
        summary.results = Some(serde_json::to_value(r)?);
    }
    conclude(dir, summary, clock, solved)
}
