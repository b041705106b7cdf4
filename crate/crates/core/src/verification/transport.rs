//! Pure reaction-transport reference solver and the congestion-free check.
//!
//! The oracle assembles its own implicit upwind operator and solves it by
//! Gauss-Seidel sweeps; it shares nothing with the pressure solver.

use super::PropertyReport;
use crate::error::{Error, Result};
use crate::evolution::{regularization_allowance, run_evolution, time_average_source, EvolutionProblem, Source, Trajectory};
use crate::geometry::{BoundaryKind, ScalarField, StructuredGrid};
use crate::reaction::{check_conditions, ReactionTerm};
use crate::scalar::Real;
use crate::velocity::VelocityField;
use serde::Serialize;

struct UpwindRow<T> {
    diag: T,
    inflow: Vec<(usize, T)>,
}

/// Rows of `I + tau div_h(. V)` with zero inflow from outside.
fn upwind_rows<T: Real>(grid: &StructuredGrid<T>, v: &VelocityField<T>, tau: T) -> Vec<UpwindRow<T>> {
    let vol = grid.cell_volume();
    let mut rows: Vec<UpwindRow<T>> = (0..grid.n_cells())
        .map(|_| UpwindRow {
            diag: T::one(),
            inflow: Vec::new(),
        })
        .collect();
    for (id, f) in grid.faces().iter().enumerate() {
        let flux = v.face_values()[id] * f.area / vol * tau;
        match (f.low, f.high) {
            (Some(l), Some(h)) => {
                if flux > T::zero() {
                    rows[l].diag += flux;
                    rows[h].inflow.push((l, flux));
                } else if flux < T::zero() {
                    rows[h].diag -= flux;
                    rows[l].inflow.push((h, -flux));
                }
            }
            (Some(c), None) => {
                if flux > T::zero() && grid.boundary_kind(id) == Some(BoundaryKind::Dirichlet) {
                    rows[c].diag += flux;
                }
            }
            (None, Some(c)) => {
                if flux < T::zero() && grid.boundary_kind(id) == Some(BoundaryKind::Dirichlet) {
                    rows[c].diag -= flux;
                }
            }
            (None, None) => {}
        }
    }
    rows
}

fn sweep_solve<T: Real>(rows: &[UpwindRow<T>], rhs: &[T], x: &mut [T]) -> Result<()> {
    let tol = T::lit(1e-14);
    for _ in 0..100_000 {
        let mut change = T::zero();
        for (c, r) in rows.iter().enumerate() {
            let mut s = rhs[c];
            for (n, w) in &r.inflow {
                s += *w * x[*n];
            }
            let new = s / r.diag;
            change = change.max((new - x[c]).abs());
            x[c] = new;
        }
        if change <= tol {
            return Ok(());
        }
    }
    Err(Error::SolverFailure {
        iterations: 100_000,
        residual: f64::NAN,
        message: "upwind sweeps did not converge".into(),
    })
}

/// Implicit upwind transport `u_{i+1} + tau div(u_{i+1} V) = u_i + tau f_i`
/// with the same midpoint reaction fixed point as the full scheme, no pressure.
pub fn transport_oracle<T: Real>(prob: &EvolutionProblem<T>) -> Result<Trajectory<T>> {
    prob.validate()?;
    let n = prob.n_steps()?;
    let grid = &prob.grid;
    let tau = prob.tau;
    let rows = upwind_rows(grid, &prob.velocity, tau);
    let mut us = vec![prob.u0.clone()];
    let mut sources = Vec::with_capacity(n);
    for i in 0..n {
        let prev = us.last().unwrap().values().to_vec();
        let mut x = prev.clone();
        let f = match &prob.source {
            Source::Field(f) => {
                let f_i = time_average_source(f, grid.n_cells(), i, tau);
                let rhs: Vec<T> = prev.iter().zip(f_i.values()).map(|(u, f)| *u + tau * *f).collect();
                sweep_solve(&rows, &rhs, &mut x).map_err(|e| e.at_step(i))?;
                f_i.into_values()
            }
            Source::Reaction(g) => {
                let t_mid = tau * (T::from_usize(i).unwrap() + T::lit(0.5));
                let mut f_k: Vec<T> = prev.iter().enumerate().map(|(c, r)| g.eval(t_mid, c, *r)).collect();
                let mut k = 0;
                loop {
                    let rhs: Vec<T> = prev.iter().zip(&f_k).map(|(u, f)| *u + tau * *f).collect();
                    let before = x.clone();
                    sweep_solve(&rows, &rhs, &mut x).map_err(|e| e.at_step(i))?;
                    let incr: T = x.iter().zip(&before).map(|(a, b)| (*a - *b).abs()).sum::<T>() * grid.cell_volume();
                    k += 1;
                    if k > 1 && incr <= prob.reaction_tol {
                        break;
                    }
                    if k >= prob.reaction_max_iter {
                        return Err(Error::SolverFailure {
                            iterations: k,
                            residual: incr.to_f64_lossy(),
                            message: "oracle reaction fixed point did not converge".into(),
                        }
                        .at_step(i));
                    }
                    f_k = x.iter().enumerate().map(|(c, r)| g.eval(t_mid, c, *r)).collect();
                }
                f_k
            }
        };
        us.push(ScalarField::from_raw(x));
        sources.push(ScalarField::from_raw(f));
    }
    let ps = vec![ScalarField::zeros(grid); n + 1];
    Trajectory::from_parts(
        grid.clone(),
        prob.velocity.clone(),
        tau,
        T::zero(),
        us,
        ps,
        sources,
    )
}

fn as_reaction<T: Real>(source: &Source<T>) -> ReactionTerm<T> {
    match source {
        Source::Reaction(g) => g.clone(),
        Source::Field(f) => {
            let f = f.clone();
            ReactionTerm::new(f.label().to_string(), move |t, c, _| f.eval(t, c), |_| T::zero())
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CongestionOptions<T> {
    pub tol_p: T,
    /// Constant in `|u - u_oracle|_1 <= C_cmp h`; default `10 T |V|_inf`.
    pub c_cmp: Option<T>,
}

impl<T: Real> Default for CongestionOptions<T> {
    fn default() -> Self {
        Self {
            tol_p: T::lit(1e-6),
            c_cmp: None,
        }
    }
}

/// Pressure and oracle-distance margins without checking the hypotheses.
pub fn congestion_margins<T: Real>(prob: &EvolutionProblem<T>, opts: CongestionOptions<T>, scenario: &str) -> Result<PropertyReport> {
    let full = run_evolution(prob)?;
    let oracle = transport_oracle(prob)?;
    let g = &prob.grid;
    let c_cmp = opts
        .c_cmp
        .unwrap_or_else(|| T::lit(10.0) * prob.horizon * prob.velocity.sup_norm());
    let bound = c_cmp * g.h() + regularization_allowance(&full) * g.measure();
    let mut series = Vec::with_capacity(full.n_steps() + 1);
    let mut max_p = T::zero();
    let mut max_d = T::zero();
    for i in 0..=full.n_steps() {
        let p = full.p(i).sup_norm();
        let d = full.u(i).l1_distance(oracle.u(i), g);
        max_p = max_p.max(p);
        max_d = max_d.max(d);
        series.push((opts.tol_p - p).min(bound - d).to_f64_lossy());
    }
    Ok(PropertyReport::from_margins("congestion_free", scenario, series, 0.0)
        .with_detail("max_p_sup", max_p.to_f64_lossy())
        .with_detail("tol_p", opts.tol_p.to_f64_lossy())
        .with_detail("max_oracle_l1_distance", max_d.to_f64_lossy())
        .with_detail("distance_bound", bound.to_f64_lossy()))
}

/// Congestion-free regime: `div V >= g(., 1)` together with either
/// `g(., -1) >= div V` or the one-phase data `u0 >= 0`, `g(., 0) >= 0`.
pub fn check_congestion_free<T: Real>(prob: &EvolutionProblem<T>, opts: CongestionOptions<T>, scenario: &str) -> Result<PropertyReport> {
    let g = as_reaction(&prob.source);
    let rep = check_conditions(&g, &prob.grid, &prob.velocity, &prob.samples());
    let one_phase = prob.u0.min() >= T::zero() && rep.g5.passed;
    if !rep.g3.passed || !(rep.g4.passed || one_phase) {
        return Err(Error::InvalidScenario(format!(
            "congestion-free conditions fail (G3 margin {:e}, G4 margin {:e})",
            rep.g3.margin, rep.g4.margin
        )));
    }
    congestion_margins(prob, opts, scenario)
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementStudy {
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    /// `max_i |u^scheme_k(t_i) - R u^oracle_{k+1}(t_i)|_1`.
    pub distances: Vec<f64>,
    pub orders: Vec<f64>,
    pub max_pressure: Vec<f64>,
}

/// Joint `(h, tau)` halving: the full scheme at level `k` against the
/// oracle at level `k + 1`, restricted to level `k` by cell averaging.
/// `build(k)` must return the scenario with `2^k` times the base cells per
/// axis and `2^-k` times the base step.
pub fn congestion_refinement<T: Real>(
    build: impl Fn(usize) -> Result<EvolutionProblem<T>>,
    refinements: usize,
) -> Result<RefinementStudy> {
    let mut study = RefinementStudy {
        cells: Vec::new(),
        h: Vec::new(),
        tau: Vec::new(),
        distances: Vec::new(),
        orders: Vec::new(),
        max_pressure: Vec::new(),
    };
    let mut coarse = build(0)?;
    for k in 0..=refinements {
        let fine = build(k + 1)?;
        if fine.grid.n_cells() != coarse.grid.n_cells() * if coarse.grid.dimension() == 1 { 2 } else { 4 }
            || (fine.tau * T::lit(2.0) - coarse.tau).abs() > T::lit(1e-12) * coarse.tau
        {
            return Err(Error::InvalidParameter(format!("level {} is not a joint halving of level {k}", k + 1)));
        }
        let full = run_evolution(&coarse)?;
        let oracle = transport_oracle(&fine)?;
        let mut d = T::zero();
        for i in 0..=full.n_steps() {
            let r = oracle.u(2 * i).restrict(&fine.grid, 2);
            d = d.max(full.u(i).l1_distance(&r, &coarse.grid));
        }
        let mp = full.pressures().iter().fold(T::zero(), |m, p| m.max(p.sup_norm()));
        study.cells.push(coarse.grid.n_cells());
        study.h.push(coarse.grid.h().to_f64_lossy());
        study.tau.push(coarse.tau.to_f64_lossy());
        study.distances.push(d.to_f64_lossy());
        study.max_pressure.push(mp.to_f64_lossy());
        coarse = fine;
    }
    study.orders = study
        .distances
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    Ok(study)
}
