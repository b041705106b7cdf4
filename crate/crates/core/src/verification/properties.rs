use super::{ensure_comparable, PropertyReport};
use crate::error::{Error, Result};
use crate::evolution::{run_evolution, EvolutionProblem, Source, SourceField, Trajectory};
use crate::geometry::{ScalarField, StructuredGrid};
use crate::graphs::GraphRegularization;
use crate::reaction::{check_conditions, ReactionTerm};
use crate::scalar::Real;
use crate::stationary::{energy_estimate_check, solve_regularized, StationaryProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Integrated contraction margins with explicitly declared step sources:
/// `|u1_0 - u2_0|_1 + sum_{j<i} tau |f1_j - f2_j|_1 - |u1_i - u2_i|_1`.
pub fn contraction_margins<T: Real>(
    a: &Trajectory<T>,
    b: &Trajectory<T>,
    fa: &[ScalarField<T>],
    fb: &[ScalarField<T>],
) -> Result<Vec<f64>> {
    ensure_comparable(a, b)?;
    let n = a.n_steps();
    if fa.len() < n || fb.len() < n {
        return Err(Error::InvalidComparison("source sequences are shorter than the trajectories".into()));
    }
    let g = a.grid();
    let mut budget = a.u(0).l1_distance(b.u(0), g);
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for i in 0..n {
        budget += a.tau() * fa[i].l1_distance(&fb[i], g);
        let d = a.u(i + 1).l1_distance(b.u(i + 1), g);
        out.push((budget - d).to_f64_lossy());
    }
    Ok(out)
}

/// L1 contraction of two trajectories driven by their recorded sources.
pub fn check_contraction<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>, scenario: &str, tol: f64) -> Result<PropertyReport> {
    let m = contraction_margins(a, b, a.sources(), b.sources())?;
    Ok(PropertyReport::from_margins("contraction", scenario, m, tol))
}

/// `min_x (u2_i - u1_i)` after every step; no ordering hypothesis checked.
pub fn comparison_margins<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<Vec<f64>> {
    ensure_comparable(a, b)?;
    Ok((0..=a.n_steps())
        .map(|i| {
            a.u(i)
                .values()
                .iter()
                .zip(b.u(i).values())
                .map(|(x, y)| (*y - *x).to_f64_lossy())
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Ordering `u1 <= u2` for ordered data `u1_0 <= u2_0`, `f1 <= f2`.
pub fn check_comparison<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>, scenario: &str, tol: f64) -> Result<PropertyReport> {
    ensure_comparable(a, b)?;
    let ordered = |x: &ScalarField<T>, y: &ScalarField<T>| x.values().iter().zip(y.values()).all(|(p, q)| p <= q);
    if !ordered(a.u(0), b.u(0)) {
        return Err(Error::InvalidComparison("initial data are not ordered".into()));
    }
    if !a.sources().iter().zip(b.sources()).all(|(x, y)| ordered(x, y)) {
        return Err(Error::InvalidComparison("sources are not ordered".into()));
    }
    let m = comparison_margins(a, b)?;
    Ok(PropertyReport::from_margins("comparison", scenario, m, tol))
}

/// Per-step margins `min(min u, min p, eps/4 - max |p (1 - u)|)`, with the
/// three worst values recorded as details.
pub fn one_phase_margins<T: Real>(traj: &Trajectory<T>, scenario: &str, tol: f64) -> PropertyReport {
    let eps4 = traj.epsilon().to_f64_lossy() / 4.0;
    let mut worst_u = f64::INFINITY;
    let mut worst_p = f64::INFINITY;
    let mut worst_c: f64 = 0.0;
    let mut series = Vec::with_capacity(traj.n_steps() + 1);
    for i in 0..=traj.n_steps() {
        let u = traj.u(i);
        let p = traj.p(i);
        let mu = u.min().to_f64_lossy();
        let mp = p.min().to_f64_lossy();
        let mc = u
            .values()
            .iter()
            .zip(p.values())
            .map(|(u, p)| (*p * (T::one() - *u)).abs().to_f64_lossy())
            .fold(0.0, f64::max);
        worst_u = worst_u.min(mu);
        worst_p = worst_p.min(mp);
        worst_c = worst_c.max(mc);
        series.push(mu.min(mp).min(eps4 - mc));
    }
    PropertyReport::from_margins("one_phase", scenario, series, tol)
        .with_detail("min_u", worst_u)
        .with_detail("min_p", worst_p)
        .with_detail("max_p_times_one_minus_u", worst_c)
        .with_detail("complementarity_bound", eps4 + tol)
}

/// One-phase regime: requires `u0 >= 0` and nonnegative sources (or
/// `g(., 0) >= 0` when a reaction drives the run).
pub fn check_one_phase<T: Real>(
    traj: &Trajectory<T>,
    reaction: Option<&ReactionTerm<T>>,
    scenario: &str,
    tol: f64,
) -> Result<PropertyReport> {
    if traj.u(0).min() < T::zero() {
        return Err(Error::InvalidScenario("one-phase check needs u0 >= 0".into()));
    }
    match reaction {
        Some(g) => {
            let horizon = traj.tau() * T::from_usize(traj.n_steps()).unwrap();
            let samples = crate::reaction::SampleSpec::uniform(traj.grid(), horizon, traj.n_steps().clamp(1, 64), 64);
            if !check_conditions(g, traj.grid(), traj.velocity(), &samples).g5.passed {
                return Err(Error::InvalidScenario("one-phase check needs g(., 0) >= 0".into()));
            }
        }
        None => {
            if traj.sources().iter().any(|f| f.min() < T::zero()) {
                return Err(Error::InvalidScenario("one-phase check needs f >= 0".into()));
            }
        }
    }
    Ok(one_phase_margins(traj, scenario, tol))
}

fn seeded_unit_field<T: Real>(grid: &StructuredGrid<T>, rng: &mut ChaCha8Rng) -> ScalarField<T> {
    // random signs and magnitudes, normalized to unit L1 norm
    let raw = ScalarField::from_fn(grid, |_, _| T::lit(rng.gen_range(-1.0..1.0)));
    let norm = raw.l1_norm(grid);
    raw.map(|v| v / norm)
}

fn perturb_source<T: Real>(source: &Source<T>, psi: ScalarField<T>) -> Source<T> {
    match source {
        Source::Field(f) => Source::Field(f.plus(&SourceField::steady("perturbation", psi))),
        Source::Reaction(g) => {
            let (g1, g2) = (g.clone(), g.clone());
            let vals = psi.into_values();
            Source::Reaction(ReactionTerm::new(
                format!("{}+perturbation", g.label()),
                move |t, c, r| g1.eval(t, c, r) + vals[c],
                move |t| g2.modulus(t),
            ))
        }
    }
}

/// Deviations `|u^delta(T) - u(T)|_1` for perturbations of actual size
/// `scale * delta`, against the bound `delta (1 + T)`.
pub fn stability_margins<T: Real>(
    prob: &EvolutionProblem<T>,
    deltas: &[T],
    scale: T,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = run_evolution(prob)?;
    let horizon = prob.horizon;
    let g = &prob.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::new();
    let mut deviations = Vec::new();
    for &delta in deltas {
        let size = delta * scale;
        let phi = seeded_unit_field(g, &mut rng);
        let psi = seeded_unit_field(g, &mut rng);
        let mut pert = prob.clone();
        pert.u0 = prob
            .u0
            .zip_map(&phi, |u, d| (u + size * d).clamp_to(-T::one(), T::one()));
        pert.source = perturb_source(&prob.source, psi.map(|v| v * size));
        let traj = run_evolution(&pert)?;
        let dev = traj.final_u().l1_distance(base.final_u(), g);
        deviations.push(dev.to_f64_lossy());
        margins.push((delta * (T::one() + horizon) - dev).to_f64_lossy());
    }
    Ok((margins, deviations))
}

/// Stability under `L1` perturbations of `u0` and `f` of size `delta`.
pub fn check_stability<T: Real>(
    prob: &EvolutionProblem<T>,
    deltas: &[T],
    seed: u64,
    scenario: &str,
    tol: f64,
) -> Result<PropertyReport> {
    let (m, dev) = stability_margins(prob, deltas, T::one(), seed)?;
    let mut rep = PropertyReport::from_margins("stability", scenario, m, tol);
    for (d, v) in deltas.iter().zip(dev) {
        rep = rep.with_detail(&format!("deviation_delta_{:e}", d.to_f64_lossy()), v);
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyStability {
    pub epsilons: Vec<f64>,
    pub ratios: Vec<f64>,
    pub c_grid: f64,
    pub max_over_min: f64,
    pub bounded: bool,
    pub passed: bool,
}

/// Energy ratio of the regularized solve at each `eps`; passes when every
/// ratio is below `C_grid` and they vary by at most a factor `max_factor`.
pub fn energy_stability<T: Real>(
    prob: &StationaryProblem<'_, T>,
    epsilons: &[T],
    tol: T,
    max_iter: usize,
    max_factor: f64,
) -> Result<EnergyStability> {
    let mut ratios = Vec::new();
    let mut c_grid = f64::NAN;
    for &eps in epsilons {
        let sub = StationaryProblem {
            reg: GraphRegularization::new(eps, prob.reg.kind())?,
            ..prob.clone()
        };
        let sol = solve_regularized(&sub, tol, max_iter)?;
        let rep = energy_estimate_check(&sol, &sub)?;
        c_grid = rep.c_grid;
        ratios.push(rep.energy_ratio);
    }
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_over_min = if max == 0.0 { 1.0 } else { max / min };
    let bounded = ratios.iter().all(|r| r.is_finite() && *r <= c_grid);
    Ok(EnergyStability {
        epsilons: epsilons.iter().map(|e| e.to_f64_lossy()).collect(),
        ratios,
        c_grid,
        max_over_min,
        bounded,
        passed: bounded && max_over_min <= max_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryKind::{Dirichlet as D, Neumann as N};
    use crate::velocity::{crowd_motion_field, VelocityField};

    fn prob(u0: f64, f: f64) -> EvolutionProblem<f64> {
        let g = StructuredGrid::interval(1.0, 30, N, D).unwrap();
        let v = crowd_motion_field(&g, 0.2).unwrap();
        let u0 = ScalarField::from_fn(&g, |_, x| if x[0] < 0.5 { u0 } else { 0.0 });
        EvolutionProblem::new(g, v, u0, 0.2, 0.02, Source::Field(SourceField::constant(f)))
    }

    #[test]
    fn identical_inputs_have_zero_margins() {
        let t = run_evolution(&prob(0.5, 0.1)).unwrap();
        let r = check_contraction(&t, &t, "same", 1e-8).unwrap();
        assert!(r.margins.iter().all(|m| *m == 0.0));
        assert!(r.passed);
        let c = check_comparison(&t, &t, "same", 1e-8).unwrap();
        assert!(c.margins.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn equal_sources_distance_decreases() {
        let a = run_evolution(&prob(0.5, 0.1)).unwrap();
        let b = run_evolution(&prob(0.9, 0.1)).unwrap();
        let d: Vec<f64> = (0..=a.n_steps()).map(|i| a.u(i).l1_distance(b.u(i), a.grid())).collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        let r1 = check_contraction(&a, &b, "x", 1e-8).unwrap();
        let r2 = check_contraction(&b, &a, "x", 1e-8).unwrap();
        assert_eq!(r1.passed, r2.passed);
        assert!(check_comparison(&a, &b, "x", 1e-8).unwrap().passed);
        assert!(matches!(check_comparison(&b, &a, "x", 1e-8), Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = run_evolution(&prob(0.5, 0.1)).unwrap();
        let mut p = prob(0.5, 0.1);
        p.grid = StructuredGrid::interval(1.0, 31, N, D).unwrap();
        p.velocity = VelocityField::zero(&p.grid);
        p.u0 = ScalarField::zeros(&p.grid);
        let b = run_evolution(&p).unwrap();
        assert!(matches!(check_contraction(&a, &b, "x", 1e-8), Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn one_phase_requirements() {
        let t = run_evolution(&prob(0.5, 0.0)).unwrap();
        assert!(check_one_phase(&t, None, "x", 1e-8).unwrap().passed);
        let neg = run_evolution(&prob(-0.5, 0.0)).unwrap();
        assert!(matches!(check_one_phase(&neg, None, "x", 1e-8), Err(Error::InvalidScenario(_))));
        assert!(!one_phase_margins(&neg, "x", 1e-8).passed);
    }

    #[test]
    fn stability_zero_and_small_delta() {
        let p = prob(0.5, 0.1);
        let (m, dev) = stability_margins(&p, &[0.0, 1e-3], 1.0, 7).unwrap();
        assert_eq!(dev[0], 0.0);
        assert!(m[1] >= -1e-7);
        assert!(check_stability(&p, &[1e-2, 1e-3, 1e-4], 3, "x", 1e-7).unwrap().passed);
    }
}
