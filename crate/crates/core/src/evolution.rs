//! Implicit Euler in time: `u_{i+1} = (I + tau A)^{-1}(u_i + tau f_i)`.

use crate::error::{Error, Result};
use crate::geometry::{ScalarField, StructuredGrid};
use crate::graphs::GraphRegularization;
use crate::reaction::{check_conditions, ReactionTerm, SampleSpec};
use crate::scalar::Real;
use crate::stationary::{dirichlet_outflux, max_diffusion_weight, resolvent_a_from, SolverParams, StationarySolution, ADMISSIBILITY_TOL};
use crate::velocity::{check_admissibility, VelocityField};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Time-dependent source `f(t, cell)`.
#[derive(Clone)]
pub struct SourceField<T> {
    eval: Arc<dyn Fn(T, usize) -> T + Send + Sync>,
    label: String,
}

impl<T> fmt::Debug for SourceField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceField").field("label", &self.label).finish()
    }
}

impl<T: Real> SourceField<T> {
    pub fn new(label: impl Into<String>, eval: impl Fn(T, usize) -> T + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _| T::zero())
    }

    pub fn constant(c: T) -> Self {
        Self::new(format!("constant({c})"), move |_, _| c)
    }

    /// `f(t, x)` sampled at cell centers.
    pub fn from_space_time(
        label: impl Into<String>,
        grid: &StructuredGrid<T>,
        f: impl Fn(T, [T; 2]) -> T + Send + Sync + 'static,
    ) -> Self {
        let centers: Vec<[T; 2]> = (0..grid.n_cells()).map(|c| grid.cell_center(c)).collect();
        Self::new(label, move |t, c| f(t, centers[c]))
    }

    /// Time-independent field.
    pub fn steady(label: impl Into<String>, field: ScalarField<T>) -> Self {
        let v = field.into_values();
        Self::new(label, move |_, c| v[c])
    }

    /// Adds `other` cellwise.
    pub fn plus(&self, other: &SourceField<T>) -> Self {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        Self::new(format!("{}+{}", self.label, other.label), move |t, c| a(t, c) + b(t, c))
    }

    #[inline]
    pub fn eval(&self, t: T, cell: usize) -> T {
        (self.eval)(t, cell)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Clone, Debug)]
pub enum Source<T> {
    Field(SourceField<T>),
    Reaction(ReactionTerm<T>),
}

impl<T: Real> Source<T> {
    pub fn label(&self) -> &str {
        match self {
            Source::Field(f) => f.label(),
            Source::Reaction(g) => g.label(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionProblem<T> {
    pub grid: StructuredGrid<T>,
    pub velocity: VelocityField<T>,
    pub u0: ScalarField<T>,
    pub horizon: T,
    pub tau: T,
    pub source: Source<T>,
    pub solver: SolverParams<T>,
    /// L1 tolerance of the per-step reaction fixed point.
    pub reaction_tol: T,
    pub reaction_max_iter: usize,
}

impl<T: Real> EvolutionProblem<T> {
    pub fn new(
        grid: StructuredGrid<T>,
        velocity: VelocityField<T>,
        u0: ScalarField<T>,
        horizon: T,
        tau: T,
        source: Source<T>,
    ) -> Self {
        Self {
            grid,
            velocity,
            u0,
            horizon,
            tau,
            source,
            solver: SolverParams::default(),
            reaction_tol: T::lit(1e-12),
            reaction_max_iter: 200,
        }
    }

    /// `n` with `n tau = T`.
    pub fn n_steps(&self) -> Result<usize> {
        steps_for(self.horizon, self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_steps()?;
        self.solver.validate()?;
        if self.u0.len() != self.grid.n_cells() {
            return Err(Error::InvalidParameter("initial density does not match grid".into()));
        }
        if self.u0.values().iter().any(|v| !v.is_finite()) || self.u0.sup_norm() > T::one() {
            return Err(Error::Precondition(format!(
                "initial density must satisfy |u0| <= 1, got sup {}",
                self.u0.sup_norm()
            )));
        }
        if self.velocity.face_values().len() != self.grid.n_faces() {
            return Err(Error::InvalidParameter("velocity does not match grid".into()));
        }
        let adm = check_admissibility(&self.grid, &self.velocity, T::lit(ADMISSIBILITY_TOL));
        if !adm.passed {
            return Err(Error::Precondition(format!(
                "drift is not outward pointing (min Dirichlet outflux {:e}, max Neumann flux {:e})",
                adm.dirichlet_min_outflux, adm.neumann_max_abs_flux
            )));
        }
        if let Source::Reaction(g) = &self.source {
            let samples = self.samples();
            let rep = check_conditions(g, &self.grid, &self.velocity, &samples);
            if !rep.g1.passed || !rep.g2.passed {
                return Err(Error::Precondition(format!(
                    "reaction {} fails integrability or one-sided Lipschitz check",
                    g.label()
                )));
            }
            let rmax = g.sup_modulus(&samples);
            if self.tau * rmax >= T::one() {
                return Err(Error::InvalidStep(format!(
                    "tau * sup R = {} >= 1: reaction fixed point not certified contractive",
                    self.tau * rmax
                )));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> SampleSpec<T> {
        let n = self.n_steps().unwrap_or(1).clamp(1, 64);
        SampleSpec::uniform(&self.grid, self.horizon, n, 64)
    }
}

pub(crate) fn steps_for<T: Real>(horizon: T, tau: T) -> Result<usize> {
    if !(tau > T::zero()) || !(horizon > T::zero()) {
        return Err(Error::InvalidParameter("T and tau must be positive".into()));
    }
    let ratio = horizon / tau;
    let n = ratio.round();
    if n < T::one() || (ratio - n).abs() > T::lit(1e-9) * ratio.max(T::one()) {
        return Err(Error::InvalidParameter(format!(
            "T not an integer multiple of tau (T = {horizon}, tau = {tau})"
        )));
    }
    Ok(n.to_usize().unwrap())
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub newton_iterations: usize,
    pub picard_sweeps: usize,
    pub reaction_iterations: usize,
    pub reaction_increment: f64,
    pub residual: f64,
    pub complementarity: f64,
    pub last_cauchy_increment: Option<f64>,
    pub mass_before: f64,
    pub mass_after: f64,
    pub source_mass: f64,
    pub dirichlet_outflux: f64,
    /// `(M_{i+1} - M_i) - tau int f_i + tau outflux`.
    pub mass_residual: f64,
}

/// Nodes and, per node, density and pressure.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    grid: StructuredGrid<T>,
    velocity: VelocityField<T>,
    tau: T,
    epsilon: T,
    times: Vec<T>,
    u: Vec<ScalarField<T>>,
    p: Vec<ScalarField<T>>,
    sources: Vec<ScalarField<T>>,
    reports: Vec<StepReport>,
}

impl<T: Real> Trajectory<T> {
    /// Assembles a trajectory from raw states; `p[0]` is the initial
    /// pressure placeholder and `sources[i]` drives step `i -> i+1`.
    pub fn from_parts(
        grid: StructuredGrid<T>,
        velocity: VelocityField<T>,
        tau: T,
        epsilon: T,
        u: Vec<ScalarField<T>>,
        p: Vec<ScalarField<T>>,
        sources: Vec<ScalarField<T>>,
    ) -> Result<Self> {
        if u.is_empty() || u.len() != p.len() || sources.len() + 1 != u.len() {
            return Err(Error::InvalidParameter("trajectory arrays have inconsistent lengths".into()));
        }
        let n = grid.n_cells();
        if u.iter().chain(&p).chain(&sources).any(|f| f.len() != n) {
            return Err(Error::InvalidParameter("trajectory field does not match grid".into()));
        }
        let times = (0..u.len()).map(|i| tau * T::from_usize(i).unwrap()).collect();
        Ok(Self {
            grid,
            velocity,
            tau,
            epsilon,
            times,
            u,
            p,
            sources,
            reports: Vec::new(),
        })
    }

    pub fn grid(&self) -> &StructuredGrid<T> {
        &self.grid
    }

    pub fn velocity(&self) -> &VelocityField<T> {
        &self.velocity
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Final graph regularization scale used in every step.
    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn u(&self, i: usize) -> &ScalarField<T> {
        &self.u[i]
    }

    pub fn p(&self, i: usize) -> &ScalarField<T> {
        &self.p[i]
    }

    pub fn densities(&self) -> &[ScalarField<T>] {
        &self.u
    }

    pub fn pressures(&self) -> &[ScalarField<T>] {
        &self.p
    }

    /// Step sources `f_i`, `i < n`.
    pub fn sources(&self) -> &[ScalarField<T>] {
        &self.sources
    }

    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    pub fn final_u(&self) -> &ScalarField<T> {
        self.u.last().unwrap()
    }

    pub fn masses(&self) -> Vec<T> {
        self.u.iter().map(|u| u.integral(&self.grid)).collect()
    }

    fn interval_of(&self, t: T) -> (usize, T) {
        let n = self.n_steps();
        if !(t > T::zero()) {
            return (0, T::zero());
        }
        let s = t / self.tau;
        let i = s.floor().to_usize().unwrap_or(n).min(n);
        (i, s - T::from_usize(i).unwrap())
    }

    /// `u_tau(t) = u_i` on `[t_i, t_{i+1})`, `u_n` from `T` on.
    pub fn piecewise_constant(&self, t: T) -> &ScalarField<T> {
        &self.u[self.interval_of(t).0]
    }

    pub fn pressure_piecewise_constant(&self, t: T) -> &ScalarField<T> {
        &self.p[self.interval_of(t).0]
    }

    /// Linear interpolation between the nodes.
    pub fn piecewise_linear(&self, t: T) -> ScalarField<T> {
        let (i, theta) = self.interval_of(t);
        if i >= self.n_steps() || theta == T::zero() {
            return self.u[i].clone();
        }
        self.u[i].zip_map(&self.u[i + 1], |a, b| a + theta * (b - a))
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 18.0),
    (0.0, 8.0 / 18.0),
    (0.774_596_669_241_483_4, 5.0 / 18.0),
];

/// Average of `f` over `[i tau, (i+1) tau]` per cell (three-point Gauss).
pub fn time_average_source<T: Real>(f: &SourceField<T>, n_cells: usize, i: usize, tau: T) -> ScalarField<T> {
    let half = tau / T::lit(2.0);
    let mid = tau * T::from_usize(i).unwrap() + half;
    let vals = (0..n_cells)
        .map(|c| {
            GAUSS3
                .iter()
                .map(|(x, w)| T::lit(*w) * f.eval(mid + half * T::lit(*x), c))
                .sum()
        })
        .collect();
    ScalarField::from_raw(vals)
}

#[derive(Clone, Debug)]
pub struct StepOutcome<T> {
    pub u: ScalarField<T>,
    pub p: ScalarField<T>,
    pub solution: StationarySolution<T>,
}

/// One implicit Euler step from `u_prev` with step source `f_i`.
pub fn euler_step<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VelocityField<T>,
    u_prev: &ScalarField<T>,
    f_i: &ScalarField<T>,
    tau: T,
    params: &SolverParams<T>,
) -> Result<StepOutcome<T>> {
    euler_step_from(grid, velocity, u_prev, f_i, tau, params, None)
}

fn euler_step_from<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VelocityField<T>,
    u_prev: &ScalarField<T>,
    f_i: &ScalarField<T>,
    tau: T,
    params: &SolverParams<T>,
    warm: Option<(&[T], GraphRegularization<T>)>,
) -> Result<StepOutcome<T>> {
    let sol = resolvent_a_from(grid, velocity, u_prev, f_i, tau, params, warm)?;
    Ok(StepOutcome {
        u: sol.u.clone(),
        p: sol.p.clone(),
        solution: sol,
    })
}

/// Marches `n = T / tau` steps. With a reaction, each step iterates
/// `u <- (I + tau A)^{-1}(u_i + tau g(t_{i+1/2}, ., u))` to a fixed point.
pub fn run_evolution<T: Real>(prob: &EvolutionProblem<T>) -> Result<Trajectory<T>> {
    run_evolution_observed(prob, |_, _, _| Ok(()))
}

/// [`run_evolution`] calling `on_step(report, u_{i+1}, p_{i+1})` after each
/// step, so callers can stream output before a later step fails.
pub fn run_evolution_observed<T: Real>(
    prob: &EvolutionProblem<T>,
    mut on_step: impl FnMut(&StepReport, &ScalarField<T>, &ScalarField<T>) -> Result<()>,
) -> Result<Trajectory<T>> {
    prob.validate()?;
    let n = prob.n_steps()?;
    let grid = &prob.grid;
    let v = &prob.velocity;
    let tau = prob.tau;
    let params = &prob.solver;
    let final_reg = params.final_regularization()?;
    let single = SolverParams {
        schedule: vec![params.final_epsilon()],
        ..params.clone()
    };
    let nc = grid.n_cells();

    let mut us = vec![prob.u0.clone()];
    let mut ps = vec![ScalarField::zeros(grid)];
    let mut sources = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    let mut times = vec![T::zero()];
    for i in 0..n {
        let u_prev = us.last().unwrap().clone();
        let warm_p = if i == 0 { None } else { Some(ps.last().unwrap().values().to_vec()) };
        let warm = warm_p.as_deref().map(|p| (p, final_reg));
        let (out, f_i, iters, incr) = match &prob.source {
            Source::Field(f) => {
                let f_i = time_average_source(f, nc, i, tau);
                let out = euler_step_from(grid, v, &u_prev, &f_i, tau, params, warm).map_err(|e| e.at_step(i))?;
                (out, f_i, 0, 0.0)
            }
            Source::Reaction(g) => {
                let t_mid = tau * (T::from_usize(i).unwrap() + T::lit(0.5));
                let eval = |u: &ScalarField<T>| {
                    ScalarField::from_raw(u.values().iter().enumerate().map(|(c, r)| g.eval(t_mid, c, *r)).collect())
                };
                let mut f_k = eval(&u_prev);
                let mut out = euler_step_from(grid, v, &u_prev, &f_k, tau, params, warm).map_err(|e| e.at_step(i))?;
                let mut k = 1;
                let mut incr = T::infinity();
                while incr > prob.reaction_tol {
                    if k >= prob.reaction_max_iter {
                        return Err(Error::SolverFailure {
                            iterations: k,
                            residual: incr.to_f64_lossy(),
                            message: "reaction fixed point did not converge".into(),
                        }
                        .at_step(i));
                    }
                    let f_next = eval(&out.u);
                    let next = euler_step_from(grid, v, &u_prev, &f_next, tau, &single, Some((out.p.values(), final_reg)))
                        .map_err(|e| e.at_step(i))?;
                    incr = next.u.l1_distance(&out.u, grid);
                    f_k = f_next;
                    out = next;
                    k += 1;
                }
                (out, f_k, k, incr.to_f64_lossy())
            }
        };
        let t_next = tau * T::from_usize(i + 1).unwrap();
        let mass_before = u_prev.integral(grid);
        let mass_after = out.u.integral(grid);
        let source_mass = f_i.integral(grid);
        let outflux = dirichlet_outflux(grid, v, &out.u, &out.p);
        let sol = &out.solution;
        reports.push(StepReport {
            step: i,
            time: t_next.to_f64_lossy(),
            newton_iterations: sol.newton_iterations,
            picard_sweeps: sol.picard_sweeps,
            reaction_iterations: iters,
            reaction_increment: incr,
            residual: sol.residual_norm.to_f64_lossy(),
            complementarity: sol.complementarity.to_f64_lossy(),
            last_cauchy_increment: sol.cauchy.last().map(|c| c.to_f64_lossy()),
            mass_before: mass_before.to_f64_lossy(),
            mass_after: mass_after.to_f64_lossy(),
            source_mass: source_mass.to_f64_lossy(),
            dirichlet_outflux: outflux.to_f64_lossy(),
            mass_residual: ((mass_after - mass_before) - tau * source_mass + tau * outflux).to_f64_lossy(),
        });
        on_step(reports.last().unwrap(), &out.u, &out.p)?;
        us.push(out.u);
        ps.push(out.p);
        sources.push(f_i);
        times.push(t_next);
    }
    Ok(Trajectory {
        grid: grid.clone(),
        velocity: v.clone(),
        tau,
        epsilon: params.final_epsilon(),
        times,
        u: us,
        p: ps,
        sources,
        reports,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierReport {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `min_i min_x (u_i - omega1_i)`.
    pub lower_margin: f64,
    /// `min_i min_x (omega2_i - u_i)`.
    pub upper_margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Implicit Euler for `omega' = ext_x [g(t, x, omega) - omega div V]`,
/// using the same midpoint time and fixed-point iteration as the scheme.
pub fn barrier_series<T: Real>(
    omega0: T,
    upper: bool,
    g: &ReactionTerm<T>,
    div: &ScalarField<T>,
    tau: T,
    n: usize,
) -> Result<Vec<T>> {
    let mut out = vec![omega0];
    let mut w = omega0;
    let ext = |t: T, om: T| {
        let vals = div
            .values()
            .iter()
            .enumerate()
            .map(|(c, d)| g.eval(t, c, om.clamp_to(-T::one(), T::one())) - om * *d);
        if upper {
            vals.fold(T::neg_infinity(), T::max)
        } else {
            vals.fold(T::infinity(), T::min)
        }
    };
    for i in 0..n {
        let t_mid = tau * (T::from_usize(i).unwrap() + T::lit(0.5));
        let mut next = w + tau * ext(t_mid, w);
        let mut converged = false;
        for _ in 0..1000 {
            let again = w + tau * ext(t_mid, next);
            let d = (again - next).abs();
            next = again;
            if d <= T::lit(1e-15) * (T::one() + next.abs()) {
                converged = true;
                break;
            }
        }
        if !converged || !next.is_finite() {
            return Err(Error::SolverFailure {
                iterations: 1000,
                residual: f64::NAN,
                message: format!("barrier step {i} did not converge"),
            });
        }
        w = next;
        out.push(w);
    }
    Ok(out)
}

/// `eps T max_c D_c`: drift of sub-saturated states caused by `p = eps u`
/// instead of `p = 0`; vanishes in the graph limit.
pub fn regularization_allowance<T: Real>(traj: &Trajectory<T>) -> T {
    let horizon = traj.tau() * T::from_usize(traj.n_steps()).unwrap();
    traj.epsilon() * horizon * max_diffusion_weight(traj.grid())
}

/// Barrier margins without checking that the barriers start ordered.
pub fn barrier_margins<T: Real>(
    traj: &Trajectory<T>,
    omega1_0: T,
    omega2_0: T,
    g: &ReactionTerm<T>,
    tol: T,
) -> Result<BarrierReport> {
    let n = traj.n_steps();
    let div = traj.velocity().divergence();
    let lower = barrier_series(omega1_0, false, g, div, traj.tau(), n)?;
    let upper = barrier_series(omega2_0, true, g, div, traj.tau(), n)?;
    let mut lm = T::infinity();
    let mut um = T::infinity();
    for i in 0..=n {
        let u = traj.u(i);
        lm = lm.min(u.min() - lower[i]);
        um = um.min(upper[i] - u.max());
    }
    let tolerance = T::lit(10.0) * tol + regularization_allowance(traj);
    Ok(BarrierReport {
        lower: lower.iter().map(|x| x.to_f64_lossy()).collect(),
        upper: upper.iter().map(|x| x.to_f64_lossy()).collect(),
        lower_margin: lm.to_f64_lossy(),
        upper_margin: um.to_f64_lossy(),
        tolerance: tolerance.to_f64_lossy(),
        passed: lm >= -tolerance && um >= -tolerance,
    })
}

/// Checks `omega1(t_i) <= u_i <= omega2(t_i)` for the sub- and supersolution
/// barriers started at `omega1_0 <= min u0`, `max u0 <= omega2_0`.
pub fn check_sub_supersolutions<T: Real>(
    traj: &Trajectory<T>,
    omega1_0: T,
    omega2_0: T,
    g: &ReactionTerm<T>,
    tol: T,
) -> Result<BarrierReport> {
    let u0 = traj.u(0);
    if omega1_0 > u0.min() || omega2_0 < u0.max() {
        return Err(Error::InvalidParameter(format!(
            "barriers must bracket u0: need {} <= {} and {} <= {}",
            omega1_0,
            u0.min(),
            u0.max(),
            omega2_0
        )));
    }
    barrier_margins(traj, omega1_0, omega2_0, g, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryKind::{Dirichlet as D, Neumann as N};
    use crate::velocity::crowd_motion_field;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gauss_average_examples() {
        let c = SourceField::constant(2.5);
        assert_abs_diff_eq!(time_average_source(&c, 3, 4, 0.1).values()[1], 2.5, epsilon = 1e-15);
        let lin = SourceField::new("t", |t: f64, _| t);
        assert_abs_diff_eq!(time_average_source(&lin, 1, 0, 0.1).values()[0], 0.05, epsilon = 1e-15);
        let sq = SourceField::new("t2", |t: f64, _| t * t);
        assert_abs_diff_eq!(time_average_source(&sq, 1, 0, 1.0).values()[0], 1.0 / 3.0, epsilon = 1e-15);
        let quintic = SourceField::new("t5", |t: f64, _| t.powi(5));
        assert_abs_diff_eq!(time_average_source(&quintic, 1, 0, 1.0).values()[0], 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn step_count_validation() {
        assert_eq!(steps_for(1.0, 0.01).unwrap(), 100);
        assert!(steps_for(1.0, 0.3).is_err());
        assert!(steps_for(1.0, 0.0).is_err());
    }

    #[test]
    fn euler_step_examples() {
        let g = StructuredGrid::interval(1.0, 40, D, D).unwrap();
        let v = VelocityField::zero(&g);
        let params = SolverParams::default();
        let zero = ScalarField::zeros(&g);
        let s = euler_step(&g, &v, &zero, &zero, 0.1, &params).unwrap();
        assert_eq!(s.u.sup_norm(), 0.0);

        let f = ScalarField::constant(&g, 3.0);
        let s = euler_step(&g, &v, &zero, &f, 0.1, &params).unwrap();
        // interior cells sit at tau c; the end cells feel the Dirichlet layer
        for c in 2..38 {
            assert_abs_diff_eq!(s.u.values()[c], 0.3, epsilon = 1e-6);
        }
        assert!(s.p.sup_norm() <= 1e-8);

        let one = ScalarField::constant(&g, 1.0);
        let s = euler_step(&g, &v, &one, &f, 0.1, &params).unwrap();
        for c in 0..40 {
            let x = g.cell_center(c)[0];
            assert_abs_diff_eq!(s.p.values()[c], 1.5 * x * (1.0 - x), epsilon = 1e-3);
            assert_eq!(s.u.values()[c], 1.0);
        }
    }

    fn base(n: usize, source: Source<f64>, u0: f64, tau: f64, horizon: f64) -> EvolutionProblem<f64> {
        let g = StructuredGrid::interval(1.0, n, D, D).unwrap();
        let v = VelocityField::zero(&g);
        let u0 = ScalarField::constant(&g, u0);
        EvolutionProblem::new(g, v, u0, horizon, tau, source)
    }

    #[test]
    fn stationary_data_stays() {
        let g = StructuredGrid::interval(1.0, 20, N, N).unwrap_err();
        assert!(matches!(g, Error::InvalidGeometry(_)));
        let prob = base(20, Source::Reaction(ReactionTerm::zero()), 0.0, 0.1, 0.5);
        let tr = run_evolution(&prob).unwrap();
        assert_eq!(tr.n_steps(), 5);
        for u in tr.densities() {
            assert_eq!(u.sup_norm(), 0.0);
        }
    }

    #[test]
    fn logistic_free_ode_oracle() {
        let prob = base(20, Source::Reaction(ReactionTerm::linear_decay(1.0, 1.0)), 0.0, 0.01, 1.0);
        let tr = run_evolution(&prob).unwrap();
        let exact = 1.0 - (-1.0f64).exp();
        for c in 2..18 {
            assert!((tr.final_u().values()[c] - exact).abs() <= 0.01);
        }
        assert!(tr.pressures().iter().all(|p| p.sup_norm() <= 1e-7));
        let rep = check_sub_supersolutions(&tr, 0.0, 0.0, &ReactionTerm::linear_decay(1.0, 1.0), 1e-10).unwrap();
        assert!(rep.upper_margin >= -1e-6, "{}", rep.upper_margin);
        assert!(rep.passed);
    }

    #[test]
    fn reaction_step_guard() {
        let mut prob = base(10, Source::Reaction(ReactionTerm::logistic(1.0)), 0.0, 0.5, 1.0);
        // sup R = 3, tau R = 1.5
        assert!(matches!(run_evolution(&prob), Err(Error::InvalidStep(_))));
        prob.tau = 0.1;
        assert!(run_evolution(&prob).is_ok());
    }

    #[test]
    fn crowd_mass_decays_and_balances() {
        let g = StructuredGrid::interval(1.0, 60, N, D).unwrap();
        let v = crowd_motion_field(&g, 0.1).unwrap();
        let u0 = ScalarField::from_fn(&g, |_, x| if x[0] <= 0.5 { 0.8 } else { 0.0 });
        let prob = EvolutionProblem::new(g, v, u0, 0.5, 0.02, Source::Field(SourceField::zero()));
        let tr = run_evolution(&prob).unwrap();
        let m = tr.masses();
        assert!(m.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(m.last().unwrap() < &m[0]);
        for r in tr.reports() {
            assert!(r.mass_residual.abs() <= 10.0 * prob.solver.tol, "{}", r.mass_residual);
            assert!(r.dirichlet_outflux >= 0.0);
        }
        assert!(tr.densities().iter().all(|u| u.sup_norm() <= 1.0));
    }

    #[test]
    fn interpolants_agree_at_nodes() {
        let prob = base(10, Source::Field(SourceField::constant(1.0)), 0.0, 0.1, 0.3);
        let tr = run_evolution(&prob).unwrap();
        for i in 0..=3 {
            let t = tr.times()[i];
            assert_eq!(tr.piecewise_linear(t).values(), tr.u(i).values());
            assert_eq!(tr.piecewise_constant(t).values(), tr.u(i).values());
        }
        let mid = tr.piecewise_linear(0.05);
        assert_abs_diff_eq!(mid.values()[5], 0.5 * (tr.u(0).values()[5] + tr.u(1).values()[5]), epsilon = 1e-15);
        assert_eq!(tr.piecewise_constant(0.05).values(), tr.u(0).values());
    }

    #[test]
    fn rejects_bad_data() {
        let mut prob = base(10, Source::Field(SourceField::zero()), 1.5, 0.1, 0.3);
        assert!(matches!(run_evolution(&prob), Err(Error::Precondition(_))));
        prob.u0 = ScalarField::zeros(&prob.grid);
        prob.tau = 0.07;
        assert!(matches!(run_evolution(&prob), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn barrier_preconditions_and_examples() {
        let prob = base(10, Source::Field(SourceField::zero()), 0.5, 0.1, 0.3);
        let tr = run_evolution(&prob).unwrap();
        let g = ReactionTerm::zero();
        assert!(check_sub_supersolutions(&tr, 0.6, 1.0, &g, 1e-10).is_err());
        let rep = check_sub_supersolutions(&tr, -1.0, 1.0, &g, 1e-10).unwrap();
        assert!(rep.upper.iter().all(|w| *w == 1.0));
        assert!(rep.passed);

        // g(-1) = 0.5 >= 0: the lower barrier rises
        let lin = ReactionTerm::linear_decay(0.0, 0.5);
        let low = barrier_series(-1.0, false, &lin, &ScalarField::zeros(&tr.grid), 0.1, 5).unwrap();
        assert!(low.windows(2).all(|w| w[1] >= w[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn bounded_and_ordered(a in -1.0f64..1.0, b in 0.0f64..0.5, c in -2.0f64..2.0) {
            let lo = base(16, Source::Field(SourceField::constant(c)), a, 0.05, 0.2);
            let mut hi = lo.clone();
            hi.u0 = lo.u0.map(|x| (x + b).min(1.0));
            let t1 = run_evolution(&lo).unwrap();
            let t2 = run_evolution(&hi).unwrap();
            for i in 0..=t1.n_steps() {
                prop_assert!(t1.u(i).sup_norm() <= 1.0);
                for k in 0..16 {
                    prop_assert!(t1.u(i).values()[k] <= t2.u(i).values()[k] + 1e-9);
                }
            }
        }
    }
}
