//! Discrete resolvent of the Hele-Shaw operator.
//!
//! For a weight `tau` and data `rhs` we solve, cell by cell,
//!
//! ```text
//! H(p) - tau * L_diff(p) + tau * L_upw(H(p); V) = rhs
//! ```
//!
//! with `L_diff` the two-point-flux Laplacian (`p = 0` on Dirichlet faces,
//! zero total flux on Neumann faces) and `L_upw` first-order upwind
//! transport. The Jacobian in `p` is a nonsingular M-matrix, which gives the
//! discrete comparison and L1-contraction properties.

use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, ScalarField, StructuredGrid};
use crate::graphs::{GraphKind, GraphRegularization};
use crate::linalg::{smallest_eigenvalue, LinearSolver, SparseBuilder, SparseMatrix};
use crate::scalar::{neg, pos, Real};
use crate::velocity::{check_admissibility, VelocityField};
use serde::Serialize;

/// Tolerance used when certifying the drift before a solve.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SolverParams<T> {
    /// Target for the l1 weak-form residual.
    pub tol: T,
    pub max_iter: usize,
    pub linear_solver: LinearSolver,
    /// Decreasing graph regularization scales.
    pub schedule: Vec<T>,
    pub kind: GraphKind,
    /// Bound on the last Cauchy increment of the schedule.
    pub cauchy_tol: T,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 50,
            linear_solver: LinearSolver::Banded,
            schedule: default_schedule(),
            kind: GraphKind::TwoPhase,
            cauchy_tol: T::lit(1e-4),
        }
    }
}

impl<T: Real> SolverParams<T> {
    pub fn final_epsilon(&self) -> T {
        *self.schedule.last().expect("schedule is nonempty")
    }

    pub fn final_regularization(&self) -> Result<GraphRegularization<T>> {
        GraphRegularization::new(self.final_epsilon(), self.kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidParameter("epsilon schedule is empty".into()));
        }
        if self.schedule.iter().any(|e| !(*e > T::zero())) {
            return Err(Error::InvalidParameter("epsilon schedule must be positive".into()));
        }
        if self.schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("epsilon schedule must be decreasing".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Geometric schedule `1e-2, 1e-3, ..., 1e-8`.
pub fn default_schedule<T: Real>() -> Vec<T> {
    geometric_schedule(T::lit(1e-2), T::lit(1e-8), T::lit(10.0))
}

pub fn geometric_schedule<T: Real>(start: T, end: T, factor: T) -> Vec<T> {
    let mut out = vec![start];
    let mut e = start;
    while e / factor >= end * (T::one() - T::lit(1e-9)) {
        e = e / factor;
        out.push(e);
    }
    out
}

#[derive(Clone, Debug)]
pub struct StationaryProblem<'a, T> {
    pub grid: &'a StructuredGrid<T>,
    pub velocity: &'a VelocityField<T>,
    pub rhs: ScalarField<T>,
    pub tau: T,
    pub reg: GraphRegularization<T>,
}

#[derive(Clone, Debug)]
pub struct StationarySolution<T> {
    pub u: ScalarField<T>,
    pub p: ScalarField<T>,
    pub newton_iterations: usize,
    pub picard_sweeps: usize,
    pub residual_norm: T,
    pub complementarity: T,
    pub energy_ratio: T,
    pub epsilon: T,
    /// `|u_k - u_{k+1}|_1` along the epsilon schedule (graph-limit solves).
    pub cauchy: Vec<T>,
}

/// Per-face coefficients of the finite-volume operator, per unit cell volume.
#[derive(Clone, Debug)]
pub(crate) struct DiscreteOperator<'a, T> {
    grid: &'a StructuredGrid<T>,
    faces: Vec<FaceCoef<T>>,
}

#[derive(Clone, Copy, Debug)]
enum FaceCoef<T> {
    Interior {
        low: usize,
        high: usize,
        /// `area / (distance * volume)`
        diff: T,
        /// `V * area / volume`
        adv: T,
    },
    Dirichlet {
        cell: usize,
        diff: T,
        /// outward `V . nu * area / volume`
        out: T,
    },
    Neumann,
}

impl<'a, T: Real> DiscreteOperator<'a, T> {
    pub(crate) fn new(grid: &'a StructuredGrid<T>, v: &VelocityField<T>) -> Self {
        let vol = grid.cell_volume();
        let faces = grid
            .faces()
            .iter()
            .enumerate()
            .map(|(id, f)| {
                let diff = f.area / (f.normal_distance * vol);
                match (f.low, f.high) {
                    (Some(low), Some(high)) => FaceCoef::Interior {
                        low,
                        high,
                        diff,
                        adv: v.face_values()[id] * f.area / vol,
                    },
                    _ => {
                        let (cell, sign) = f.boundary_cell().unwrap();
                        match grid.boundary_kind(id) {
                            Some(BoundaryKind::Dirichlet) => FaceCoef::Dirichlet {
                                cell,
                                diff,
                                out: sign * v.face_values()[id] * f.area / vol,
                            },
                            _ => FaceCoef::Neumann,
                        }
                    }
                }
            })
            .collect();
        Self { grid, faces }
    }

    /// `-L_diff(p)` per cell: net diffusive outflow.
    pub(crate) fn neg_laplacian(&self, p: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); p.len()];
        for f in &self.faces {
            match *f {
                FaceCoef::Interior { low, high, diff, .. } => {
                    let j = diff * (p[low] - p[high]);
                    out[low] += j;
                    out[high] -= j;
                }
                FaceCoef::Dirichlet { cell, diff, .. } => out[cell] += diff * p[cell],
                FaceCoef::Neumann => {}
            }
        }
        out
    }

    /// Upwind conservative divergence of `u V` per cell. Inflow through a
    /// Dirichlet face carries the ghost value zero.
    pub(crate) fn upwind_divergence(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); u.len()];
        for f in &self.faces {
            match *f {
                FaceCoef::Interior { low, high, adv, .. } => {
                    let j = pos(adv) * u[low] - neg(adv) * u[high];
                    out[low] += j;
                    out[high] -= j;
                }
                FaceCoef::Dirichlet { cell, out: o, .. } => out[cell] += pos(o) * u[cell],
                FaceCoef::Neumann => {}
            }
        }
        out
    }

    /// Total outflow `int_{Gamma_D} (-grad p + u V) . nu` of a state.
    pub(crate) fn dirichlet_outflux(&self, u: &[T], p: &[T]) -> T {
        let vol = self.grid.cell_volume();
        self.faces
            .iter()
            .map(|f| match *f {
                FaceCoef::Dirichlet { cell, diff, out } => (diff * p[cell] + pos(out) * u[cell]) * vol,
                _ => T::zero(),
            })
            .sum()
    }

    /// Residual `H(p) + tau(-L_diff p + L_upw H(p)) - rhs` and `u = H(p)`.
    fn residual(&self, reg: &GraphRegularization<T>, tau: T, rhs: &[T], p: &[T]) -> (Vec<T>, Vec<T>) {
        let u: Vec<T> = p.iter().map(|x| reg.apply(*x)).collect();
        let d = self.neg_laplacian(p);
        let a = self.upwind_divergence(&u);
        let r = (0..p.len())
            .map(|c| u[c] + tau * (d[c] + a[c]) - rhs[c])
            .collect();
        (r, u)
    }

    fn jacobian(&self, reg: &GraphRegularization<T>, tau: T, p: &[T]) -> SparseMatrix<T> {
        let n = p.len();
        let s: Vec<T> = p.iter().map(|x| reg.slope(*x)).collect();
        let mut b = SparseBuilder::new(n);
        for c in 0..n {
            b.add(c, c, s[c]);
        }
        for f in &self.faces {
            match *f {
                FaceCoef::Interior { low, high, diff, adv } => {
                    let td = tau * diff;
                    b.add(low, low, td);
                    b.add(low, high, -td);
                    b.add(high, high, td);
                    b.add(high, low, -td);
                    let vp = tau * pos(adv);
                    let vm = tau * neg(adv);
                    b.add(low, low, vp * s[low]);
                    b.add(high, low, -vp * s[low]);
                    b.add(high, high, vm * s[high]);
                    b.add(low, high, -vm * s[high]);
                }
                FaceCoef::Dirichlet { cell, diff, out } => {
                    b.add(cell, cell, tau * diff + tau * pos(out) * s[cell]);
                }
                FaceCoef::Neumann => {}
            }
        }
        b.build()
    }

    /// Dirichlet-Neumann Laplacian matrix (per unit volume).
    pub(crate) fn laplacian_matrix(&self) -> SparseMatrix<T> {
        let mut b = SparseBuilder::new(self.grid.n_cells());
        for f in &self.faces {
            match *f {
                FaceCoef::Interior { low, high, diff, .. } => {
                    b.add(low, low, diff);
                    b.add(low, high, -diff);
                    b.add(high, high, diff);
                    b.add(high, low, -diff);
                }
                FaceCoef::Dirichlet { cell, diff, .. } => b.add(cell, cell, diff),
                FaceCoef::Neumann => {}
            }
        }
        b.build()
    }

    /// `int |grad p|^2` with the two-point gradient.
    pub(crate) fn grad_norm_sq(&self, p: &[T]) -> T {
        let vol = self.grid.cell_volume();
        self.faces
            .iter()
            .map(|f| match *f {
                FaceCoef::Interior { low, high, diff, .. } => diff * (p[low] - p[high]).powi(2) * vol,
                FaceCoef::Dirichlet { cell, diff, .. } => diff * p[cell].powi(2) * vol,
                FaceCoef::Neumann => T::zero(),
            })
            .sum()
    }

    /// Nonlinear Gauss-Seidel sweep: each cell solves its own monotone
    /// scalar equation exactly with neighbours frozen.
    fn gauss_seidel_sweep(&self, reg: &GraphRegularization<T>, tau: T, rhs: &[T], p: &mut [T], cells: &CellStencils<T>) {
        let eps = reg.epsilon();
        let floor = reg.floor();
        for c in 0..p.len() {
            let st = &cells.0[c];
            let mut rhs_c = rhs[c];
            for (n, w) in &st.diff_nb {
                rhs_c += tau * *w * p[*n];
            }
            for (n, w) in &st.inflow_nb {
                rhs_c += tau * *w * reg.apply(p[*n]);
            }
            let a = T::one() + tau * st.outflow;
            let b = tau * st.diff_diag;
            // a H(x) + b x = rhs_c, increasing in x
            let at_top = a + b * eps - rhs_c;
            let at_bottom = a * floor + b * floor * eps - rhs_c;
            p[c] = if at_top <= T::zero() {
                (rhs_c - a) / b
            } else if at_bottom >= T::zero() {
                (rhs_c - a * floor) / b
            } else {
                rhs_c / (a / eps + b)
            };
        }
    }

    fn stencils(&self) -> CellStencils<T> {
        let n = self.grid.n_cells();
        let mut st: Vec<CellStencil<T>> = (0..n).map(|_| CellStencil::default()).collect();
        for f in &self.faces {
            match *f {
                FaceCoef::Interior { low, high, diff, adv } => {
                    st[low].diff_diag += diff;
                    st[high].diff_diag += diff;
                    st[low].diff_nb.push((high, diff));
                    st[high].diff_nb.push((low, diff));
                    st[low].outflow += pos(adv);
                    st[high].outflow += neg(adv);
                    if adv > T::zero() {
                        st[high].inflow_nb.push((low, adv));
                    } else if adv < T::zero() {
                        st[low].inflow_nb.push((high, -adv));
                    }
                }
                FaceCoef::Dirichlet { cell, diff, out } => {
                    st[cell].diff_diag += diff;
                    st[cell].outflow += pos(out);
                }
                FaceCoef::Neumann => {}
            }
        }
        CellStencils(st)
    }
}

#[derive(Clone, Debug)]
struct CellStencil<T> {
    diff_diag: T,
    outflow: T,
    diff_nb: Vec<(usize, T)>,
    inflow_nb: Vec<(usize, T)>,
}

impl<T: Real> Default for CellStencil<T> {
    fn default() -> Self {
        Self {
            diff_diag: T::zero(),
            outflow: T::zero(),
            diff_nb: Vec::new(),
            inflow_nb: Vec::new(),
        }
    }
}

struct CellStencils<T>(Vec<CellStencil<T>>);

fn l1<T: Real>(r: &[T], vol: T) -> T {
    r.iter().map(|x| x.abs()).sum::<T>() * vol
}

fn l2sq<T: Real>(r: &[T]) -> T {
    r.iter().map(|x| *x * *x).sum()
}

/// `int (1 - |u|)+ |p| + (u p)-`, zero exactly when `u` lies in `sign(p)`.
pub fn complementarity<T: Real>(grid: &StructuredGrid<T>, u: &[T], p: &[T]) -> T {
    u.iter()
        .zip(p)
        .map(|(u, p)| pos(T::one() - u.abs()) * p.abs() + neg(*u * *p))
        .sum::<T>()
        * grid.cell_volume()
}

/// Warm start for a smaller epsilon: cells in the linear zone keep their
/// density, saturated cells keep their pressure.
pub fn rescale_pressure<T: Real>(p: &[T], old: &GraphRegularization<T>, new_eps: T) -> Vec<T> {
    let ratio = new_eps / old.epsilon();
    p.iter()
        .map(|x| if old.slope(*x) > T::zero() { *x * ratio } else { *x })
        .collect()
}

fn check_problem<T: Real>(prob: &StationaryProblem<'_, T>) -> Result<()> {
    if !(prob.tau > T::zero()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {}", prob.tau)));
    }
    if prob.rhs.len() != prob.grid.n_cells() {
        return Err(Error::InvalidParameter("rhs does not match grid".into()));
    }
    if prob.rhs.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("rhs is not finite".into()));
    }
    if prob.velocity.face_values().len() != prob.grid.n_faces() {
        return Err(Error::InvalidParameter("velocity does not match grid".into()));
    }
    let adm = check_admissibility(prob.grid, prob.velocity, T::lit(ADMISSIBILITY_TOL));
    if !adm.passed {
        return Err(Error::Precondition(format!(
            "drift is not outward pointing: min Dirichlet outflux {:e}, max Neumann flux {:e}",
            adm.dirichlet_min_outflux, adm.neumann_max_abs_flux
        )));
    }
    Ok(())
}

/// Semismooth Newton solve of the regularized problem at fixed epsilon.
pub fn solve_regularized<T: Real>(
    prob: &StationaryProblem<'_, T>,
    tol: T,
    max_iter: usize,
) -> Result<StationarySolution<T>> {
    solve_regularized_from(prob, tol, max_iter, LinearSolver::Banded, None)
}

pub fn solve_regularized_from<T: Real>(
    prob: &StationaryProblem<'_, T>,
    tol: T,
    max_iter: usize,
    linear: LinearSolver,
    initial: Option<&[T]>,
) -> Result<StationarySolution<T>> {
    check_problem(prob)?;
    let op = DiscreteOperator::new(prob.grid, prob.velocity);
    let n = prob.grid.n_cells();
    let vol = prob.grid.cell_volume();
    let rhs = prob.rhs.values();
    let reg = &prob.reg;
    let tau = prob.tau;
    let mut p: Vec<T> = match initial {
        Some(p0) if p0.len() == n => p0.to_vec(),
        _ => rhs.iter().map(|r| reg.preimage(*r)).collect(),
    };
    let (mut r, mut u) = op.residual(reg, tau, rhs, &p);
    let mut res = l1(&r, vol);
    let mut iterations = 0;
    let mut sweeps = 0;
    let mut stencils: Option<CellStencils<T>> = None;
    let mut stalls = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::SolverFailure {
                iterations,
                residual: res.to_f64_lossy(),
                message: format!("no convergence at epsilon {:e}", reg.epsilon().to_f64_lossy()),
            });
        }
        iterations += 1;
        let jac = op.jacobian(reg, tau, &p);
        let minus_r: Vec<T> = r.iter().map(|x| -*x).collect();
        let step = jac.solve(&minus_r, linear)?;
        let merit = l2sq(&r);
        let mut theta = T::one();
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<T> = p.iter().zip(&step).map(|(a, s)| *a + theta * *s).collect();
            let (rt, ut) = op.residual(reg, tau, rhs, &trial);
            if l2sq(&rt) <= (T::one() - T::lit(1e-4) * theta) * merit || l1(&rt, vol) <= tol {
                p = trial;
                r = rt;
                u = ut;
                accepted = true;
                break;
            }
            theta = theta / T::lit(2.0);
        }
        if !accepted {
            stalls += 1;
            // stagnation: nonlinear Gauss-Seidel until the merit drops
            let st = stencils.get_or_insert_with(|| op.stencils());
            let budget = 4 * n + 16;
            for _ in 0..budget {
                op.gauss_seidel_sweep(reg, tau, rhs, &mut p, st);
                sweeps += 1;
                let (rt, ut) = op.residual(reg, tau, rhs, &p);
                r = rt;
                u = ut;
                if l2sq(&r) < merit * T::lit(0.25) || l1(&r, vol) <= tol {
                    break;
                }
            }
            if stalls > max_iter {
                break;
            }
        }
        res = l1(&r, vol);
    }
    let energy_ratio = energy_ratio_of(&op, prob, &p);
    let comp = complementarity(prob.grid, &u, &p);
    Ok(StationarySolution {
        u: ScalarField::from_raw(u),
        p: ScalarField::from_raw(p),
        newton_iterations: iterations,
        picard_sweeps: sweeps,
        residual_norm: res,
        complementarity: comp,
        energy_ratio,
        epsilon: reg.epsilon(),
        cauchy: Vec::new(),
    })
}

/// Picard-only solve (nonlinear Gauss-Seidel sweeps), kept as an
/// independent route for tests of the Newton path.
pub fn solve_by_sweeps<T: Real>(prob: &StationaryProblem<'_, T>, tol: T, max_sweeps: usize) -> Result<StationarySolution<T>> {
    check_problem(prob)?;
    let op = DiscreteOperator::new(prob.grid, prob.velocity);
    let vol = prob.grid.cell_volume();
    let rhs = prob.rhs.values();
    let st = op.stencils();
    let mut p: Vec<T> = rhs.iter().map(|r| prob.reg.preimage(*r)).collect();
    for sweep in 1..=max_sweeps {
        op.gauss_seidel_sweep(&prob.reg, prob.tau, rhs, &mut p, &st);
        let (r, u) = op.residual(&prob.reg, prob.tau, rhs, &p);
        let res = l1(&r, vol);
        if res <= tol {
            return Ok(StationarySolution {
                complementarity: complementarity(prob.grid, &u, &p),
                energy_ratio: energy_ratio_of(&op, prob, &p),
                u: ScalarField::from_raw(u),
                p: ScalarField::from_raw(p),
                newton_iterations: 0,
                picard_sweeps: sweep,
                residual_norm: res,
                epsilon: prob.reg.epsilon(),
                cauchy: Vec::new(),
            });
        }
    }
    Err(Error::SolverFailure {
        iterations: max_sweeps,
        residual: f64::NAN,
        message: "Gauss-Seidel sweeps did not converge".into(),
    })
}

/// Drives epsilon along the schedule with warm starts; the result is the
/// discrete pair with `u` in the sign graph up to the final epsilon.
pub fn solve_graph_limit<T: Real>(
    prob: &StationaryProblem<'_, T>,
    params: &SolverParams<T>,
) -> Result<StationarySolution<T>> {
    solve_graph_limit_from(prob, params, None)
}

pub fn solve_graph_limit_from<T: Real>(
    prob: &StationaryProblem<'_, T>,
    params: &SolverParams<T>,
    warm: Option<(&[T], GraphRegularization<T>)>,
) -> Result<StationarySolution<T>> {
    params.validate()?;
    let mut cauchy = Vec::new();
    let mut prev: Option<StationarySolution<T>> = None;
    let mut total_iter = 0;
    let mut total_sweeps = 0;
    for &eps in &params.schedule {
        let reg = GraphRegularization::new(eps, params.kind)?;
        let p0 = match (&prev, &warm) {
            (Some(s), _) => {
                let old = GraphRegularization::new(s.epsilon, params.kind)?;
                Some(rescale_pressure(s.p.values(), &old, eps))
            }
            (None, Some((p, old))) => Some(rescale_pressure(p, old, eps)),
            (None, None) => None,
        };
        let sub = StationaryProblem {
            grid: prob.grid,
            velocity: prob.velocity,
            rhs: prob.rhs.clone(),
            tau: prob.tau,
            reg,
        };
        let sol = solve_regularized_from(&sub, params.tol, params.max_iter, params.linear_solver, p0.as_deref())?;
        total_iter += sol.newton_iterations;
        total_sweeps += sol.picard_sweeps;
        if let Some(s) = &prev {
            cauchy.push(s.u.l1_distance(&sol.u, prob.grid));
        }
        prev = Some(sol);
    }
    let mut sol = prev.expect("schedule is nonempty");
    if let Some(last) = cauchy.last() {
        if *last > params.cauchy_tol {
            return Err(Error::LimitNotReached {
                increments: cauchy.iter().map(|c| c.to_f64_lossy()).collect(),
                last_increment: last.to_f64_lossy(),
                tolerance: params.cauchy_tol.to_f64_lossy(),
            });
        }
    }
    sol.newton_iterations = total_iter;
    sol.picard_sweeps = total_sweeps;
    sol.cauchy = cauchy;
    Ok(sol)
}

/// `(I + tau A)^{-1}(z + tau f)`: one implicit Euler step in the graph limit.
pub fn resolvent_a<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VelocityField<T>,
    z: &ScalarField<T>,
    f: &ScalarField<T>,
    tau: T,
    params: &SolverParams<T>,
) -> Result<StationarySolution<T>> {
    resolvent_a_from(grid, velocity, z, f, tau, params, None)
}

pub(crate) fn resolvent_a_from<T: Real>(
    grid: &StructuredGrid<T>,
    velocity: &VelocityField<T>,
    z: &ScalarField<T>,
    f: &ScalarField<T>,
    tau: T,
    params: &SolverParams<T>,
    warm: Option<(&[T], GraphRegularization<T>)>,
) -> Result<StationarySolution<T>> {
    let slack = T::lit(1e-12);
    if z.sup_norm() > T::one() + slack {
        return Err(Error::Precondition(format!(
            "resolvent input must satisfy |z| <= 1, got {}",
            z.sup_norm()
        )));
    }
    if f.len() != grid.n_cells() || z.len() != grid.n_cells() {
        return Err(Error::InvalidParameter("field does not match grid".into()));
    }
    let rhs = z.zip_map(f, |a, b| a + tau * b);
    let prob = StationaryProblem {
        grid,
        velocity,
        rhs,
        tau,
        reg: params.final_regularization()?,
    };
    solve_graph_limit_from(&prob, params, warm)
}

/// `tau^2 int|grad p|^2 / (tau^2 int|V|^2 + int|rhs|^2)`; reduces to the
/// plain ratio for `tau = 1`.
fn energy_ratio_of<T: Real>(op: &DiscreteOperator<'_, T>, prob: &StationaryProblem<'_, T>, p: &[T]) -> T {
    let t2 = prob.tau * prob.tau;
    let num = t2 * op.grad_norm_sq(p);
    let vol = prob.grid.cell_volume();
    let den = t2 * prob.velocity.l2_norm_sq(prob.grid)
        + prob.rhs.values().iter().map(|r| *r * *r).sum::<T>() * vol;
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub energy_ratio: f64,
    pub grad_norm_sq: f64,
    pub poincare_sq: f64,
    pub c_grid: f64,
    pub passed: bool,
}

/// Squared discrete Poincare constant `1 / lambda_min` of the mixed
/// Dirichlet-Neumann Laplacian.
pub fn poincare_constant_sq<T: Real>(grid: &StructuredGrid<T>) -> Result<T> {
    let v = VelocityField::zero(grid);
    let op = DiscreteOperator::new(grid, &v);
    let lam = smallest_eigenvalue(&op.laplacian_matrix(), T::lit(1e-12), 10_000)?;
    Ok(T::one() / lam)
}

/// Compares the energy ratio with `C_grid = 2 (1 + C_P^2)`.
pub fn energy_estimate_check<T: Real>(
    sol: &StationarySolution<T>,
    prob: &StationaryProblem<'_, T>,
) -> Result<EnergyReport> {
    let cp2 = poincare_constant_sq(prob.grid)?;
    let op = DiscreteOperator::new(prob.grid, prob.velocity);
    let ratio = energy_ratio_of(&op, prob, sol.p.values());
    let c_grid = T::lit(2.0) * (T::one() + cp2);
    Ok(EnergyReport {
        energy_ratio: ratio.to_f64_lossy(),
        grad_norm_sq: op.grad_norm_sq(sol.p.values()).to_f64_lossy(),
        poincare_sq: cp2.to_f64_lossy(),
        c_grid: c_grid.to_f64_lossy(),
        passed: ratio.is_finite() && ratio <= c_grid,
    })
}

/// Largest total two-point diffusion weight of a cell; `eps` times this
/// bounds how fast a sub-saturated cell can lose density through the
/// regularized pressure.
pub fn max_diffusion_weight<T: Real>(grid: &StructuredGrid<T>) -> T {
    let v = VelocityField::zero(grid);
    let op = DiscreteOperator::new(grid, &v);
    op.laplacian_matrix().diagonal().into_iter().fold(T::zero(), T::max)
}

/// `int_{Gamma_D}` of the total outward flux of a state.
pub fn dirichlet_outflux<T: Real>(grid: &StructuredGrid<T>, v: &VelocityField<T>, u: &ScalarField<T>, p: &ScalarField<T>) -> T {
    DiscreteOperator::new(grid, v).dirichlet_outflux(u.values(), p.values())
}
