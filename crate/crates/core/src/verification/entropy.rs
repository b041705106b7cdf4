//! Discrete Kruzhkov-type entropy residuals on interior patches.
//!
//! For a level `k`, `s = sign0+(u_{i+1} - k)` and the step `i -> i+1`, the
//! cell residual is
//!
//! ```text
//! ((u_{i+1}-k)+ - (u_i-k)+)/tau - L_diff(p+) + div_upw((u_{i+1}-k)+ V) + k div V s - f_i s
//! ```
//!
//! which the monotone scheme keeps nonpositive up to regularization effects.
//! It is tested against nonnegative tent bumps supported away from the
//! boundary. The mirrored inequality comes from `(u, p, f, k) -> -(u, p, f, k)`.

use super::PropertyReport;
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::geometry::{cutoff_xi_h, BoundaryKind};
#[cfg(test)]
use crate::geometry::ScalarField;
use crate::graphs::sign0_plus;
use crate::scalar::{pos, Real};
use crate::stationary::DiscreteOperator;

#[derive(Clone, Debug)]
pub struct EntropyOptions<T> {
    pub k_grid: Vec<T>,
    /// `tol_e = c_e (h + tau)`.
    pub c_e: T,
}

impl<T: Real> Default for EntropyOptions<T> {
    fn default() -> Self {
        Self {
            k_grid: (0..7).map(|j| T::lit(-0.9 + 0.3 * j as f64)).collect(),
            c_e: T::one(),
        }
    }
}

struct Patch {
    cells: Vec<(usize, f64)>,
}

fn interior_patches<T: Real>(grid: &crate::geometry::StructuredGrid<T>) -> Vec<Patch> {
    let [nx, ny] = grid.cells();
    let tent = [(-1i64, 0.5), (0, 1.0), (1, 0.5)];
    let mut out = Vec::new();
    if grid.dimension() == 1 {
        for i in 2..nx.saturating_sub(2) {
            out.push(Patch {
                cells: tent.iter().map(|(d, w)| (grid.cell_index((i as i64 + d) as usize, 0), *w)).collect(),
            });
        }
    } else {
        for j in 2..ny.saturating_sub(2) {
            for i in 2..nx.saturating_sub(2) {
                let mut cells = Vec::with_capacity(9);
                for (dj, wj) in &tent {
                    for (di, wi) in &tent {
                        cells.push((grid.cell_index((i as i64 + di) as usize, (j as i64 + dj) as usize), wi * wj));
                    }
                }
                out.push(Patch { cells });
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn cell_residual<T: Real>(
    op: &DiscreteOperator<'_, T>,
    div: &[T],
    tau: T,
    u_prev: &[T],
    u_next: &[T],
    p_next: &[T],
    f: &[T],
    k: T,
) -> Vec<T> {
    let w_next: Vec<T> = u_next.iter().map(|u| pos(*u - k)).collect();
    let p_plus: Vec<T> = p_next.iter().map(|p| pos(*p)).collect();
    let lap = op.neg_laplacian(&p_plus);
    let adv = op.upwind_divergence(&w_next);
    (0..u_next.len())
        .map(|c| {
            let s = sign0_plus(u_next[c] - k);
            (w_next[c] - pos(u_prev[c] - k)) / tau + lap[c] + adv[c] + k * div[c] * s - f[c] * s
        })
        .collect()
}

fn negated<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| -*x).collect()
}

/// `sum_i tau sum_faces grad p^{+/-} . grad xi_h` near the boundary, for
/// `xi_h` the distance cutoff of width `2h`. Reported, not gated.
fn boundary_diagnostic<T: Real>(traj: &Trajectory<T>, minus: bool) -> Result<T> {
    let grid = traj.grid();
    let xi = cutoff_xi_h(grid, T::lit(2.0) * grid.h())?;
    let xi = xi.values();
    let mut total = T::zero();
    for i in 1..=traj.n_steps() {
        let p = traj.p(i).values();
        let part = |c: usize| if minus { pos(-p[c]) } else { pos(p[c]) };
        for (id, f) in grid.faces().iter().enumerate() {
            let w = f.area / f.normal_distance;
            let term = match (f.low, f.high) {
                (Some(l), Some(h)) => (part(h) - part(l)) * (xi[h] - xi[l]) * w,
                _ => {
                    if grid.boundary_kind(id) != Some(BoundaryKind::Dirichlet) {
                        continue;
                    }
                    let (c, _) = f.boundary_cell().unwrap();
                    part(c) * xi[c] * w
                }
            };
            total += traj.tau() * term;
        }
    }
    Ok(total)
}

/// Worst tent-weighted residual of both entropy inequalities over all steps,
/// levels and interior patches.
pub fn entropy_residual<T: Real>(traj: &Trajectory<T>, opts: &EntropyOptions<T>, scenario: &str) -> Result<PropertyReport> {
    let grid = traj.grid();
    let patches = interior_patches(grid);
    if patches.is_empty() {
        return Err(Error::InvalidParameter("grid too small for interior entropy patches".into()));
    }
    if opts.k_grid.iter().any(|k| !(k.abs() < T::one())) {
        return Err(Error::InvalidParameter("entropy levels must lie in (-1, 1)".into()));
    }
    let op = DiscreteOperator::new(grid, traj.velocity());
    let div = traj.velocity().divergence().values();
    let tau = traj.tau();
    let tol_e = (opts.c_e * (grid.h() + tau)).to_f64_lossy();
    let mut series = vec![0.0];
    let mut worst_plus = f64::NEG_INFINITY;
    let mut worst_minus = f64::NEG_INFINITY;
    for i in 0..traj.n_steps() {
        let (up, un, pn, f) = (
            traj.u(i).values(),
            traj.u(i + 1).values(),
            traj.p(i + 1).values(),
            traj.sources()[i].values(),
        );
        let (nup, nun, npn, nf) = (negated(up), negated(un), negated(pn), negated(f));
        let mut step_worst = f64::NEG_INFINITY;
        for &k in &opts.k_grid {
            let plus = cell_residual(&op, div, tau, up, un, pn, f, k);
            let minus = cell_residual(&op, div, tau, &nup, &nun, &npn, &nf, -k);
            for patch in &patches {
                let wsum: f64 = patch.cells.iter().map(|(_, w)| w).sum();
                let tested = |r: &[T]| patch.cells.iter().map(|(c, w)| r[*c].to_f64_lossy() * w).sum::<f64>() / wsum;
                let rp = tested(&plus);
                let rm = tested(&minus);
                worst_plus = worst_plus.max(rp);
                worst_minus = worst_minus.max(rm);
                step_worst = step_worst.max(rp).max(rm);
            }
        }
        series.push(-step_worst);
    }
    Ok(PropertyReport::from_margins("entropy", scenario, series, tol_e)
        .with_detail("tol_e", tol_e)
        .with_detail("max_residual_plus", worst_plus)
        .with_detail("max_residual_minus", worst_minus)
        .with_detail("boundary_diagnostic_plus", boundary_diagnostic(traj, false)?.to_f64_lossy())
        .with_detail("boundary_diagnostic_minus", boundary_diagnostic(traj, true)?.to_f64_lossy()))
}

/// Cell residual fields of the `+` inequality, exposed for tests.
#[cfg(test)]
pub(crate) fn plus_residual<T: Real>(traj: &Trajectory<T>, i: usize, k: T) -> ScalarField<T> {
    let op = DiscreteOperator::new(traj.grid(), traj.velocity());
    ScalarField::from_raw(cell_residual(
        &op,
        traj.velocity().divergence().values(),
        traj.tau(),
        traj.u(i).values(),
        traj.u(i + 1).values(),
        traj.p(i + 1).values(),
        traj.sources()[i].values(),
        k,
    ))
}
