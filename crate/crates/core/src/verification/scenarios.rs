//! Seeded scenarios shared by the acceptance suite and the CLI.

use crate::error::Result;
use crate::evolution::{EvolutionProblem, Source, SourceField};
use crate::geometry::{BoundaryKind, ScalarField, StructuredGrid};
use crate::scalar::Real;
use crate::velocity::{crowd_motion_field, VelocityField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two problems with ordered data: `lower.u0 <= upper.u0`, `f_lower <= f_upper`.
#[derive(Clone, Debug)]
pub struct ScenarioPair<T> {
    pub id: String,
    pub lower: EvolutionProblem<T>,
    pub upper: EvolutionProblem<T>,
}

fn blocks<T: Real>(grid: &StructuredGrid<T>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField<T> {
    let nb = rng.gen_range(4..10usize);
    let vals: Vec<f64> = (0..nb).map(|_| rng.gen_range(lo..hi)).collect();
    let len = grid.extents()[0];
    ScalarField::from_fn(grid, |_, x| {
        let b = ((x[0] / len).to_f64_lossy() * nb as f64) as usize;
        T::lit(vals[b.min(nb - 1)])
    })
}

fn modulated<T: Real>(label: String, field: ScalarField<T>, freq: f64, amp: f64) -> SourceField<T> {
    let v = field.into_values();
    SourceField::new(label, move |t: T, c| {
        v[c] * (T::one() + T::lit(amp) * (T::lit(2.0 * std::f64::consts::PI * freq) * t).sin())
    })
}

/// `count` random 1D pairs on `n` cells: boundary split, drift, piecewise
/// constant data and time-modulated sources all drawn from `seed`.
pub fn comparison_pack<T: Real>(seed: u64, count: usize, n: usize, horizon: T, tau: T) -> Result<Vec<ScenarioPair<T>>> {
    use BoundaryKind::{Dirichlet as D, Neumann as N};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let (left, right) = [(D, D), (N, D), (D, N)][rng.gen_range(0..3)];
        let grid = StructuredGrid::interval(T::one(), n, left, right)?;
        let drift_kind = rng.gen_range(0..3);
        let velocity = match drift_kind {
            0 => VelocityField::zero(&grid),
            1 => crowd_motion_field(&grid, T::lit(rng.gen_range(0.05..0.3)))?,
            _ => {
                let speed = rng.gen_range(0.2..1.5);
                let c = match (left, right) {
                    (N, D) => speed,
                    (D, N) => -speed,
                    _ => 0.0,
                };
                VelocityField::constant(&grid, [T::lit(c), T::zero()])?.zero_on_neumann(&grid)
            }
        };
        let u0 = blocks(&grid, &mut rng, -1.0, 1.0);
        let du = blocks(&grid, &mut rng, 0.0, 0.3);
        let u0_up = u0.zip_map(&du, |a, b| (a + b).min(T::one()));
        let f = blocks(&grid, &mut rng, -1.5, 1.5);
        let df = blocks(&grid, &mut rng, 0.0, 0.5);
        let freq = rng.gen_range(0.5..3.0);
        let amp = rng.gen_range(0.0..0.5);
        let f_up = f.zip_map(&df, |a, b| a + b);
        // the modulation factor is positive, so the order of f survives it
        let lower = EvolutionProblem::new(
            grid.clone(),
            velocity.clone(),
            u0,
            horizon,
            tau,
            Source::Field(modulated(format!("pack{s}-lower"), f, freq, amp)),
        );
        let upper = EvolutionProblem::new(
            grid,
            velocity,
            u0_up,
            horizon,
            tau,
            Source::Field(modulated(format!("pack{s}-upper"), f_up, freq, amp)),
        );
        out.push(ScenarioPair {
            id: format!("seed{seed}-pair{s}"),
            lower,
            upper,
        });
    }
    Ok(out)
}

/// Crowd leaving through the right end: saturated block plus a nonnegative
/// inflow near the door.
pub fn crowd_inflow_scenario<T: Real>(n: usize, horizon: T, tau: T) -> Result<EvolutionProblem<T>> {
    let grid = StructuredGrid::interval(T::one(), n, BoundaryKind::Neumann, BoundaryKind::Dirichlet)?;
    let v = crowd_motion_field(&grid, T::lit(0.1))?;
    let u0 = ScalarField::from_fn(&grid, |_, x| {
        if x[0] >= T::lit(0.2) && x[0] <= T::lit(0.6) {
            T::one()
        } else {
            T::lit(0.3)
        }
    });
    let f = SourceField::from_space_time("door inflow", &grid, |_, x| {
        if x[0] >= T::lit(0.5) {
            T::lit(0.2)
        } else {
            T::zero()
        }
    });
    Ok(EvolutionProblem::new(grid, v, u0, horizon, tau, Source::Field(f)))
}

/// Smooth bump carried by `V = 1` towards the exit, wall at `x = 0`. Level
/// `k` has `320 * 2^k` cells and `tau = h`, `T = 0.25`. Coarser bases sit in
/// the pre-asymptotic range of the first-order scheme.
pub fn congestion_free_scenario<T: Real>(level: usize) -> Result<EvolutionProblem<T>> {
    let m = 1usize << level;
    let grid = StructuredGrid::interval(T::one(), 320 * m, BoundaryKind::Neumann, BoundaryKind::Dirichlet)?;
    let v = VelocityField::constant(&grid, [T::one(), T::zero()])?.zero_on_neumann(&grid);
    let pi = T::lit(std::f64::consts::PI);
    let u0 = ScalarField::from_fn(&grid, |_, x| {
        let s = x[0];
        if s > T::lit(0.1) && s < T::lit(0.5) {
            T::lit(0.9) * (pi * (s - T::lit(0.1)) / T::lit(0.4)).sin().powi(2)
        } else {
            T::zero()
        }
    });
    let tau = T::lit(1.0 / 320.0) / T::from_usize(m).unwrap();
    Ok(EvolutionProblem::new(grid, v, u0, T::lit(0.25), tau, Source::Field(SourceField::zero())))
}

/// Negative control: `div V = -0.5` on the left half squeezes a dense block
/// against the wall.
pub fn compressive_scenario<T: Real>(n: usize) -> Result<EvolutionProblem<T>> {
    let grid = StructuredGrid::interval(T::one(), n, BoundaryKind::Neumann, BoundaryKind::Dirichlet)?;
    let half = T::lit(0.5);
    let v = VelocityField::from_faces(&grid, |f| {
        let x = f.center[0];
        if x <= half {
            -half * x
        } else {
            T::lit(-0.25) + T::lit(1.25) * (x - half)
        }
    })?;
    let u0 = ScalarField::from_fn(&grid, |_, x| if x[0] <= half { T::lit(0.9) } else { T::zero() });
    Ok(EvolutionProblem::new(grid, v, u0, half, T::lit(0.01), Source::Field(SourceField::zero())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::check_admissibility;

    #[test]
    fn pack_is_seeded_and_ordered() {
        let a = comparison_pack::<f64>(11, 5, 50, 0.1, 0.01).unwrap();
        let b = comparison_pack::<f64>(11, 5, 50, 0.1, 0.01).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.lower.u0.values(), y.lower.u0.values());
            assert!(x.lower.u0.values().iter().zip(x.upper.u0.values()).all(|(p, q)| p <= q));
            assert!(check_admissibility(&x.lower.grid, &x.lower.velocity, 1e-12).passed);
            if let (Source::Field(f), Source::Field(g)) = (&x.lower.source, &x.upper.source) {
                for c in 0..50 {
                    assert!(f.eval(0.37, c) <= g.eval(0.37, c));
                }
            }
        }
    }

    #[test]
    fn control_scenarios_are_admissible() {
        let c = compressive_scenario::<f64>(50).unwrap();
        assert!(check_admissibility(&c.grid, &c.velocity, 1e-12).passed);
        assert!((c.velocity.divergence().values()[10] + 0.5).abs() < 1e-12);
        let f = congestion_free_scenario::<f64>(1).unwrap();
        assert_eq!(f.grid.n_cells(), 640);
        assert!(f.velocity.divergence().values()[1..].iter().all(|d| d.abs() < 1e-12));
    }
}
