//! Scenarios built to violate a hypothesis; each report must fail.

use super::properties::{comparison_margins, contraction_margins, one_phase_margins, stability_margins};
use super::scenarios::{comparison_pack, compressive_scenario};
use super::transport::{congestion_margins, CongestionOptions};
use super::entropy::{entropy_residual, EntropyOptions};
use super::{PropertyReport, TOL_C};
use crate::error::Result;
use crate::evolution::{barrier_margins, run_evolution, EvolutionProblem, Source, SourceField, Trajectory};
use crate::geometry::{BoundaryKind, ScalarField, StructuredGrid};
use crate::reaction::ReactionTerm;
use crate::scalar::Real;
use crate::velocity::VelocityField;

/// Backward-heat sharpening of a bump with zero pressure and source: peaks
/// grow with nothing to pay for them.
pub fn anti_diffusive_trajectory<T: Real>(n: usize, steps: usize, tau: T) -> Result<Trajectory<T>> {
    let grid = StructuredGrid::interval(T::one(), n, BoundaryKind::Dirichlet, BoundaryKind::Dirichlet)?;
    let v = VelocityField::zero(&grid);
    let h = grid.h();
    let d = T::lit(0.2) * h * h / tau;
    let mut u = vec![ScalarField::from_fn(&grid, |_, x| {
        T::lit(0.5) * (-(x[0] - T::lit(0.5)).powi(2) / T::lit(0.02)).exp()
    })];
    for _ in 0..steps {
        let prev = u.last().unwrap().values();
        let next: Vec<T> = (0..n)
            .map(|c| {
                let l = if c > 0 { prev[c - 1] } else { T::zero() };
                let r = if c + 1 < n { prev[c + 1] } else { T::zero() };
                let lap = (l - T::lit(2.0) * prev[c] + r) / (h * h);
                (prev[c] - tau * d * lap).clamp_to(-T::one(), T::one())
            })
            .collect();
        u.push(ScalarField::from_raw(next));
    }
    let p = vec![ScalarField::zeros(&grid); steps + 1];
    let f = vec![ScalarField::zeros(&grid); steps];
    Trajectory::from_parts(grid, v, tau, T::lit(1e-8), u, p, f)
}

/// One failing report per checker, each marked as an expected failure.
pub fn negative_controls(seed: u64) -> Result<Vec<PropertyReport>> {
    let mut out = Vec::new();
    let pair = comparison_pack::<f64>(seed, 1, 60, 0.2, 0.01)?.remove(0);

    // contraction: equal initial data, sources differ but are declared equal
    let mut upper = pair.upper.clone();
    upper.u0 = pair.lower.u0.clone();
    let a = run_evolution(&pair.lower)?;
    let b = run_evolution(&upper)?;
    let m = contraction_margins(&a, &b, a.sources(), a.sources())?;
    out.push(PropertyReport::from_margins("contraction", "misdeclared-sources", m, TOL_C).expect_fail());

    // comparison: disordered initial data
    let hi = run_evolution(&pair.upper)?;
    let m = comparison_margins(&hi, &a)?;
    out.push(PropertyReport::from_margins("comparison", "disordered-initial-data", m, TOL_C).expect_fail());

    // one phase: negative initial density
    let mut neg = pair.lower.clone();
    neg.u0 = ScalarField::from_fn(&neg.grid, |_, x| if x[0] < 0.5 { -0.5 } else { 0.2 });
    neg.source = Source::Field(SourceField::zero());
    let t = run_evolution(&neg)?;
    out.push(one_phase_margins(&t, "negative-initial-density", TOL_C).expect_fail());

    // congestion: compressive drift
    let comp = compressive_scenario::<f64>(100)?;
    out.push(congestion_margins(&comp, CongestionOptions::default(), "compressive-drift")?.expect_fail());

    // stability: actual perturbation five times the declared size
    let g = StructuredGrid::<f64>::interval(1.0, 50, BoundaryKind::Dirichlet, BoundaryKind::Dirichlet)?;
    let base = EvolutionProblem::new(
        g.clone(),
        VelocityField::zero(&g),
        ScalarField::from_fn(&g, |_, x| 0.3 * (6.0 * x[0]).sin()),
        0.2,
        0.02,
        Source::Field(SourceField::zero()),
    );
    let (m, _) = stability_margins(&base, &[1e-2, 1e-3], 5.0, seed)?;
    out.push(PropertyReport::from_margins("stability", "undeclared-perturbation", m, 10.0 * TOL_C).expect_fail());

    // entropy: anti-diffusive fake trajectory
    let fake = anti_diffusive_trajectory::<f64>(60, 10, 0.01)?;
    out.push(entropy_residual(&fake, &EntropyOptions::default(), "anti-diffusive")?.expect_fail());

    // barrier: supersolution started below the data
    let r = ReactionTerm::linear_decay(1.0, 1.0);
    let mut pb = base.clone();
    pb.source = Source::Reaction(r.clone());
    let tr = run_evolution(&pb)?;
    let start = tr.u(0).max() - 0.2;
    let rep = barrier_margins(&tr, -1.0, start, &r, 1e-10)?;
    out.push(
        PropertyReport::from_margins(
            "sub_supersolution",
            "barrier-below-data",
            vec![rep.lower_margin, rep.upper_margin],
            rep.tolerance,
        )
        .expect_fail(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_control_fails() {
        let reps = negative_controls(5).unwrap();
        assert_eq!(reps.len(), 7);
        for r in &reps {
            assert!(!r.passed, "{} / {} passed: {}", r.property, r.scenario, r.worst_margin);
            assert!(r.as_expected());
        }
    }
}
