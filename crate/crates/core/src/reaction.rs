//! Reaction terms `g(t, x, r)` and sampled certification of their
//! structural conditions.
//!
//! Evaluators are black boxes, so every condition is checked on a finite
//! lattice of times, cells and densities. The one-sided Lipschitz modulus is
//! declared by the caller and only verified here.

use crate::error::{Error, Result};
use crate::geometry::StructuredGrid;
use crate::scalar::{neg, pos, Real};
use crate::velocity::VelocityField;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

pub type Evaluator<T> = Arc<dyn Fn(T, usize, T) -> T + Send + Sync>;
pub type Modulus<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Slack allowed by every sampled inequality.
pub const SAMPLE_SLACK: f64 = 1e-9;

/// Declared sup-norm bounds on `g+(., -1)` and `g-(., 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeclaredBounds<T> {
    pub g_plus_at_minus_one: T,
    pub g_minus_at_one: T,
}

#[derive(Clone)]
pub struct ReactionTerm<T> {
    evaluator: Evaluator<T>,
    modulus: Modulus<T>,
    declared: Option<DeclaredBounds<T>>,
    label: String,
}

impl<T> fmt::Debug for ReactionTerm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionTerm").field("label", &self.label).finish()
    }
}

impl<T: Real> ReactionTerm<T> {
    pub fn new(
        label: impl Into<String>,
        evaluator: impl Fn(T, usize, T) -> T + Send + Sync + 'static,
        modulus: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            evaluator: Arc::new(evaluator),
            modulus: Arc::new(modulus),
            declared: None,
            label: label.into(),
        }
    }

    pub fn with_declared_bounds(mut self, bounds: DeclaredBounds<T>) -> Self {
        self.declared = Some(bounds);
        self
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, _, _| T::zero(), |_| T::zero())
    }

    pub fn constant(c: T) -> Self {
        Self::new(format!("constant({c})"), move |_, _, _| c, |_| T::zero())
    }

    /// `g(r) = a - b r`; one-sided modulus `max(-b, 0)`.
    pub fn linear_decay(a: T, b: T) -> Self {
        let r = neg(b);
        Self::new(format!("linear_decay({a}, {b})"), move |_, _, x| a - b * x, move |_| r)
    }

    /// `g(r) = rate * r * (1 - r)`; on `[-1, 1]` the slope is at most `3 rate`.
    pub fn logistic(rate: T) -> Self {
        let r = pos(rate) * T::lit(3.0) + neg(rate);
        Self::new(
            format!("logistic({rate})"),
            move |_, _, x| rate * x * (T::one() - x),
            move |_| r,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, t: T, cell: usize, r: T) -> T {
        (self.evaluator)(t, cell, r)
    }

    #[inline]
    pub fn modulus(&self, t: T) -> T {
        (self.modulus)(t)
    }

    pub fn declared_bounds(&self) -> Option<DeclaredBounds<T>> {
        self.declared
    }

    pub fn sup_modulus(&self, samples: &SampleSpec<T>) -> T {
        samples
            .times
            .iter()
            .fold(T::zero(), |m, t| m.max(self.modulus(*t)))
    }
}

/// Lattice of times x cells x densities on which conditions are sampled.
#[derive(Clone, Debug)]
pub struct SampleSpec<T> {
    pub times: Vec<T>,
    /// Number of intervals of the uniform density grid on `[-1, 1]`.
    pub r_intervals: usize,
    pub n_cells: usize,
    /// Horizon used to weight the `L^2(Q)` surrogate.
    pub horizon: T,
}

impl<T: Real> SampleSpec<T> {
    pub fn uniform(grid: &StructuredGrid<T>, horizon: T, n_times: usize, r_intervals: usize) -> Self {
        let n = n_times.max(1);
        let times = (0..=n)
            .map(|k| horizon * T::from_usize(k).unwrap() / T::from_usize(n).unwrap())
            .collect();
        Self {
            times,
            r_intervals: r_intervals.max(1),
            n_cells: grid.n_cells(),
            horizon,
        }
    }

    pub fn r_grid(&self) -> Vec<T> {
        let n = T::from_usize(self.r_intervals).unwrap();
        (0..=self.r_intervals)
            .map(|k| -T::one() + T::lit(2.0) * T::from_usize(k).unwrap() / n)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub passed: bool,
    /// Worst signed margin; negative means violated.
    pub margin: f64,
}

impl ConditionOutcome {
    fn from_margin(margin: f64) -> Self {
        Self {
            passed: margin >= -SAMPLE_SLACK,
            margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub g1: ConditionOutcome,
    pub g2: ConditionOutcome,
    pub g3: ConditionOutcome,
    pub g4: ConditionOutcome,
    pub g5: ConditionOutcome,
    /// Sampled `L^2(Q)` norms of `g+(., -1)` and `g-(., 1)`.
    pub g1_l2_norms: (f64, f64),
}

/// Samples the integrability, one-sided Lipschitz, congestion-avoidance and
/// positivity conditions.
pub fn check_conditions<T: Real>(
    g: &ReactionTerm<T>,
    grid: &StructuredGrid<T>,
    v: &VelocityField<T>,
    samples: &SampleSpec<T>,
) -> ConditionReport {
    let one = T::one();
    let div = v.divergence().values();
    let nt = T::from_usize(samples.times.len()).unwrap();
    let dt = samples.horizon / nt;
    let vol = grid.cell_volume();

    let mut l2_plus = T::zero();
    let mut l2_minus = T::zero();
    let mut sup_plus = T::zero();
    let mut sup_minus = T::zero();
    let mut g3 = T::infinity();
    let mut g4 = T::infinity();
    let mut g5 = T::infinity();
    for &t in &samples.times {
        for c in 0..samples.n_cells {
            let at_minus = g.eval(t, c, -one);
            let at_plus = g.eval(t, c, one);
            let gp = pos(at_minus);
            let gm = neg(at_plus);
            l2_plus += gp * gp * vol * dt;
            l2_minus += gm * gm * vol * dt;
            sup_plus = sup_plus.max(gp);
            sup_minus = sup_minus.max(gm);
            g3 = g3.min(div[c] - at_plus);
            g4 = g4.min(at_minus - div[c]);
            g5 = g5.min(g.eval(t, c, T::zero()));
        }
    }
    let l2 = (l2_plus.sqrt().to_f64_lossy(), l2_minus.sqrt().to_f64_lossy());
    let g1_margin = if !(l2.0.is_finite() && l2.1.is_finite()) {
        f64::NEG_INFINITY
    } else if let Some(b) = g.declared_bounds() {
        (b.g_plus_at_minus_one - sup_plus)
            .min(b.g_minus_at_one - sup_minus)
            .to_f64_lossy()
    } else {
        0.0
    };
    ConditionReport {
        g1: ConditionOutcome::from_margin(g1_margin),
        g2: ConditionOutcome::from_margin(one_sided_lipschitz_margin(g, samples)),
        g3: ConditionOutcome::from_margin(g3.to_f64_lossy()),
        g4: ConditionOutcome::from_margin(g4.to_f64_lossy()),
        g5: ConditionOutcome::from_margin(g5.to_f64_lossy()),
        g1_l2_norms: l2,
    }
}

/// Worst `R(t)(b - a) - (g(b) - g(a))` over adjacent lattice densities.
/// Adjacent pairs suffice: increments over any `a < b` telescope.
pub fn one_sided_lipschitz_margin<T: Real>(g: &ReactionTerm<T>, samples: &SampleSpec<T>) -> f64 {
    let rs = samples.r_grid();
    let mut worst = T::infinity();
    for &t in &samples.times {
        let rmod = g.modulus(t);
        for c in 0..samples.n_cells {
            let mut prev = g.eval(t, c, rs[0]);
            for w in rs.windows(2) {
                let next = g.eval(t, c, w[1]);
                worst = worst.min(rmod * (w[1] - w[0]) - (next - prev));
                prev = next;
            }
        }
    }
    worst.to_f64_lossy()
}

/// `g_alpha(t, x, r) = alpha g(t, x, r / alpha)`, same modulus.
pub fn scale_reaction<T: Real>(g: &ReactionTerm<T>, alpha: T) -> Result<ReactionTerm<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::InvalidParameter(format!("scaling alpha must be positive, got {alpha}")));
    }
    let inner = g.evaluator.clone();
    Ok(ReactionTerm {
        evaluator: Arc::new(move |t, c, r| alpha * inner(t, c, r / alpha)),
        modulus: g.modulus.clone(),
        declared: g.declared.map(|b| DeclaredBounds {
            g_plus_at_minus_one: alpha * b.g_plus_at_minus_one,
            g_minus_at_one: alpha * b.g_minus_at_one,
        }),
        label: format!("{}*alpha({alpha})", g.label),
    })
}

/// Pointwise envelope `-g-(., 1) - R (1 - r) <= g(., r) <= g+(., -1) + R (1 + r)`.
pub fn envelope_check<T: Real>(g: &ReactionTerm<T>, samples: &SampleSpec<T>) -> bool {
    let one = T::one();
    let slack = T::lit(SAMPLE_SLACK);
    let rs = samples.r_grid();
    for &t in &samples.times {
        let rmod = g.modulus(t);
        for c in 0..samples.n_cells {
            let upper0 = pos(g.eval(t, c, -one));
            let lower0 = -neg(g.eval(t, c, one));
            for &r in &rs {
                let val = g.eval(t, c, r);
                if val > upper0 + rmod * (one + r) + slack || val < lower0 - rmod * (one - r) - slack {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryKind::Dirichlet as D;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn setup() -> (StructuredGrid<f64>, VelocityField<f64>, SampleSpec<f64>) {
        let g = StructuredGrid::interval(1.0, 8, D, D).unwrap();
        let v = VelocityField::zero(&g);
        let s = SampleSpec::uniform(&g, 1.0, 4, 20);
        (g, v, s)
    }

    #[test]
    fn zero_reaction_passes_with_zero_margins() {
        let (g, v, s) = setup();
        let rep = check_conditions(&ReactionTerm::zero(), &g, &v, &s);
        for o in [rep.g1, rep.g2, rep.g3, rep.g4, rep.g5] {
            assert!(o.passed);
            assert_eq!(o.margin, 0.0);
        }
    }

    #[test]
    fn decreasing_reaction_passes_g2() {
        let (g, v, s) = setup();
        let rep = check_conditions(&ReactionTerm::linear_decay(1.0, 1.0), &g, &v, &s);
        assert!(rep.g2.passed);
    }

    #[test]
    fn positive_constant_fails_g3() {
        let (g, v, s) = setup();
        let rep = check_conditions(&ReactionTerm::constant(1.0), &g, &v, &s);
        assert!(!rep.g3.passed);
        assert_eq!(rep.g3.margin, -1.0);
        assert!(rep.g4.passed);
    }

    #[test]
    fn declared_bounds_are_checked() {
        let (g, v, s) = setup();
        let honest = ReactionTerm::linear_decay(1.0, 1.0).with_declared_bounds(DeclaredBounds {
            g_plus_at_minus_one: 2.0,
            g_minus_at_one: 0.0,
        });
        assert!(check_conditions(&honest, &g, &v, &s).g1.passed);
        let liar = ReactionTerm::linear_decay(1.0, 1.0).with_declared_bounds(DeclaredBounds {
            g_plus_at_minus_one: 1.0,
            g_minus_at_one: 0.0,
        });
        assert!(!check_conditions(&liar, &g, &v, &s).g1.passed);
    }

    #[test]
    fn scaling_examples() {
        let g = ReactionTerm::<f64>::linear_decay(1.0, 1.0);
        let same = scale_reaction(&g, 1.0).unwrap();
        for r in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(same.eval(0.0, 0, r), g.eval(0.0, 0, r));
        }
        let half = scale_reaction(&g, 0.5).unwrap();
        assert_abs_diff_eq!(half.eval(0.0, 0, 0.25), 0.25, epsilon = 1e-15);
        let c = scale_reaction(&ReactionTerm::constant(3.0), 0.2).unwrap();
        assert_abs_diff_eq!(c.eval(0.1, 3, 0.9), 0.6, epsilon = 1e-15);
        assert!(scale_reaction(&g, 0.0).is_err());
        assert!(scale_reaction(&g, -1.0).is_err());
    }

    #[test]
    fn envelope_examples() {
        let (_, _, s) = setup();
        assert!(envelope_check(&ReactionTerm::zero(), &s));
        // upper envelope g+(-1) = 2 dominates 1 - r on [-1, 1]
        let decay = ReactionTerm::linear_decay(1.0, 1.0);
        let rs = s.r_grid();
        assert!(rs.iter().all(|r| 1.0 - r <= 2.0));
        assert!(envelope_check(&decay, &s));
        let bad = ReactionTerm::new("10r", |_, _, r: f64| 10.0 * r, |_| 0.0);
        assert!(!envelope_check(&bad, &s));
    }

    proptest! {
        #[test]
        fn g2_passes_on_coarser_nested_grids(rate in -2.0f64..2.0, m in 1usize..6, k in 1usize..5) {
            let (g, _, _) = setup();
            let term = ReactionTerm::logistic(rate);
            let fine = SampleSpec::uniform(&g, 1.0, 2, m * k);
            let coarse = SampleSpec::uniform(&g, 1.0, 2, m);
            if one_sided_lipschitz_margin(&term, &fine) >= -SAMPLE_SLACK {
                prop_assert!(one_sided_lipschitz_margin(&term, &coarse) >= -SAMPLE_SLACK);
            }
        }

        #[test]
        fn scaling_preserves_g2(a in -1.0f64..1.0, b in -1.0f64..3.0, alpha in 0.05f64..1.0) {
            let (g, v, s) = setup();
            let term = ReactionTerm::linear_decay(a, b);
            let rep = check_conditions(&term, &g, &v, &s);
            let scaled = scale_reaction(&term, alpha).unwrap();
            let rep_s = check_conditions(&scaled, &g, &v, &s);
            prop_assert!(rep.g2.passed);
            prop_assert!(rep_s.g2.passed);
        }

        #[test]
        fn g3_g4_order_divergence(c in 0.0f64..2.0) {
            let g = StructuredGrid::interval(1.0, 8, D, D).unwrap();
            let v = VelocityField::linear(&g, [c, 0.0], [0.0, 0.0]).unwrap();
            let s = SampleSpec::uniform(&g, 1.0, 3, 10);
            let term = ReactionTerm::linear_decay(0.0, c);
            let rep = check_conditions(&term, &g, &v, &s);
            if rep.g3.passed && rep.g4.passed {
                for cell in 0..g.n_cells() {
                    let d = v.divergence().values()[cell];
                    prop_assert!(term.eval(0.0, cell, 1.0) <= d + 1e-9);
                    prop_assert!(d <= term.eval(0.0, cell, -1.0) + 1e-9);
                }
            }
        }
    }
}
