//! The sign graph, its step selections, and Lipschitz regularizations.

use crate::error::{Error, Result};
use crate::scalar::{pos, Real};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Approximates `sign`, values in `[-1, 1]`.
    TwoPhase,
    /// Approximates `sign+`, values in `[0, 1]`.
    OnePhase,
}

/// `H_eps`: a nondecreasing `1/eps`-Lipschitz clamp approximating the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphRegularization<T> {
    epsilon: T,
    kind: GraphKind,
}

impl<T: Real> GraphRegularization<T> {
    pub fn new(epsilon: T, kind: GraphKind) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "graph epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, kind })
    }

    pub fn two_phase(epsilon: T) -> Result<Self> {
        Self::new(epsilon, GraphKind::TwoPhase)
    }

    pub fn one_phase(epsilon: T) -> Result<Self> {
        Self::new(epsilon, GraphKind::OnePhase)
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        Self::new(epsilon, self.kind)
    }

    /// Lower saturation value: `-1` or `0`.
    pub fn floor(&self) -> T {
        match self.kind {
            GraphKind::TwoPhase => -T::one(),
            GraphKind::OnePhase => T::zero(),
        }
    }

    #[inline]
    pub fn apply(&self, r: T) -> T {
        h_eps(self, r)
    }

    /// Derivative used by the semismooth Newton solver; zero on the
    /// saturated pieces and at the kinks.
    #[inline]
    pub fn slope(&self, r: T) -> T {
        let lo = self.floor() * self.epsilon;
        if r > lo && r < self.epsilon {
            T::one() / self.epsilon
        } else {
            T::zero()
        }
    }

    /// `p` with `H_eps(p) = u` for `u` in the open range; the saturated ends
    /// map to the kink points.
    pub fn preimage(&self, u: T) -> T {
        u.clamp_to(self.floor(), T::one()) * self.epsilon
    }
}

pub fn h_eps<T: Real>(reg: &GraphRegularization<T>, r: T) -> T {
    (r / reg.epsilon).clamp_to(reg.floor(), T::one())
}

/// `min(r+ / eps, 1)`.
pub fn h_eps_plus<T: Real>(eps: T, r: T) -> T {
    (pos(r) / eps).min(T::one())
}

/// C1 antiderivative of [`h_eps_plus`]: `(r+)^2 / (2 eps)` up to `eps`, then
/// `r - eps/2`.
pub fn tilde_h_eps<T: Real>(eps: T, r: T) -> T {
    if r <= eps {
        let rp = pos(r);
        rp * rp / (T::lit(2.0) * eps)
    } else {
        r - eps / T::lit(2.0)
    }
}

/// Resolvent of the sign graph `(I + lambda sign)^{-1}`: soft thresholding.
pub fn resolvent_sign<T: Real>(lambda: T, r: T) -> T {
    if r > lambda {
        r - lambda
    } else if r < -lambda {
        r + lambda
    } else {
        T::zero()
    }
}

/// Resolvent `(I + lambda H_eps)^{-1}(r)` computed by bisection; the map
/// `s -> s + lambda H_eps(s)` is strictly increasing so the root is unique.
pub fn resolvent_regularized<T: Real>(reg: &GraphRegularization<T>, lambda: T, r: T, tol: T) -> T {
    let mut lo = r - lambda;
    let mut hi = r + lambda;
    let f = |s: T| s + lambda * reg.apply(s) - r;
    let two = T::lit(2.0);
    for _ in 0..400 {
        let mid = (lo + hi) / two;
        if hi - lo <= tol {
            return mid;
        }
        if f(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / two
}

/// Single-valued step selections `(sign0, sign0+, sign0-)`.
pub fn step_functions<T: Real>(r: T) -> (T, T, T) {
    let z = T::zero();
    let o = T::one();
    let sign0 = if r > z {
        o
    } else if r < z {
        -o
    } else {
        z
    };
    let plus = if r > z { o } else { z };
    let minus = if r < z { o } else { z };
    (sign0, plus, minus)
}

#[inline]
pub fn sign0_plus<T: Real>(r: T) -> T {
    if r > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn regularization_examples() {
        let two = GraphRegularization::two_phase(0.1).unwrap();
        assert_abs_diff_eq!(h_eps(&two, 0.05), 0.5, epsilon = 1e-15);
        assert_eq!(h_eps(&two, -1.0), -1.0);
        let one = GraphRegularization::one_phase(0.5).unwrap();
        assert_eq!(h_eps(&one, 0.25), 0.5);
        assert_eq!(h_eps(&one, -0.25), 0.0);
        assert_eq!(h_eps(&two, 0.0), 0.0);
        assert!(GraphRegularization::two_phase(0.0).is_err());
    }

    #[test]
    fn plus_and_tilde_examples() {
        assert_eq!(h_eps_plus(0.3, -2.0), 0.0);
        assert_eq!(h_eps_plus(0.3, 0.0), 0.0);
        assert_eq!(h_eps_plus(0.3, 0.3), 1.0);
        assert_eq!(h_eps_plus(0.5, 0.25), 0.5);
        assert_eq!(tilde_h_eps(0.4, 0.0), 0.0);
        assert_abs_diff_eq!(tilde_h_eps(0.4, 0.4), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(tilde_h_eps(0.2, 1.0), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn resolvent_examples() {
        assert_eq!(resolvent_sign(1.0, 2.0), 1.0);
        assert_eq!(resolvent_sign(1.0, 0.5), 0.0);
        assert_eq!(resolvent_sign(0.5, -2.0), -1.5);
    }

    #[test]
    fn step_function_examples() {
        assert_eq!(step_functions(0.0), (0.0, 0.0, 0.0));
        assert_eq!(step_functions(3.0), (1.0, 1.0, 0.0));
        assert_eq!(step_functions(-3.0), (-1.0, 0.0, 1.0));
    }

    #[test]
    fn regularized_resolvent_converges_monotonically() {
        for k in -20..=20 {
            let r = k as f64 * 0.1;
            let mut prev = f64::INFINITY;
            for e in 1..=5 {
                let reg = GraphRegularization::two_phase(10f64.powi(-e)).unwrap();
                let err = (resolvent_regularized(&reg, 1.0, r, 1e-12) - resolvent_sign(1.0, r)).abs();
                assert!(err <= prev + 1e-12, "r={r} eps=1e-{e}: {err} > {prev}");
                prev = err;
            }
            assert!(prev < 1e-4);
        }
    }

    #[test]
    fn generic_over_f32() {
        let reg = GraphRegularization::<f32>::two_phase(0.25).unwrap();
        assert_eq!(reg.apply(0.125f32), 0.5f32);
        assert_eq!(resolvent_sign(1.0f32, -3.0f32), -2.0f32);
    }

    proptest! {
        #[test]
        fn two_phase_is_odd_monotone_lipschitz(eps in 1e-6f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let reg = GraphRegularization::two_phase(eps).unwrap();
            prop_assert_eq!(reg.apply(-a), -reg.apply(a));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(reg.apply(lo) <= reg.apply(hi));
            prop_assert!((reg.apply(a) - reg.apply(b)).abs() <= (a - b).abs() / eps * (1.0 + 1e-12) + 1e-12);
            prop_assert!(reg.apply(a).abs() <= 1.0);
        }

        #[test]
        fn tilde_derivative_matches_plus(eps in 1e-3f64..1.0, r in -2.0f64..2.0) {
            let step = 1e-7;
            let fd = (tilde_h_eps(eps, r + step) - tilde_h_eps(eps, r - step)) / (2.0 * step);
            // the kink of h_eps_plus at r = eps only loosens the check within one step
            if (r - eps).abs() > step && r.abs() > step {
                prop_assert!((fd - h_eps_plus(eps, r)).abs() <= 1e-6);
            }
        }

        #[test]
        fn preimage_inverts(eps in 1e-6f64..1.0, u in -0.999f64..0.999) {
            let reg = GraphRegularization::two_phase(eps).unwrap();
            prop_assert!((reg.apply(reg.preimage(u)) - u).abs() < 1e-12);
        }
    }
}
