//! Quantile (check) loss and its Huber-smoothed version.
//!
//! The smoothed loss is quadratic on `[-κτ, (1-τ)κ]` and linear with slopes
//! `-τ` / `1-τ` outside it. At the exact breakpoints the quadratic branch is
//! used; value and slope agree there.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileParams {
    pub tau: f64,
    pub kappa: f64,
}

impl QuantileParams {
    pub fn new(tau: f64, kappa: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { tau, kappa })
    }

    pub fn with_tau(tau: f64) -> Result<Self> {
        Self::new(tau, DEFAULT_KAPPA)
    }

    fn lower(&self) -> f64 {
        -self.tau * self.kappa
    }

    fn upper(&self) -> f64 {
        (1.0 - self.tau) * self.kappa
    }
}

/// `(-τ + 1[r ≥ 0]) · r`
pub fn quantile_loss(r: f64, tau: f64) -> f64 {
    let indicator = if r >= 0.0 { 1.0 } else { 0.0 };
    (indicator - tau) * r
}

pub fn quantile_huber(r: f64, p: QuantileParams) -> f64 {
    let QuantileParams { tau, kappa } = p;
    if r < p.lower() {
        tau * r.abs() - kappa * tau * tau / 2.0
    } else if r > p.upper() {
        (1.0 - tau) * r.abs() - kappa * (1.0 - tau) * (1.0 - tau) / 2.0
    } else {
        r * r / (2.0 * kappa)
    }
}

/// Derivative of [`quantile_huber`] with respect to the residual.
pub fn quantile_huber_grad(r: f64, p: QuantileParams) -> f64 {
    if r < p.lower() {
        -p.tau
    } else if r > p.upper() {
        1.0 - p.tau
    } else {
        r / p.kappa
    }
}

/// Sum of [`quantile_huber`] over every entry of a residual matrix.
pub fn elementwise_loss(residuals: ArrayView2<'_, f64>, p: QuantileParams) -> f64 {
    residuals.iter().map(|&r| quantile_huber(r, p)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn qp(tau: f64, kappa: f64) -> QuantileParams {
        QuantileParams::new(tau, kappa).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(QuantileParams::new(0.0, 0.4).is_err());
        assert!(QuantileParams::new(1.0, 0.4).is_err());
        assert!(QuantileParams::new(0.5, 0.0).is_err());
    }

    #[test]
    fn check_function_values() {
        assert_eq!(quantile_loss(0.0, 0.3), 0.0);
        assert!((quantile_loss(-2.0, 0.3) - 0.6).abs() < 1e-15);
        assert!((quantile_loss(2.0, 0.3) - 1.4).abs() < 1e-15);
        for r in [-3.0, -0.2, 0.7, 5.0] {
            assert!((quantile_loss(r, 0.5) - r.abs() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn huber_values() {
        let p = qp(0.3, 0.4);
        assert_eq!(quantile_huber(0.0, p), 0.0);
        assert!((quantile_huber(-1.0, p) - 0.282).abs() < 1e-15);
        assert_eq!(quantile_huber_grad(0.0, p), 0.0);
        assert!((quantile_huber_grad(-1.0, p) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn breakpoints_are_continuous() {
        let p = qp(0.3, 0.4);
        let hi = 0.7 * 0.4;
        assert!((quantile_huber_grad(hi, p) - 0.7).abs() < 1e-15);
        assert!((quantile_huber_grad(hi + 1e-12, p) - 0.7).abs() < 1e-15);
        let lo = -0.3 * 0.4;
        assert!((quantile_huber_grad(lo, p) + 0.3).abs() < 1e-15);
        for b in [lo, hi] {
            let left = quantile_huber(b - 1e-10, p);
            let right = quantile_huber(b + 1e-10, p);
            assert!((left - right).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_median_case() {
        let kappa = 0.4;
        let p = qp(0.5, kappa);
        for r in [-3.0, -0.25, 0.21, 1.0, 7.5] {
            assert!((quantile_huber(r, p) - (0.5 * r.abs() - kappa / 8.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn elementwise_is_additive() {
        let p = qp(0.2, 0.4);
        assert_eq!(elementwise_loss(array![[0.0, 0.0], [0.0, 0.0]].view(), p), 0.0);
        let (r1, r2) = (-0.7, 0.05);
        let m = array![[r1, r2]];
        assert_eq!(elementwise_loss(m.view(), p), quantile_huber(r1, p) + quantile_huber(r2, p));
        // inside the quadratic band scaling by 0.5 quarters the loss
        let small = array![[0.02, -0.03], [0.01, 0.05]];
        let half = small.mapv(|v| v * 0.5);
        let ratio = elementwise_loss(half.view(), p) / elementwise_loss(small.view(), p);
        assert!((ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kappa_limit_sup_gap_shrinks() {
        let tau = 0.3;
        let gaps: Vec<f64> = [0.4, 0.04, 0.004]
            .iter()
            .map(|&k| {
                (0..=20_000)
                    .map(|i| -10.0 + 20.0 * i as f64 / 20_000.0)
                    .map(|r| (quantile_huber(r, qp(tau, k)) - quantile_loss(r, tau)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-3);
    }

    fn off_breakpoint(r: f64, p: QuantileParams, h: f64) -> bool {
        (r - p.lower()).abs() > 2.0 * h && (r - p.upper()).abs() > 2.0 * h
    }

    proptest! {
        #[test]
        fn grad_matches_central_differences(r in -3.0f64..3.0, tau in 0.01f64..0.99, kappa in 0.01f64..2.0) {
            let p = qp(tau, kappa);
            let h = 1e-5;
            prop_assume!(off_breakpoint(r, p, h));
            let fd = (quantile_huber(r + h, p) - quantile_huber(r - h, p)) / (2.0 * h);
            prop_assert!((fd - quantile_huber_grad(r, p)).abs() < 1e-6);
        }

        #[test]
        fn convex_in_residual(r1 in -5.0f64..5.0, r2 in -5.0f64..5.0, lambda in 0.0f64..=1.0,
                              tau in 0.01f64..0.99, kappa in 0.01f64..2.0) {
            let p = qp(tau, kappa);
            let mid = quantile_huber(lambda * r1 + (1.0 - lambda) * r2, p);
            let chord = lambda * quantile_huber(r1, p) + (1.0 - lambda) * quantile_huber(r2, p);
            prop_assert!(mid <= chord + 1e-12);
        }

        #[test]
        fn nonnegative_and_zero_only_at_origin(r in -5.0f64..5.0, tau in 0.01f64..0.99) {
            prop_assert!(quantile_loss(r, tau) >= 0.0);
            prop_assert!(quantile_huber(r, qp(tau, 0.4)) >= 0.0);
            if r != 0.0 { prop_assert!(quantile_loss(r, tau) > 0.0) }
        }
    }
}
