//! Velocity laws `v(rho)` and their Lagrangian counterparts `V(y) = v(1/y)`.
//!
//! Admissible laws are non-increasing on `[0, 1]`, start at `v(0) = v_max`
//! and vanish for `rho >= 1`. `V` is then non-decreasing on `[1, inf)`,
//! bounded by `v_max`, and Lipschitz with constant `L_v`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{FtlError, Result};
use crate::scalar::Real;

/// Slack allowed below `y = 1` before a gap counts as an overlap. Forward
/// Euler convex combinations can land one ulp under 1.
pub const OVERLAP_TOLERANCE: f64 = 1e-12;

/// Number of uniform samples on `[0, 2]` used by [`VelocityModel::validate`].
pub const VALIDATION_SAMPLES: usize = 10_000;

pub type SpeedFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum VelocityLaw<T> {
    /// `v_max * max(0, 1 - rho)`
    Linear,
    /// `v_max * max(0, 1 - rho)^2`
    Quadratic,
    /// User law; only reachable through [`VelocityModel::custom`].
    Custom(SpeedFn<T>),
}

impl<T> fmt::Debug for VelocityLaw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityLaw::Linear => f.write_str("Linear"),
            VelocityLaw::Quadratic => f.write_str("Quadratic"),
            VelocityLaw::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A validated velocity law together with its Lipschitz bound.
#[derive(Clone, Debug)]
pub struct VelocityModel<T> {
    v_max: T,
    law: VelocityLaw<T>,
    lipschitz: T,
}

/// One failed check reported by [`VelocityModel::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadParameter { what: String },
    MaxSpeed { v0: f64, v_max: f64 },
    Increasing { rho: f64, rise: f64 },
    NonzeroAboveJam { rho: f64, v: f64 },
    Lipschitz { y1: f64, y2: f64, quotient: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadParameter { what } => write!(f, "bad parameter: {what}"),
            Violation::MaxSpeed { v0, v_max } => write!(f, "v(0)={v0} differs from v_max={v_max}"),
            Violation::Increasing { rho, rise } => {
                write!(f, "v increases by {rise} near rho={rho}")
            }
            Violation::NonzeroAboveJam { rho, v } => {
                write!(f, "v(ρ)≠0 for ρ≥1 (v({rho})={v})")
            }
            Violation::Lipschitz { y1, y2, quotient, bound } => write!(
                f,
                "|V(y1)-V(y2)|/|y1-y2| = {quotient} exceeds L_v = {bound} on [{y1}, {y2}]"
            ),
        }
    }
}

impl<T: Real> VelocityModel<T> {
    /// The prototypical law `v_max * max(0, 1 - rho)`; `L_v = v_max`.
    pub fn linear(v_max: T) -> Result<Self> {
        Self::catalog(v_max, VelocityLaw::Linear, v_max)
    }

    /// `v_max * max(0, 1 - rho)^2`. `V'(y) = 2 v_max (1 - 1/y) / y^2` peaks
    /// at `y = 3/2`, so `L_v = 8/27 v_max`.
    pub fn quadratic(v_max: T) -> Result<Self> {
        Self::catalog(v_max, VelocityLaw::Quadratic, T::lit(8.0 / 27.0) * v_max)
    }

    /// A user-supplied law with a claimed Lipschitz constant for `V`.
    /// Rejected unless [`validate`](Self::validate) comes back empty.
    pub fn custom<F>(v_max: T, v: F, lipschitz: T) -> Result<Self>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        let model = VelocityModel { v_max, law: VelocityLaw::Custom(Arc::new(v)), lipschitz };
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(FtlError::InvalidVelocity(violations))
        }
    }

    fn catalog(v_max: T, law: VelocityLaw<T>, lipschitz: T) -> Result<Self> {
        if !(v_max > T::zero()) || !v_max.is_finite() {
            return Err(FtlError::InvalidVelocity(vec![Violation::BadParameter {
                what: format!("v_max must be positive and finite, got {v_max}"),
            }]));
        }
        Ok(VelocityModel { v_max, law, lipschitz })
    }

    pub fn v_max(&self) -> T {
        self.v_max
    }

    pub fn law(&self) -> &VelocityLaw<T> {
        &self.law
    }

    /// Upper bound for the Lipschitz constant of `V` on `[1, inf)`.
    pub fn lipschitz_constant(&self) -> T {
        self.lipschitz
    }

    /// Eulerian speed `v(rho)`.
    pub fn v(&self, rho: T) -> Result<T> {
        if rho < T::zero() || rho.is_nan() {
            return Err(FtlError::NegativeDensity(rho.to_f64_lossy()));
        }
        Ok(self.speed(rho))
    }

    /// Lagrangian speed `V(y) = v(1/y)`.
    pub fn lagrangian_v(&self, y: T) -> Result<T> {
        if y < T::one() - T::lit(OVERLAP_TOLERANCE) || y.is_nan() {
            return Err(FtlError::Overlap(y.to_f64_lossy()));
        }
        Ok(self.speed(y.recip()))
    }

    #[inline]
    fn speed(&self, rho: T) -> T {
        let free = (T::one() - rho).max(T::zero());
        match &self.law {
            VelocityLaw::Linear => self.v_max * free,
            VelocityLaw::Quadratic => self.v_max * free * free,
            VelocityLaw::Custom(f) => f(rho),
        }
    }

    /// Samples the law on a uniform grid of `[0, 2]` and reports every kind
    /// of violated assumption (first offending location per kind).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.v_max > T::zero()) || !self.v_max.is_finite() {
            out.push(Violation::BadParameter { what: format!("v_max = {}", self.v_max) });
        }
        if !(self.lipschitz >= T::zero()) || !self.lipschitz.is_finite() {
            out.push(Violation::BadParameter { what: format!("L_v = {}", self.lipschitz) });
        }
        if !out.is_empty() {
            return out;
        }

        let n = VALIDATION_SAMPLES;
        let rho: Vec<T> = (0..n).map(|k| T::lit(2.0 * k as f64 / (n - 1) as f64)).collect();
        let v: Vec<T> = rho.iter().map(|&r| self.speed(r)).collect();
        let eps = T::lit(1e-12) * self.v_max.max(T::one());

        if (v[0] - self.v_max).abs() > eps {
            out.push(Violation::MaxSpeed { v0: v[0].to_f64_lossy(), v_max: self.v_max.to_f64_lossy() });
        }
        if let Some(k) = (1..n).find(|&k| v[k] > v[k - 1] + eps) {
            out.push(Violation::Increasing {
                rho: rho[k].to_f64_lossy(),
                rise: (v[k] - v[k - 1]).to_f64_lossy(),
            });
        }
        if let Some(k) = (0..n).find(|&k| rho[k] >= T::one() && v[k] != T::zero()) {
            out.push(Violation::NonzeroAboveJam { rho: rho[k].to_f64_lossy(), v: v[k].to_f64_lossy() });
        }

        // Lipschitz bound for V on y = 1/rho (rho in the grid) and on a uniform y grid.
        let mut ys: Vec<T> = rho
            .iter()
            .filter(|&&r| r > T::zero() && r <= T::one())
            .map(|&r| r.recip())
            .collect();
        ys.extend((0..n).map(|k| T::one() + T::lit(99.0 * k as f64 / (n - 1) as f64)));
        ys.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        ys.dedup();
        let bound = self.lipschitz * T::lit(1.0 + 1e-9) + eps;
        for w in ys.windows(2) {
            let q = (self.speed(w[1].recip()) - self.speed(w[0].recip())).abs() / (w[1] - w[0]);
            if q > bound {
                out.push(Violation::Lipschitz {
                    y1: w[0].to_f64_lossy(),
                    y2: w[1].to_f64_lossy(),
                    quotient: q.to_f64_lossy(),
                    bound: self.lipschitz.to_f64_lossy(),
                });
                break;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled_lipschitz(model: &VelocityModel<f64>) -> f64 {
        // difference quotients on a fine grid of y in [1, 100]
        let n = 200_000;
        let ys: Vec<f64> = (0..n).map(|k| 1.0 + 99.0 * k as f64 / (n - 1) as f64).collect();
        ys.windows(2)
            .map(|w| {
                let dv = model.lagrangian_v(w[1]).unwrap() - model.lagrangian_v(w[0]).unwrap();
                dv.abs() / (w[1] - w[0])
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_values() {
        let m = VelocityModel::linear(1.0).unwrap();
        assert_eq!(m.v(0.0).unwrap(), 1.0);
        assert_eq!(m.v(1.0).unwrap(), 0.0);
        assert_eq!(m.v(0.5).unwrap(), 0.5);
        assert_eq!(m.v(3.0).unwrap(), 0.0);
        assert_eq!(m.lagrangian_v(1.0).unwrap(), 0.0);
        assert_eq!(m.lagrangian_v(2.0).unwrap(), 0.5);
        assert_eq!(m.lagrangian_v(4.0).unwrap(), 0.75);
    }

    #[test]
    fn rejects_out_of_range_arguments() {
        let m = VelocityModel::linear(1.0).unwrap();
        assert!(matches!(m.v(-0.1), Err(FtlError::NegativeDensity(_))));
        assert!(matches!(m.lagrangian_v(0.9), Err(FtlError::Overlap(_))));
        assert!(m.lagrangian_v(1.0 - 1e-14).is_ok());
        assert!(VelocityModel::linear(0.0).is_err());
    }

    #[test]
    fn lipschitz_constant_bounds_sampled_quotients() {
        for v_max in [1.0, 2.0] {
            let m = VelocityModel::linear(v_max).unwrap();
            let q = sampled_lipschitz(&m);
            assert_eq!(m.lipschitz_constant(), v_max);
            assert!(q <= v_max && q > v_max * (1.0 - 1e-3), "q = {q}");
        }
        let m = VelocityModel::quadratic(1.0).unwrap();
        let q = sampled_lipschitz(&m);
        assert!(q <= m.lipschitz_constant());
        assert!((q - 8.0 / 27.0).abs() < 1e-6, "q = {q}");
    }

    #[test]
    fn catalog_models_validate() {
        assert!(VelocityModel::linear(1.0).unwrap().validate().is_empty());
        assert!(VelocityModel::quadratic(3.0).unwrap().validate().is_empty());
    }

    #[test]
    fn constant_law_is_rejected() {
        let err = VelocityModel::custom(1.0, |_rho: f64| 1.0, 1.0).unwrap_err();
        let FtlError::InvalidVelocity(v) = err else { panic!("wrong error") };
        assert!(v.iter().any(|x| matches!(x, Violation::NonzeroAboveJam { .. })));
        assert!(v.iter().any(|x| x.to_string().starts_with("v(ρ)≠0 for ρ≥1")));
    }

    #[test]
    fn concave_custom_law_is_accepted() {
        // V(y) = 1 - 1/y^2 has V'(y) = 2/y^3 <= 2
        let m = VelocityModel::custom(1.0, |rho: f64| (1.0 - rho * rho).max(0.0), 2.0).unwrap();
        assert!(m.validate().is_empty());
        assert_eq!(m.v(0.5).unwrap(), 0.75);
    }

    #[test]
    fn understated_lipschitz_is_rejected() {
        let err = VelocityModel::custom(1.0, |rho: f64| (1.0 - rho).max(0.0), 0.5).unwrap_err();
        let FtlError::InvalidVelocity(v) = err else { panic!() };
        assert!(matches!(v[0], Violation::Lipschitz { .. }));
    }

    #[test]
    fn increasing_law_is_rejected() {
        let err = VelocityModel::custom(
            1.0,
            |rho: f64| if rho < 1.0 { 1.0 - rho + 0.5 * (rho - 0.5).max(0.0) * 4.0 } else { 0.0 },
            10.0,
        )
        .unwrap_err();
        let FtlError::InvalidVelocity(v) = err else { panic!() };
        assert!(v.iter().any(|x| matches!(x, Violation::Increasing { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let m = VelocityModel::<f32>::linear(1.0).unwrap();
        assert_eq!(m.lagrangian_v(2.0).unwrap(), 0.5);
        assert!(m.validate().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lagrangian_speed_is_monotone_and_lipschitz(
                y1 in 1.0f64..50.0, dy in 0.0f64..50.0, quad in any::<bool>(), v_max in 0.1f64..5.0
            ) {
                let m = if quad { VelocityModel::quadratic(v_max) } else { VelocityModel::linear(v_max) }.unwrap();
                let y2 = y1 + dy;
                let d = m.lagrangian_v(y2).unwrap() - m.lagrangian_v(y1).unwrap();
                prop_assert!(d >= 0.0);
                prop_assert!(d <= m.lipschitz_constant() * dy + 1e-12);
                prop_assert!(m.lagrangian_v(y2).unwrap() <= v_max);
                prop_assert_eq!(m.lagrangian_v(y1).unwrap(), m.v(1.0 / y1).unwrap());
            }

            #[test]
            fn eulerian_speed_is_non_increasing(r1 in 0.0f64..2.0, dr in 0.0f64..2.0) {
                let m = VelocityModel::quadratic(1.0).unwrap();
                prop_assert!(m.v(r1 + dr).unwrap() <= m.v(r1).unwrap());
            }
        }
    }
}
