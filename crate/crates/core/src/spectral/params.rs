//! Model parameters and the drift/boundary bijection.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Default coefficient of `log log N` in the boundary `L_N`.
pub const DEFAULT_LOGLOG_COEFF: f64 = 6.0;

/// Drift, killing boundary and (optionally) the population scale they were
/// derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T = f64> {
    pub beta: T,
    pub length: T,
    pub exponent: Option<T>,
    pub population: Option<u64>,
    pub loglog_coeff: T,
}

/// Critical boundary for drift `beta`: `L(β) = (π − atan(γ/β)) / γ` with
/// `γ = √(1 − β²)`; `L(0) = π/2`.
pub fn length_for_drift<T: Real>(beta: T) -> Result<T> {
    if !(beta >= T::zero() && beta < T::one()) {
        return Err(domain("beta", to_f64(beta), "[0, 1)"));
    }
    let gamma = (T::one() - beta * beta).sqrt();
    Ok((T::PI() - gamma.atan2(beta)) / gamma)
}

fn length_for_gamma<T: Real>(gamma: T) -> T {
    let beta = (T::one() - gamma * gamma).max(T::zero()).sqrt();
    (T::PI() - gamma.atan2(beta)) / gamma
}

/// Inverse of [`length_for_drift`].
///
/// Bisects on `γ = √(1 − β²)` rather than on `β` itself: near `β → 1` the
/// boundary is steep in `β` but well conditioned in `γ`.
pub fn drift_for_length<T: Real>(length: T) -> Result<T> {
    let half_pi = T::FRAC_PI_2();
    if !(length >= half_pi) || !length.is_finite() {
        return Err(domain("L", to_f64(length), "[π/2, ∞)"));
    }
    if length == half_pi {
        return Ok(T::zero());
    }
    // L(γ) is decreasing in γ, L(1) = π/2 and L(γ) ~ π/γ as γ → 0.
    let mut lo = (T::PI() / (length + T::one())) * lit(0.5);
    while length_for_gamma(lo) < length {
        lo = lo * lit(0.5);
    }
    let mut hi = T::one();
    let eps: T = lit(T::BISECTION_EPS);
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi || (hi - lo) <= eps * mid {
            break;
        }
        if length_for_gamma(mid) > length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = (lo + hi) * lit(0.5);
    Ok((T::one() - gamma * gamma).max(T::zero()).sqrt())
}

/// `c log N + k log log N`.
pub fn length_for_population(n: f64, c: f64, loglog_coeff: f64) -> f64 {
    c * n.ln() + loglog_coeff * n.ln().ln()
}

/// Smallest `N ≥ 2` with `c log N + k log log N > π/2`.
pub fn population_threshold(c: f64, loglog_coeff: f64) -> Option<u64> {
    let ok = |n: u64| length_for_population(n as f64, c, loglog_coeff) > std::f64::consts::FRAC_PI_2;
    if !ok(u64::MAX) {
        return None;
    }
    if ok(2) {
        return Some(2);
    }
    let (mut lo, mut hi) = (2u64, u64::MAX);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

impl<T: Real> ModelParams<T> {
    /// Critical model with the given drift.
    pub fn from_drift(beta: T) -> Result<Self> {
        Ok(Self {
            beta,
            length: length_for_drift(beta)?,
            exponent: None,
            population: None,
            loglog_coeff: lit(DEFAULT_LOGLOG_COEFF),
        })
    }

    /// Critical model with the given killing boundary.
    pub fn from_length(length: T) -> Result<Self> {
        Ok(Self {
            beta: drift_for_length(length)?,
            length,
            exponent: None,
            population: None,
            loglog_coeff: lit(DEFAULT_LOGLOG_COEFF),
        })
    }

    /// Model for population scale `N` and width exponent `c`.
    pub fn for_population(n: u64, c: T, loglog_coeff: T) -> Result<Self> {
        let (cf, kf) = (to_f64(c), to_f64(loglog_coeff));
        if !(cf > 0.0 && cf < 1.0) {
            return Err(domain("c", cf, "(0, 1)"));
        }
        let n0 = population_threshold(cf, kf).ok_or_else(|| domain("c", cf, "a value for which some N exceeds the threshold"))?;
        if n < n0 {
            return Err(Error::BelowThreshold {
                n,
                n0,
                c: cf,
                loglog: kf,
            });
        }
        let nf: T = lit(n as f64);
        let length = c * nf.ln() + loglog_coeff * nf.ln().ln();
        Ok(Self {
            beta: drift_for_length(length)?,
            length,
            exponent: Some(c),
            population: Some(n),
            loglog_coeff,
        })
    }

    pub fn gamma(&self) -> T {
        (T::one() - self.beta * self.beta).sqrt()
    }

    /// `|L(β) − L|`; zero up to rounding for a critical model.
    pub fn criticality_residual(&self) -> T {
        match length_for_drift(self.beta) {
            Ok(l) => (l - self.length).abs(),
            Err(_) => T::infinity(),
        }
    }

    /// The simulator only accepts `β ∈ (0, 1)`.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.beta > T::zero() && self.beta < T::one() {
            Ok(())
        } else {
            Err(domain("beta", to_f64(self.beta), "(0, 1)"))
        }
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        ModelParams {
            beta: to_f64(self.beta),
            length: to_f64(self.length),
            exponent: self.exponent.map(to_f64),
            population: self.population,
            loglog_coeff: to_f64(self.loglog_coeff),
        }
    }
}

/// `params_for_population` with the default `log log` coefficient.
pub fn params_for_population(n: u64, c: f64) -> Result<ModelParams<f64>> {
    ModelParams::for_population(n, c, DEFAULT_LOGLOG_COEFF)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn length_closed_forms() {
        assert_eq!(length_for_drift(0.0).unwrap(), FRAC_PI_2);
        let l = length_for_drift(0.5).unwrap();
        assert!((l - 4.0 * PI / (3.0 * 3f64.sqrt())).abs() < 1e-14);
        // 50-digit evaluation of the defining formula.
        let l: f64 = length_for_drift(0.995).unwrap();
        assert!((l - 30.453_600_221_721_250_820).abs() < 1e-10, "{l}");
    }

    #[test]
    fn length_rejects_bad_drift() {
        assert!(length_for_drift(1.0).is_err());
        assert!(length_for_drift(-0.1).is_err());
        assert!(length_for_drift(f64::NAN).is_err());
    }

    #[test]
    fn drift_inverse_cases() {
        assert_eq!(drift_for_length(FRAC_PI_2).unwrap(), 0.0);
        let b = drift_for_length(4.0 * PI / (3.0 * 3f64.sqrt())).unwrap();
        assert!((b - 0.5).abs() < 1e-12, "{b}");
        // 50-digit bisection oracle.
        let b: f64 = drift_for_length(17.93).unwrap();
        assert!((b - 0.986_139_605_283_704_776_2).abs() < 1e-12, "{b}");
        assert!((length_for_drift(b).unwrap() - 17.93f64).abs() < 1e-10);
        assert!(drift_for_length(1.5).is_err());
    }

    #[test]
    fn population_ladder() {
        let p = params_for_population(10_000, 0.5).unwrap();
        let expect = 0.5 * 1e4f64.ln() + 6.0 * 1e4f64.ln().ln();
        assert!((p.length - expect).abs() < 1e-12);
        assert!((p.length - 17.927).abs() < 1e-3);
        assert!(p.criticality_residual() < 1e-10);
        let p = params_for_population(1_000_000, 0.3).unwrap();
        assert!((p.length - 19.899).abs() < 1e-3, "{}", p.length);
    }

    #[test]
    fn population_threshold_is_reported() {
        let n0 = population_threshold(0.5, 6.0).unwrap();
        assert_eq!(n0, 4);
        assert!(params_for_population(n0, 0.5).is_ok());
        match params_for_population(n0 - 1, 0.5) {
            Err(Error::BelowThreshold { n0: reported, .. }) => assert_eq!(reported, n0),
            other => panic!("expected threshold error, got {other:?}"),
        }
        let msg = params_for_population(3, 0.5).unwrap_err().to_string();
        assert!(msg.contains("N_0 = 4"), "{msg}");
    }

    #[test]
    fn f32_instantiation() {
        let l: f32 = length_for_drift(0.5f32).unwrap();
        assert!((l - 2.418_399).abs() < 1e-5);
        let b: f32 = drift_for_length(l).unwrap();
        assert!((b - 0.5).abs() < 1e-4);
    }
}
