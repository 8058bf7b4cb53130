//! Closed forms for the reproductive-variance profile `Σ(z)² = ∫₀^z h² h̃`,
//! the stable mass `J_z = ∫₀^z h̃`, and best-class statistics.

use serde::{Deserialize, Serialize};

use super::basis::SpectralBasis;
use super::params::ModelParams;
use crate::error::{domain, Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// `(I_{z,1}, I_{z,3}, J_z, Σ(z)²)` at one `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms<T = f64> {
    pub z: T,
    /// `∫₀^z e^{−βx} sin(γ(L−x)) dx`.
    pub i1: T,
    /// `∫₀^z e^{−βx} sin(3γ(L−x)) dx`.
    pub i3: T,
    pub j: T,
    pub sigma_sq: T,
}

/// Evaluator of `z ↦ Σ(z)²` together with its large-`N` constant and the
/// best-class boundary when the parameters carry a population scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile<T = f64> {
    pub beta: T,
    pub gamma: T,
    pub length: T,
    pub sigma_sq_total: T,
    /// `64π²/c⁶`.
    pub sigma_sq_limit: Option<T>,
    pub a_n: Option<T>,
}

/// `64π²/c⁶`.
pub fn sigma_sq_limit<T: Real>(c: T) -> T {
    lit::<T>(64.0) * T::PI() * T::PI() / c.powi(6)
}

pub fn closed_forms_raw<T: Real>(beta: T, gamma: T, length: T, z: T) -> ClosedForms<T> {
    let one = T::one();
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    let u = length - z;
    let ez = (-beta * z).exp();
    let (s1, c1) = (gamma * u).sin_cos();
    let (s3, c3) = (three * gamma * u).sin_cos();
    let g2 = gamma * gamma;
    let i1 = two * beta * gamma + ez * (gamma * c1 - beta * s1);
    let i3 = (lit::<T>(6.0) * beta * gamma - lit::<T>(16.0) * beta * g2 * gamma + ez * (three * gamma * c3 - beta * s3))
        / (one + lit::<T>(8.0) * g2);
    let j = (-beta * u).exp() / gamma * (beta * s1 + gamma * c1);
    let lead = lit::<T>(4.0) * gamma * (beta * length).exp() / ((length + beta) * (length + beta));
    let sigma_sq = lead * (lit::<T>(0.75) * i1 - lit::<T>(0.25) * i3);
    ClosedForms { z, i1, i3, j, sigma_sq }
}

impl<T: Real> SpectralBasis<T> {
    pub fn closed_forms(&self, z: T) -> Result<ClosedForms<T>> {
        self.check_position(z)?;
        Ok(closed_forms_raw(self.beta(), self.gamma(), self.length(), z))
    }

    pub fn variance_profile(&self) -> VarianceProfile<T> {
        let p = &self.params;
        let a_n = match (p.population, p.exponent) {
            (Some(n), Some(_)) => best_class_boundary(n as f64, to_f64(p.loglog_coeff)).map(lit::<T>),
            _ => None,
        };
        VarianceProfile {
            beta: self.beta(),
            gamma: self.gamma(),
            length: self.length(),
            sigma_sq_total: closed_forms_raw(self.beta(), self.gamma(), self.length(), self.length()).sigma_sq,
            sigma_sq_limit: p.exponent.map(sigma_sq_limit),
            a_n,
        }
    }
}

impl<T: Real> VarianceProfile<T> {
    /// `Σ(z)²`, with `z` clamped into `[0, L]`.
    pub fn sigma_sq(&self, z: T) -> T {
        let z = z.max(T::zero()).min(self.length);
        closed_forms_raw(self.beta, self.gamma, self.length, z).sigma_sq
    }
}

/// `A_N = k log log N − log log log N`, if defined.
pub fn best_class_boundary(n: f64, loglog_coeff: f64) -> Option<f64> {
    let lln = n.ln().ln();
    if lln > 0.0 {
        Some(loglog_coeff * lln - lln.ln())
    } else {
        None
    }
}

/// Best-class boundary and the quantities monitored along an `N` ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestClassStats {
    pub a_n: f64,
    /// `N · J_{A_N}`.
    pub expected_count: f64,
    pub sigma_sq_at_a: f64,
    pub sigma_sq_total: f64,
    /// `N J_{A_N} / N^{1−c} = N^c J_{A_N}`.
    pub count_ratio: f64,
    /// `Σ(A_N)² / Σ(L)²`.
    pub sigma_ratio: f64,
}

pub fn best_class_stats(params: &ModelParams<f64>) -> Result<BestClassStats> {
    let (n, c) = match (params.population, params.exponent) {
        (Some(n), Some(c)) => (n as f64, c),
        _ => return Err(Error::MissingPopulation),
    };
    let a_n = best_class_boundary(n, params.loglog_coeff).ok_or_else(|| domain("N", n, "log log N > 0"))?;
    if a_n >= params.length {
        return Err(Error::BestClassOutside {
            a_n,
            length: params.length,
        });
    }
    if a_n < 0.0 {
        return Err(domain("A_N", a_n, "[0, L)"));
    }
    let gamma = params.gamma();
    let at = closed_forms_raw(params.beta, gamma, params.length, a_n);
    let total = closed_forms_raw(params.beta, gamma, params.length, params.length);
    Ok(BestClassStats {
        a_n,
        expected_count: n * at.j,
        sigma_sq_at_a: at.sigma_sq,
        sigma_sq_total: total.sigma_sq,
        count_ratio: n.powf(c) * at.j,
        sigma_ratio: at.sigma_sq / total.sigma_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::spectral::{build_basis, params_for_population};

    #[test]
    fn closed_forms_match_quadrature() {
        let b = build_basis(ModelParams::from_drift(0.5).unwrap(), 4).unwrap();
        let (beta, g, l) = (0.5, b.gamma(), b.length());
        for z in [0.0, 0.2, 1.0, 2.0, l] {
            let cf = b.closed_forms(z).unwrap();
            let q = |f: &dyn Fn(f64) -> f64| integrate(f, 0.0, z, 1e-15, 1e-14).value;
            let i1 = q(&|x| (-beta * x).exp() * (g * (l - x)).sin());
            let i3 = q(&|x| (-beta * x).exp() * (3.0 * g * (l - x)).sin());
            let j = q(&|x| b.h_tilde(x));
            let s = q(&|x| b.h(x).powi(2) * b.h_tilde(x));
            for (a, e) in [(cf.i1, i1), (cf.i3, i3), (cf.j, j), (cf.sigma_sq, s)] {
                assert!((a - e).abs() <= 1e-12 + 1e-10 * e.abs(), "z={z}: {a} vs {e}");
            }
        }
        let at_l = b.closed_forms(l).unwrap();
        assert!((at_l.j - 1.0).abs() < 1e-14);
        assert!((at_l.sigma_sq - 1.238).abs() < 1e-3, "{}", at_l.sigma_sq);
    }

    #[test]
    fn limit_constant() {
        assert!((sigma_sq_limit(0.5f64) - 4096.0 * std::f64::consts::PI.powi(2)).abs() < 1e-9);
        assert!((sigma_sq_limit(0.5f64) - 40_425.9).abs() < 0.1);
    }

    #[test]
    fn best_class_ladder_trends() {
        let mut prev: Option<BestClassStats> = None;
        for n in [10_000u64, 1_000_000, 100_000_000] {
            let s = best_class_stats(&params_for_population(n, 0.5).unwrap()).unwrap();
            assert!(s.sigma_ratio < 1.0 && s.sigma_ratio > 0.99);
            if let Some(p) = prev {
                assert!(s.count_ratio > p.count_ratio);
                assert!(s.count_ratio < 6.0);
            }
            prev = Some(s);
        }
    }

    #[test]
    fn best_class_requires_population() {
        let p = ModelParams::from_drift(0.5).unwrap();
        assert_eq!(best_class_stats(&p), Err(Error::MissingPopulation));
    }

    #[test]
    fn profile_is_monotone_from_zero() {
        let b = build_basis(ModelParams::from_drift(0.9).unwrap(), 2).unwrap();
        let vp = b.variance_profile();
        assert!(vp.sigma_sq(0.0f64).abs() < 1e-12);
        let mut last = 0.0;
        for i in 0..=200 {
            let s = vp.sigma_sq(b.length() * i as f64 / 200.0);
            assert!(s >= last - 1e-12);
            last = s;
        }
    }
}
