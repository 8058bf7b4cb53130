//! Eigen-system of `½f″ + βf′ + ½f` with Robin condition at 0 and Dirichlet at `L`.

use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{domain, Error, Result};
use crate::quadrature::integrate;
use crate::scalar::{lit, to_f64, Real};

/// Default `t_floor / L²` below which kernel sums are not certified.
pub const DEFAULT_T_FLOOR_FACTOR: f64 = 0.01;

/// Frequencies `γ_k`, norms `‖v_k‖²` and the Perron–Frobenius pair built from
/// the first mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBasis<T = f64> {
    pub params: ModelParams<T>,
    pub gammas: Vec<T>,
    pub norms_sq: Vec<T>,
    /// `ln c̃`, from numerical normalisation of `∫h̃ = 1`.
    pub log_c_tilde: T,
    /// `|c̃_numeric / c̃_closed − 1|` with `c̃_closed = e^{−βL}/γ`.
    pub c_tilde_discrepancy: T,
    pub t_floor_factor: T,
}

/// Sign-changing form of the eigenvalue condition `tan(γL) = −γ/β`.
#[inline]
pub fn eigen_residual<T: Real>(beta: T, length: T, gamma: T) -> T {
    beta * (gamma * length).sin() + gamma * (gamma * length).cos()
}

fn bisect_mode<T: Real>(beta: T, length: T, k: usize) -> Result<T> {
    let kk: T = lit(k as f64);
    let half: T = lit(0.5);
    let mut lo = (kk - half) * T::PI() / length;
    let mut hi = kk * T::PI() / length;
    if beta == T::zero() {
        return Ok(lo);
    }
    let mut g_lo = eigen_residual(beta, length, lo);
    let g_hi = eigen_residual(beta, length, hi);
    if g_lo == T::zero() {
        return Ok(lo);
    }
    if g_lo * g_hi > T::zero() || !(g_lo * g_hi).is_finite() {
        return Err(Error::Bracket {
            mode: k,
            lo: to_f64(lo),
            hi: to_f64(hi),
        });
    }
    let eps: T = lit(T::BISECTION_EPS);
    for _ in 0..200 {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi || hi - lo <= eps * mid {
            break;
        }
        let g_mid = eigen_residual(beta, length, mid);
        if g_mid == T::zero() {
            return Ok(mid);
        }
        if (g_mid > T::zero()) == (g_lo > T::zero()) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * half)
}

/// Solves for the first `k_max` modes.
pub fn build_basis<T: Real>(params: ModelParams<T>, k_max: usize) -> Result<SpectralBasis<T>> {
    if k_max == 0 {
        return Err(domain("K_max", 0.0, "K_max >= 1"));
    }
    let (beta, length) = (params.beta, params.length);
    if !(beta >= T::zero() && beta < T::one()) {
        return Err(domain("beta", to_f64(beta), "[0, 1)"));
    }
    if !(length >= T::FRAC_PI_2()) {
        return Err(domain("L", to_f64(length), "[π/2, ∞)"));
    }
    let mut gammas = Vec::with_capacity(k_max);
    let mut norms_sq = Vec::with_capacity(k_max);
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    for k in 1..=k_max {
        let g = bisect_mode(beta, length, k)?;
        gammas.push(g);
        norms_sq.push(length / two - (two * g * length).sin() / (four * g));
    }

    // ∫ e^{βx} v_1 = e^{βL} ∫ e^{−β(L−x)} v_1; the scaled integrand is O(1).
    let g1 = gammas[0];
    let scaled = integrate(
        |x: T| (-beta * (length - x)).exp() * (g1 * (length - x)).sin(),
        T::zero(),
        length,
        lit(1e-15),
        lit(1e-14),
    );
    let log_c_tilde = -(beta * length) - scaled.value.ln();
    let closed = -(beta * length) - g1.ln();
    let c_tilde_discrepancy = ((log_c_tilde - closed).exp() - T::one()).abs();

    Ok(SpectralBasis {
        params,
        gammas,
        norms_sq,
        log_c_tilde,
        c_tilde_discrepancy,
        t_floor_factor: lit(DEFAULT_T_FLOOR_FACTOR),
    })
}

/// `v_1, h, h̃, Π` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint<T = f64> {
    pub x: T,
    pub v1: T,
    pub h: T,
    pub h_tilde: T,
    pub pi: T,
}

impl<T: Real> SpectralBasis<T> {
    pub fn k_max(&self) -> usize {
        self.gammas.len()
    }

    pub fn beta(&self) -> T {
        self.params.beta
    }

    pub fn length(&self) -> T {
        self.params.length
    }

    /// `γ = γ_1 = √(1 − β²)`.
    pub fn gamma(&self) -> T {
        self.gammas[0]
    }

    pub fn t_floor(&self) -> T {
        self.t_floor_factor * self.length() * self.length()
    }

    pub fn with_t_floor_factor(mut self, factor: T) -> Self {
        self.t_floor_factor = factor;
        self
    }

    /// Decay rate `μ_k = (γ_k² − γ_1²)/2` of mode `k` (1-based) in the critical kernel.
    pub fn decay(&self, k: usize) -> T {
        let (gk, g1) = (self.gammas[k - 1], self.gammas[0]);
        (gk - g1) * (gk + g1) * lit(0.5)
    }

    /// `v_k(x) = sin(γ_k (L − x))`, `k` 1-based.
    #[inline]
    pub fn v(&self, k: usize, x: T) -> T {
        (self.gammas[k - 1] * (self.length() - x)).sin()
    }

    #[inline]
    pub fn v1(&self, x: T) -> T {
        self.v(1, x)
    }

    /// `v_1′(x) / v_1(x) = −γ cot(γ(L − x))`.
    pub fn spine_drift(&self, x: T) -> T {
        let a = self.gamma() * (self.length() - x);
        -self.gamma() * a.cos() / a.sin()
    }

    /// Reproductive value `h(x) = (1/c̃)(2/(L+β)) e^{−βx} v_1(x)`.
    #[inline]
    pub fn h(&self, x: T) -> T {
        let two: T = lit(2.0);
        two / (self.length() + self.beta()) * (-(self.log_c_tilde) - self.beta() * x).exp() * self.v1(x)
    }

    /// Stable configuration `h̃(x) = c̃ e^{βx} v_1(x)`.
    #[inline]
    pub fn h_tilde(&self, x: T) -> T {
        (self.log_c_tilde + self.beta() * x).exp() * self.v1(x)
    }

    /// Invariant density of the spine, `Π = h h̃ = 2 v_1² / (L + β)`.
    #[inline]
    pub fn pi(&self, x: T) -> T {
        let v = self.v1(x);
        lit::<T>(2.0) * v * v / (self.length() + self.beta())
    }

    pub fn check_position(&self, x: T) -> Result<()> {
        if x >= T::zero() && x <= self.length() {
            Ok(())
        } else {
            Err(domain("x", to_f64(x), format!("[0, {}]", to_f64(self.length()))))
        }
    }

    /// Domain-checked evaluation of the profile at `x`.
    pub fn profile_at(&self, x: T) -> Result<ProfilePoint<T>> {
        self.check_position(x)?;
        Ok(ProfilePoint {
            x,
            v1: self.v1(x),
            h: self.h(x),
            h_tilde: self.h_tilde(x),
            pi: self.pi(x),
        })
    }

    /// `∫₀^y v_1(u) v_k(u) du` in closed form.
    pub fn overlap(&self, k: usize, y: T) -> T {
        let l = self.length();
        let (g1, gk) = (self.gammas[0], self.gammas[k - 1]);
        let half: T = lit(0.5);
        let cos_integral = |a: T| {
            if a == T::zero() {
                y
            } else {
                ((a * l).sin() - (a * (l - y)).sin()) / a
            }
        };
        let diff = if k == 1 { T::zero() } else { gk - g1 };
        half * (cos_integral(diff) - cos_integral(gk + g1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::params::ModelParams;
    use std::f64::consts::PI;

    fn half() -> SpectralBasis {
        build_basis(ModelParams::from_drift(0.5).unwrap(), 60).unwrap()
    }

    #[test]
    fn first_mode_is_critical() {
        let b = half();
        assert!((b.gamma() - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((b.gamma() * b.length() - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((b.norms_sq[0] - 1.459_199_576_156_145).abs() < 1e-10, "{}", b.norms_sq[0]);
        assert!(b.c_tilde_discrepancy < 1e-12);
    }

    #[test]
    fn modes_are_bracketed_and_ordered() {
        let b = half();
        for (j, (&g, &n)) in b.gammas.iter().zip(&b.norms_sq).enumerate() {
            let k = (j + 1) as f64;
            let gl = g * b.length();
            assert!(gl >= (k - 0.5) * PI && gl <= k * PI);
            assert!(eigen_residual(0.5, b.length(), g).abs() < 1e-9);
            let alt = 0.5 * (b.length() + (gl.cos().powi(2)) / 0.5);
            assert!((n - alt).abs() < 1e-10);
        }
        assert!(b.gammas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_drift_gives_cosine_modes() {
        let b = build_basis(ModelParams::from_drift(0.0).unwrap(), 8).unwrap();
        for (j, g) in b.gammas.iter().enumerate() {
            assert!((g - (2 * j + 1) as f64).abs() < 1e-12, "{g}");
        }
        assert!((b.norms_sq[0] - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn profile_vanishes_at_boundary() {
        let b = half();
        let p = b.profile_at(b.length()).unwrap();
        assert!(p.h.abs() < 1e-15 && p.h_tilde.abs() < 1e-15);
        assert!(b.profile_at(b.length() + 1e-9).is_err());
        assert!(b.profile_at(-1e-9).is_err());
        assert!((b.h(1.0) - 1.136).abs() < 1e-3, "{}", b.h(1.0));
    }

    #[test]
    fn overlap_matches_quadrature() {
        let b = half();
        for k in [1, 2, 7] {
            for y in [0.3, 1.1, b.length()] {
                let q = integrate(|u| b.v1(u) * b.v(k, u), 0.0, y, 1e-15, 1e-13).value;
                assert!((b.overlap(k, y) - q).abs() < 1e-12, "k={k} y={y}");
            }
        }
    }

    #[test]
    fn spine_drift_is_log_derivative() {
        let b = half();
        let x = 0.7;
        let e = 1e-6;
        let fd = (b.v1(x + e).ln() - b.v1(x - e).ln()) / (2.0 * e);
        assert!((b.spine_drift(x) - fd).abs() < 1e-8);
    }
}
