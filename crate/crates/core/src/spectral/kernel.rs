//! Truncated spectral sums for the critical heat kernel `p_t`, the spine
//! kernel `q_t`, the symmetric kernel `g_t` and the Green's function.

use serde::{Deserialize, Serialize};

use super::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Kernel value with its certified truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue<T = f64> {
    pub value: T,
    /// Absolute bound on the neglected modes.
    pub bound: T,
    pub modes: usize,
}

/// Mode weights `e^{−μ_k t}/‖v_k‖²` for one time, truncated at the smallest
/// order whose tail is certified below `rel_tol` relative to `h(x)h̃(y)`.
#[derive(Debug, Clone)]
pub struct KernelPlan<'a, T: Real = f64> {
    basis: &'a SpectralBasis<T>,
    pub t: T,
    pub weights: Vec<T>,
    /// Tail bound relative to the leading term `h(x)h̃(y)`.
    pub rel_bound: T,
}

/// Relative tail bound `Σ_{k>K} ((L+β)/L)(γ_k L/γ)² e^{−μ_k t}` for each `K`.
///
/// Uses `|v_k/v_1| ≤ γ_k L/γ` and `‖v_1‖²/‖v_k‖² ≤ (L+β)/L`. Beyond the
/// computed modes `γ_k` is bracketed by `((k−½)π/L, kπ/L)`.
fn tail_bounds<T: Real>(basis: &SpectralBasis<T>, t: T) -> Vec<T> {
    let l = basis.length();
    let g = basis.gamma();
    let pref = (l + basis.beta()) / l;
    let half: T = lit(0.5);
    let term = |gk_pref: T, gk_exp: T| {
        let r = gk_pref * l / g;
        pref * r * r * (-(gk_exp * gk_exp - g * g) * half * t).exp()
    };

    let k_max = basis.k_max();
    let mut beyond = T::zero();
    let mut k = k_max + 1;
    loop {
        let kk: T = lit(k as f64);
        let upper = kk * T::PI() / l;
        let lower = (kk - half) * T::PI() / l;
        let x = term(upper, lower);
        beyond = beyond + x;
        // Terms decrease once past the peak of k² e^{−a k²}.
        let past_peak = (lower * lower * t) > lit(2.0);
        if (past_peak && x <= beyond * lit(1e-17)) || k > k_max + 1_000_000 || x == T::zero() {
            break;
        }
        k += 1;
    }

    let mut tails = vec![T::zero(); k_max + 1];
    tails[k_max] = beyond;
    for k in (1..=k_max).rev() {
        let gk = basis.gammas[k - 1];
        tails[k - 1] = tails[k] + if k == 1 { T::zero() } else { term(gk, gk) };
    }
    // tails[K] bounds the sum over modes k > K.
    tails
}

impl<T: Real> SpectralBasis<T> {
    /// Plans the spectral sum at time `t`.
    ///
    /// Fails with [`Error::Uncertifiable`] when `t` is below the floor or the
    /// available modes cannot reach `rel_tol`.
    pub fn kernel_plan(&self, t: T, rel_tol: T) -> Result<KernelPlan<'_, T>> {
        let refuse = || Error::Uncertifiable {
            t: to_f64(t),
            t_floor: to_f64(self.t_floor()),
            k_max: self.k_max(),
            rel_tol: to_f64(rel_tol),
        };
        if !(t >= self.t_floor()) || !(t > T::zero()) {
            return Err(refuse());
        }
        let tails = tail_bounds(self, t);
        if tails[self.k_max()] > rel_tol {
            return Err(refuse());
        }
        let order = (1..=self.k_max()).find(|&k| tails[k] <= rel_tol).unwrap_or(self.k_max());
        let weights = (1..=order)
            .map(|k| (-self.decay(k) * t).exp() / self.norms_sq[k - 1])
            .collect();
        Ok(KernelPlan {
            basis: self,
            t,
            weights,
            rel_bound: tails[order],
        })
    }

    /// Bound on `|p_t(x, y)/(h(x)h̃(y)) − 1|`, i.e. the tail beyond the first mode.
    pub fn mixing_bound(&self, t: T) -> T {
        tail_bounds(self, t)[1]
    }

    /// Critical heat kernel `p_t(x, y)`.
    pub fn heat_kernel(&self, t: T, x: T, y: T, rel_tol: T) -> Result<KernelValue<T>> {
        self.check_position(x)?;
        self.check_position(y)?;
        Ok(self.kernel_plan(t, rel_tol)?.p(x, y))
    }

    /// Spine transition density `q_t(x, y) = h(y) p_t(x, y) / h(x)`.
    pub fn spine_kernel(&self, t: T, x: T, y: T, rel_tol: T) -> Result<KernelValue<T>> {
        self.check_position(y)?;
        if !(x >= T::zero() && x < self.length()) {
            return Err(crate::error::domain("x", to_f64(x), "[0, L)"));
        }
        Ok(self.kernel_plan(t, rel_tol)?.q(x, y))
    }

    /// Green's function `∫₀^∞ g_s(x, y) ds = 2(β(x∧y) + 1)(L − x∨y) / (βL + 1)`.
    pub fn greens_function(&self, x: T, y: T) -> Result<T> {
        self.check_position(x)?;
        self.check_position(y)?;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let (b, l) = (self.beta(), self.length());
        Ok(lit::<T>(2.0) * (b * lo + T::one()) * (l - hi) / (b * l + T::one()))
    }

    /// `∫₀^T g_s(x, y) ds`, integrated mode by mode over all available modes.
    pub fn integrated_kernel(&self, horizon: T, x: T, y: T) -> T {
        let two: T = lit(2.0);
        let mut acc = T::zero();
        for k in 1..=self.k_max() {
            let gk = self.gammas[k - 1];
            let rate = gk * gk / two;
            let time_factor = -(-rate * horizon).exp_m1() / rate;
            acc = acc + time_factor * self.v(k, x) * self.v(k, y) / self.norms_sq[k - 1];
        }
        acc
    }
}

impl<T: Real> KernelPlan<'_, T> {
    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    /// `Σ_k e^{−μ_k t} v_k(x) v_k(y) / ‖v_k‖²`.
    pub fn core(&self, x: T, y: T) -> T {
        let b = self.basis;
        let (lx, ly) = (b.length() - x, b.length() - y);
        self.weights
            .iter()
            .zip(&b.gammas)
            .fold(T::zero(), |acc, (&w, &g)| acc + w * (g * lx).sin() * (g * ly).sin())
    }

    fn leading(&self, x: T, y: T) -> T {
        self.basis.v1(x) * self.basis.v1(y) / self.basis.norms_sq[0]
    }

    pub fn p(&self, x: T, y: T) -> KernelValue<T> {
        let tilt = (self.basis.beta() * (y - x)).exp();
        KernelValue {
            value: tilt * self.core(x, y),
            bound: tilt * self.leading(x, y) * self.rel_bound,
            modes: self.modes(),
        }
    }

    pub fn q(&self, x: T, y: T) -> KernelValue<T> {
        let ratio = self.basis.v1(y) / self.basis.v1(x);
        KernelValue {
            value: ratio * self.core(x, y),
            bound: ratio * self.leading(x, y) * self.rel_bound,
            modes: self.modes(),
        }
    }

    /// Symmetric kernel `g_t = e^{β(x−y)} e^{−γ²t/2} p_t`.
    pub fn g(&self, x: T, y: T) -> KernelValue<T> {
        let g = self.basis.gamma();
        let damp = (-(g * g) * self.t * lit(0.5)).exp();
        KernelValue {
            value: damp * self.core(x, y),
            bound: damp * self.leading(x, y) * self.rel_bound,
            modes: self.modes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::spectral::{build_basis, ModelParams};

    fn half() -> SpectralBasis {
        build_basis(ModelParams::from_drift(0.5).unwrap(), 64).unwrap()
    }

    #[test]
    fn h_is_a_fixed_point() {
        let b = half();
        let plan = b.kernel_plan(1.0, 1e-12).unwrap();
        for x in [0.0, 0.9, 2.0] {
            let v = integrate(|y| plan.p(x, y).value * b.h(y), 0.0, b.length(), 1e-14, 1e-13).value;
            assert!((v - b.h(x)).abs() < 1e-10 * b.h(x).max(1e-3), "{x}: {v} vs {}", b.h(x));
        }
    }

    #[test]
    fn symmetric_kernel_is_symmetric() {
        let b = half();
        let plan = b.kernel_plan(0.5, 1e-12).unwrap();
        let (a, c) = (plan.g(0.3, 1.7).value, plan.g(1.7, 0.3).value);
        assert!((a - c).abs() < 1e-14);
    }

    #[test]
    fn refuses_short_times() {
        let b = half();
        assert!(matches!(b.kernel_plan(b.t_floor() * 0.5, 1e-8), Err(Error::Uncertifiable { .. })));
        let small = build_basis(ModelParams::from_drift(0.5).unwrap(), 2).unwrap();
        assert!(small.kernel_plan(small.t_floor(), 1e-14).is_err());
    }

    #[test]
    fn long_time_kernel_is_rank_one() {
        let b = half();
        let t = b.length().powi(3);
        let plan = b.kernel_plan(t, 1e-12).unwrap();
        let (x, y) = (0.4, 1.3);
        let v = plan.p(x, y);
        let r = v.value / (b.h(x) * b.h_tilde(y)) - 1.0;
        assert!(r.abs() <= b.mixing_bound(t), "{r}");
        assert!(b.mixing_bound(t) < 1e-8);
    }

    #[test]
    fn green_is_dirichlet_at_boundary() {
        let b = half();
        assert_eq!(b.greens_function(0.7, b.length()).unwrap(), 0.0);
        let g00 = b.greens_function(0.0, 0.0).unwrap();
        assert!((g00 - 2.0 * b.length() / (0.5 * b.length() + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn kernel_in_f32() {
        let b = build_basis(ModelParams::<f32>::from_drift(0.5).unwrap(), 32).unwrap();
        let plan = b.kernel_plan(1.0f32, 1e-5).unwrap();
        let s: f32 = (0..400).map(|i| (i as f32 + 0.5) / 400.0 * b.length()).map(|y| plan.q(0.5, y).value).sum::<f32>() * b.length() / 400.0;
        assert!((s - 1.0).abs() < 1e-3, "{s}");
    }
}
