//! k-spine trees: planar ultrametric topology, spine-diffusion marks, and the
//! weight `Δ = (½)^{k−1} Π_B h(ζ_v) / Π_L h(ζ_v)` of the many-to-few formula.

mod recursion;

pub use recursion::{biased_measure_quadrature, QuadratureGrid, QuadratureValue, MAX_QUADRATURE_K};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::Rng;
use crate::spectral::SpectralBasis;

/// Planar ultrametric tree of depth `t` with `k` leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineTopology {
    pub k: usize,
    pub t: f64,
    /// `U_i` for `i = 1..k−1`: depth (time before `t`) of the branch point
    /// between leaves `i` and `i+1`.
    pub depths: Vec<f64>,
}

impl SpineTopology {
    /// `U_{i,j} = max(U_i, …, U_{j−1})`, 0-based leaves.
    pub fn u(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.depths[a..b].iter().copied().fold(0.0, f64::max)
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|i| (0..self.k).map(|j| self.u(i, j)).collect()).collect()
    }

    /// Depth of the root branch point.
    pub fn deepest(&self) -> Option<f64> {
        self.depths.iter().copied().reduce(f64::max)
    }
}

pub fn sample_topology(k: usize, t: f64, rng: &mut Rng) -> Result<SpineTopology> {
    if k == 0 {
        return Err(domain("k", 0.0, "k >= 1"));
    }
    if !(t > 0.0) {
        return Err(domain("t", t, "t > 0"));
    }
    loop {
        let depths: Vec<f64> = (0..k - 1).map(|_| t * rng.random::<f64>()).collect();
        let mut sorted = depths.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[0] < w[1]) {
            return Ok(SpineTopology { k, t, depths });
        }
    }
}

/// Topology plus positions at the root, branch points and leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedSpine {
    pub topology: SpineTopology,
    pub root: f64,
    /// Mark of the branch point between leaves `i` and `i+1`.
    pub branch_marks: Vec<f64>,
    pub leaf_marks: Vec<f64>,
}

/// `ln Δ`, computed in log space.
pub fn log_weight_delta(marked: &MarkedSpine, basis: &SpectralBasis) -> f64 {
    let k = marked.topology.k;
    let branch: f64 = marked.branch_marks.iter().map(|&z| basis.h(z).ln()).sum();
    let leaves: f64 = marked.leaf_marks.iter().map(|&z| basis.h(z).ln()).sum();
    (k as f64 - 1.0) * 0.5f64.ln() + branch - leaves
}

pub fn weight_delta(marked: &MarkedSpine, basis: &SpectralBasis) -> f64 {
    log_weight_delta(marked, basis).exp()
}

/// Sampler for the spine diffusion `dX = (v_1′/v_1)(X) dt + dW`, reflected at 0.
#[derive(Debug, Clone, Copy)]
pub struct SpineSampler<'a> {
    pub basis: &'a SpectralBasis,
    /// Relative tolerance passed to the kernel planner.
    pub rel_tol: f64,
    /// Use Euler–Maruyama below the kernel's `t_floor`; otherwise refuse.
    pub euler_fallback: bool,
    pub euler_max_step: f64,
}

impl<'a> SpineSampler<'a> {
    pub fn new(basis: &'a SpectralBasis) -> Self {
        Self {
            basis,
            rel_tol: 1e-10,
            euler_fallback: true,
            euler_max_step: 1e-3,
        }
    }

    /// Draws the position after time `s` from `x`.
    pub fn sample_edge(&self, x: f64, s: f64, rng: &mut Rng) -> Result<f64> {
        if s <= 0.0 {
            return Ok(x);
        }
        match self.basis.kernel_plan(s, self.rel_tol) {
            Ok(plan) => Ok(self.invert(&plan.weights, x, rng.random::<f64>())),
            Err(e) if !self.euler_fallback => Err(e),
            Err(_) => Ok(self.euler(x, s, rng)),
        }
    }

    /// Solves `∫₀^y q_s(x, u) du = target` by safeguarded Newton.
    fn invert(&self, weights: &[f64], x: f64, target: f64) -> f64 {
        let b = self.basis;
        let l = b.length();
        let v1x = b.v1(x);
        let coef: Vec<f64> = weights.iter().enumerate().map(|(j, w)| w * b.v(j + 1, x) / v1x).collect();
        let cdf = |y: f64| coef.iter().enumerate().map(|(j, c)| c * b.overlap(j + 1, y)).sum::<f64>();
        let pdf = |y: f64| b.v1(y) * coef.iter().enumerate().map(|(j, c)| c * b.v(j + 1, y)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, l);
        let mut y = x.clamp(0.05 * l, 0.95 * l);
        for _ in 0..100 {
            let f = cdf(y) - target;
            if f.abs() < 1e-14 {
                break;
            }
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let d = pdf(y);
            let newton = y - f / d;
            y = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-14 * l {
                break;
            }
        }
        y.clamp(0.0, l * (1.0 - f64::EPSILON))
    }

    fn euler(&self, x: f64, s: f64, rng: &mut Rng) -> f64 {
        let l = self.basis.length();
        let mut y = x;
        let mut left = s;
        while left > 0.0 {
            let mut h = self.euler_max_step.min((l - y).powi(2) / 25.0).min(left);
            loop {
                let next = (y + self.basis.spine_drift(y) * h + h.sqrt() * rng.sample::<f64, _>(StandardNormal)).abs();
                if next < l && next.is_finite() {
                    y = next;
                    break;
                }
                h *= 0.5;
            }
            left -= h;
        }
        y
    }

    /// Marks every branch point and leaf of `topology`, rooted at `x`, with
    /// edge durations multiplied by `accelerate`.
    pub fn run_marks(&self, topology: &SpineTopology, x: f64, accelerate: f64, rng: &mut Rng) -> Result<MarkedSpine> {
        if !(x >= 0.0 && x < self.basis.length()) {
            return Err(domain("x", x, format!("[0, {})", self.basis.length())));
        }
        let k = topology.k;
        let mut marked = MarkedSpine {
            topology: topology.clone(),
            root: x,
            branch_marks: vec![f64::NAN; k.saturating_sub(1)],
            leaf_marks: vec![f64::NAN; k],
        };
        self.mark_range(topology, 0, k, 0.0, x, accelerate, rng, &mut marked)?;
        Ok(marked)
    }

    #[allow(clippy::too_many_arguments)]
    fn mark_range(
        &self,
        topo: &SpineTopology,
        lo: usize,
        hi: usize,
        time: f64,
        x: f64,
        accelerate: f64,
        rng: &mut Rng,
        out: &mut MarkedSpine,
    ) -> Result<()> {
        if hi - lo == 1 {
            out.leaf_marks[lo] = self.sample_edge(x, (topo.t - time) * accelerate, rng)?;
            return Ok(());
        }
        let gap = (lo..hi - 1).max_by(|&a, &b| topo.depths[a].total_cmp(&topo.depths[b])).unwrap();
        let at = topo.t - topo.depths[gap];
        let y = self.sample_edge(x, (at - time) * accelerate, rng)?;
        out.branch_marks[gap] = y;
        self.mark_range(topo, lo, gap + 1, at, y, accelerate, rng, out)?;
        self.mark_range(topo, gap + 1, hi, at, y, accelerate, rng, out)
    }
}

/// Monte Carlo estimate of `L_x^{k,t}(⊗g) = Q_x[t^{k−1} Δ Π g(ζ_{V_i})]` from
/// the per-sample values, which are returned for aggregation.
pub fn biased_measure_samples(
    sampler: &SpineSampler,
    k: usize,
    t: f64,
    x: f64,
    g: &dyn Fn(f64) -> f64,
    rng: &mut Rng,
    samples: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let topo = sample_topology(k, t, rng)?;
        let m = sampler.run_marks(&topo, x, 1.0, rng)?;
        let f: f64 = m.leaf_marks.iter().map(|&z| g(z)).product();
        out.push(t.powi(k as i32 - 1) * weight_delta(&m, sampler.basis) * f);
    }
    Ok(out)
}
