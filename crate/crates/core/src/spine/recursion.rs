//! Deterministic evaluation of `L_x^{k,t}(g^{⊗k})` through the moment-density
//! recursion
//!
//! ```text
//! M¹_t = P_t g,   M^k_t = ½ Σ_{n=1}^{k−1} ∫₀^t P_{t−s}[Mⁿ_s M^{k−n}_s] ds,   L^{k,t} = M^k_t / h.
//! ```
//!
//! Space is discretised on Gauss–Legendre nodes, `P_u` acts diagonally on the
//! modes `e^{−βy} v_j(y)`, and time uses an exponential integrator with a
//! piecewise-linear source.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{gauss_legendre, integrate};
use crate::spectral::{build_basis, SpectralBasis};

pub const MAX_QUADRATURE_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureGrid {
    pub time_nodes: usize,
    pub space_nodes: usize,
    pub modes: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            time_nodes: 256,
            space_nodes: 512,
            modes: 160,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureValue {
    pub k: usize,
    pub t: f64,
    pub x: f64,
    pub value: f64,
    /// `|value − value at half the time nodes|`.
    pub error_estimate: f64,
}

struct Discretisation {
    nodes: Vec<f64>,
    /// `synth[i*K + j] = e^{−βx_i} v_j(x_i)`.
    synth: Vec<f64>,
    /// `proj[j*n + i] = w_i e^{βx_i} v_j(x_i) / ‖v_j‖²`.
    proj: Vec<f64>,
    decay: Vec<f64>,
    modes: usize,
}

impl Discretisation {
    fn new(basis: &SpectralBasis, space_nodes: usize) -> Self {
        let beta = basis.beta();
        let (nodes, weights) = gauss_legendre(space_nodes, 0.0, basis.length());
        let modes = basis.k_max();
        let n = nodes.len();
        let mut synth = vec![0.0; n * modes];
        let mut proj = vec![0.0; n * modes];
        for (i, (&x, &w)) in nodes.iter().zip(&weights).enumerate() {
            for j in 0..modes {
                let v = basis.v(j + 1, x);
                synth[i * modes + j] = (-beta * x).exp() * v;
                proj[j * n + i] = w * (beta * x).exp() * v / basis.norms_sq[j];
            }
        }
        let decay = (1..=modes).map(|j| basis.decay(j)).collect();
        Self { nodes, synth, proj, decay, modes }
    }

    fn synthesise(&self, c: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.synth[i * self.modes..(i + 1) * self.modes];
            *o = row.iter().zip(c).map(|(a, b)| a * b).sum();
        }
    }

    fn project(&self, f: &[f64], out: &mut [f64]) {
        let n = self.nodes.len();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.proj[j * n..(j + 1) * n];
            *o = row.iter().zip(f).map(|(a, b)| a * b).sum();
        }
    }
}

/// `(φ₁, ψ)` with `φ₁ = ∫₀^Δ e^{−μ(Δ−τ)} dτ` and `ψ = Δ⁻¹∫₀^Δ τ e^{−μ(Δ−τ)} dτ`.
fn integrator_weights(mu: f64, dt: f64) -> (f64, f64) {
    let z = mu * dt;
    if z.abs() < 1e-4 {
        (dt * (1.0 - z / 2.0 + z * z / 6.0), dt * (0.5 - z / 6.0 + z * z / 24.0))
    } else {
        let e = (-z).exp();
        let phi1 = (1.0 - e) / mu;
        (phi1, phi1 - (1.0 - e * (1.0 + z)) / (mu * mu * dt))
    }
}

/// Coefficients of `M^1..M^k` at time `t` (index `m−1`).
fn solve(d: &Discretisation, g_nodes: &[f64], g_coef: &[f64], k: usize, t: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = d.nodes.len();
    let kk = d.modes;
    let dt = t / steps as f64;
    let weights: Vec<(f64, f64, f64)> = d
        .decay
        .iter()
        .map(|&mu| {
            let (p1, psi) = integrator_weights(mu, dt);
            ((-mu * dt).exp(), p1, psi)
        })
        .collect();

    // Level m ≥ 2: coefficients and the projected source at the previous node.
    let mut coef = vec![vec![0.0; kk]; k];
    let mut source_prev = vec![vec![0.0; kk]; k];
    let mut values = vec![vec![0.0; n]; k];
    let mut buf = vec![0.0; n];
    let mut src = vec![0.0; kk];

    let fill_sources = |values: &Vec<Vec<f64>>, m: usize, buf: &mut Vec<f64>, src: &mut Vec<f64>| {
        for (i, b) in buf.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 1..m {
                s += values[a - 1][i] * values[m - a - 1][i];
            }
            *b = 0.5 * s;
        }
        d.project(buf, src);
    };

    values[0].copy_from_slice(g_nodes);
    for m in 2..=k {
        fill_sources(&values, m, &mut buf, &mut src);
        source_prev[m - 1].copy_from_slice(&src);
        // M^m(0) = 0.
    }

    for step in 1..=steps {
        let s = step as f64 * dt;
        for (j, c) in coef[0].iter_mut().enumerate() {
            *c = g_coef[j] * (-d.decay[j] * s).exp();
        }
        d.synthesise(&coef[0], &mut values[0]);
        for m in 2..=k {
            fill_sources(&values, m, &mut buf, &mut src);
            for j in 0..kk {
                let (e, p1, psi) = weights[j];
                let (b0, b1) = (source_prev[m - 1][j], src[j]);
                coef[m - 1][j] = e * coef[m - 1][j] + p1 * b0 + psi * (b1 - b0);
            }
            source_prev[m - 1].copy_from_slice(&src);
            d.synthesise(&coef[m - 1], &mut values[m - 1]);
        }
    }
    coef
}

fn evaluate(basis: &SpectralBasis, c: &[f64], x: f64) -> f64 {
    let beta = basis.beta();
    c.iter().enumerate().map(|(j, a)| a * (-beta * x).exp() * basis.v(j + 1, x)).sum()
}

/// `L_x^{k,t}(g^{⊗k})` by the recursion, with a time-doubling error estimate.
pub fn biased_measure_quadrature(
    basis: &SpectralBasis,
    k: usize,
    t: f64,
    x: f64,
    g: &dyn Fn(f64) -> f64,
    grid: QuadratureGrid,
) -> Result<QuadratureValue> {
    if k == 0 {
        return Err(domain("k", 0.0, "k >= 1"));
    }
    if k > MAX_QUADRATURE_K {
        return Err(Error::QuadratureDepth { k, max: MAX_QUADRATURE_K });
    }
    if !(t > 0.0) {
        return Err(domain("t", t, "t > 0"));
    }
    if !(x >= 0.0 && x < basis.length()) {
        return Err(domain("x", x, format!("[0, {})", basis.length())));
    }
    if grid.time_nodes < 2 || grid.space_nodes < 2 || grid.modes < 1 {
        return Err(Error::Config("quadrature grid is too coarse".into()));
    }
    let owned;
    let b = if basis.k_max() == grid.modes {
        basis
    } else {
        owned = build_basis(basis.params, grid.modes)?;
        &owned
    };
    let d = Discretisation::new(b, grid.space_nodes);
    let beta = b.beta();
    let l = b.length();
    let g_coef: Vec<f64> = (1..=b.k_max())
        .map(|j| {
            let f = |y: f64| (beta * y).exp() * b.v(j, y) * g(y);
            integrate(f, 0.0, l, 1e-13, 1e-12).value / b.norms_sq[j - 1]
        })
        .collect();
    let g_nodes: Vec<f64> = d.nodes.iter().map(|&y| g(y)).collect();

    let h = b.h(x);
    let fine = solve(&d, &g_nodes, &g_coef, k, t, 2 * grid.time_nodes);
    let coarse = solve(&d, &g_nodes, &g_coef, k, t, grid.time_nodes);
    let value = evaluate(b, &fine[k - 1], x) / h;
    let rough = evaluate(b, &coarse[k - 1], x) / h;
    Ok(QuadratureValue {
        k,
        t,
        x,
        value,
        error_estimate: (value - rough).abs(),
    })
}
