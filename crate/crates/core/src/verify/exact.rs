//! Deterministic checks of the spectral layer: eigen-system identities,
//! closed forms against quadrature, kernel identities, and the large-`N`
//! constant ladder.

use super::report::{McReport, RawTable, Rule, VerifyOutput};
use crate::error::Result;
use crate::quadrature::integrate;
use crate::spectral::{
    best_class_stats, build_basis, eigen_residual, params_for_population, sigma_sq_limit, ModelParams, SpectralBasis,
};

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate(f, a, b, 1e-15, 1e-14).value
}

fn count(flags: impl IntoIterator<Item = bool>) -> f64 {
    flags.into_iter().filter(|&b| b).count() as f64
}

/// Eigen-system, normalisation and closed-form identities.
pub fn verify_spectral(basis: &SpectralBasis) -> VerifyOutput {
    let mut out = VerifyOutput::default();
    let (beta, l, g) = (basis.beta(), basis.length(), basis.gamma());
    let pi = std::f64::consts::PI;
    let kk = basis.k_max().min(50);

    let resid = (1..=kk)
        .map(|k| eigen_residual(beta, l, basis.gammas[k - 1]).abs())
        .fold(0.0, f64::max);
    out.push(McReport::exact("spectral.eigen_residual_max", resid, 0.0, 1e-9));
    let outside = count((1..=kk).map(|k| {
        let gl = basis.gammas[k - 1] * l;
        !(gl >= (k as f64 - 0.5) * pi && gl <= k as f64 * pi)
    }));
    out.push(McReport::exact("spectral.eigen_bracket_violations", outside, 0.0, 0.0));
    out.push(McReport::exact("spectral.criticality", beta * beta + g * g, 1.0, 1e-14));
    out.push(McReport::exact("spectral.sin_gamma_l", (g * l).sin(), g, 1e-9));
    out.push(McReport::exact("spectral.cos_gamma_l", (g * l).cos(), -beta, 1e-9));

    let v1_sq = quad(|x| basis.v1(x).powi(2), 0.0, l);
    out.push(McReport::exact("spectral.norm_v1", v1_sq, (l + beta) / 2.0, 1e-9));
    let ortho = (1..=10)
        .flat_map(|j| (j + 1..=10).map(move |k| (j, k)))
        .map(|(j, k)| quad(|x| basis.v(j, x) * basis.v(k, x), 0.0, l).abs())
        .fold(0.0, f64::max);
    out.push(McReport::exact("spectral.orthogonality_max", ortho, 0.0, 1e-10));

    out.push(McReport::exact("spectral.mass_h_tilde", quad(|x| basis.h_tilde(x), 0.0, l), 1.0, 1e-10));
    out.push(McReport::exact(
        "spectral.pairing_h_h_tilde",
        quad(|x| basis.h(x) * basis.h_tilde(x), 0.0, l),
        1.0,
        1e-10,
    ));
    out.push(McReport::exact("spectral.c_tilde_discrepancy", basis.c_tilde_discrepancy, 0.0, 1e-12));

    let mut raw = RawTable::new("closed_forms", &["z", "i1", "i3", "j", "sigma_sq", "j_quad", "sigma_sq_quad"]);
    let (mut e_i1, mut e_i3, mut e_j, mut e_s) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
    for i in 1..=10 {
        let z = l * i as f64 / 10.0;
        let cf = basis.closed_forms(z).expect("z in [0, L]");
        let i1 = quad(|x| (-beta * x).exp() * (g * (l - x)).sin(), 0.0, z);
        let i3 = quad(|x| (-beta * x).exp() * (3.0 * g * (l - x)).sin(), 0.0, z);
        let j = quad(|x| basis.h_tilde(x), 0.0, z);
        let s = quad(|x| basis.h(x).powi(2) * basis.h_tilde(x), 0.0, z);
        e_i1 = e_i1.max(rel(cf.i1, i1));
        e_i3 = e_i3.max(rel(cf.i3, i3));
        e_j = e_j.max(rel(cf.j, j));
        e_s = e_s.max(rel(cf.sigma_sq, s));
        raw.rows.push(vec![z, cf.i1, cf.i3, cf.j, cf.sigma_sq, j, s]);
    }
    out.push(McReport::exact("spectral.closed_form_i1_rel", e_i1, 0.0, 1e-8));
    out.push(McReport::exact("spectral.closed_form_i3_rel", e_i3, 0.0, 1e-8));
    out.push(McReport::exact("spectral.closed_form_j_rel", e_j, 0.0, 1e-8));
    out.push(McReport::exact("spectral.closed_form_sigma_sq_rel", e_s, 0.0, 1e-8));
    out.raw.push(raw);

    let profile = basis.variance_profile();
    out.push(McReport::exact("spectral.j_total", basis.closed_forms(l).expect("z = L").j, 1.0, 1e-12));
    out.push(McReport::exact("spectral.sigma_sq_at_zero", profile.sigma_sq(0.0), 0.0, 1e-15));
    let grid: Vec<f64> = (0..=1000).map(|i| l * i as f64 / 1000.0).collect();
    let decreasing = count(grid.windows(2).map(|w| profile.sigma_sq(w[1]) < profile.sigma_sq(w[0])));
    out.push(McReport::exact("spectral.sigma_sq_monotone_violations", decreasing, 0.0, 0.0));

    let envelope = count(grid.iter().map(|&x| {
        let v = basis.v1(x);
        let upper = (g * (beta * x + 1.0)).min(g * (l - x));
        let lower = (g * (2.0 * (1.0 - g) * x / (2.0 * g * l - pi) + 1.0)).min(2.0 * g / pi * (l - x));
        v > upper + 1e-12 || v < lower - 1e-12
    }));
    out.push(McReport::exact("spectral.v1_envelope_violations", envelope, 0.0, 0.0));
    out
}

/// Conservativity, Chapman–Kolmogorov, fixed point, symmetry and the Green's
/// function limit. `green_modes` sets the basis size for the time integral.
pub fn verify_kernels(basis: &SpectralBasis, green_modes: usize) -> Result<VerifyOutput> {
    let mut out = VerifyOutput::default();
    let l = basis.length();
    let xs: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 0.95].iter().map(|f| f * l).collect();
    let ts = [basis.t_floor(), 0.5, 2.0, 10.0];

    let mut worst_mass = 0.0f64;
    let mut worst_fixed = 0.0f64;
    let mut worst_sym = 0.0f64;
    for &t in &ts {
        let plan = basis.kernel_plan(t, 1e-13)?;
        for &x in &xs {
            let mass = quad(|y| plan.q(x, y).value, 0.0, l);
            worst_mass = worst_mass.max((mass - 1.0).abs());
            let ph = quad(|y| plan.p(x, y).value * basis.h(y), 0.0, l);
            worst_fixed = worst_fixed.max((ph / basis.h(x) - 1.0).abs());
            for &y in &xs {
                worst_sym = worst_sym.max((plan.g(x, y).value - plan.g(y, x).value).abs());
            }
        }
    }
    out.push(McReport::exact("kernel.conservativity_max", worst_mass, 0.0, 1e-8));
    out.push(McReport::exact("kernel.fixed_point_h_rel", worst_fixed, 0.0, 1e-8));
    out.push(McReport::exact("kernel.symmetry_g_max", worst_sym, 0.0, 1e-12));

    let (s, t) = (0.3f64.max(basis.t_floor()), 0.7f64.max(basis.t_floor()));
    let ps = basis.kernel_plan(s, 1e-14)?;
    let pt = basis.kernel_plan(t, 1e-14)?;
    let pst = basis.kernel_plan(s + t, 1e-14)?;
    let inner: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9].iter().map(|f| f * l).collect();
    let mut worst_ck = 0.0f64;
    for &x in &inner {
        for &y in &inner {
            let lhs = quad(|z| ps.q(x, z).value * pt.q(z, y).value, 0.0, l);
            let rhs = pst.q(x, y).value;
            worst_ck = worst_ck.max(((lhs - rhs) / rhs).abs());
        }
    }
    out.push(McReport::exact("kernel.chapman_kolmogorov_rel", worst_ck, 0.0, 1e-6));

    let big = build_basis(basis.params, green_modes)?;
    let horizons = [l * l, 5.0 * l * l, 50.0 * l * l];
    let pts: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8].iter().map(|f| f * l).collect();
    let mut raw = RawTable::new("green", &["x", "y", "horizon", "integral", "green"]);
    let (mut worst_green, mut not_monotone) = (0.0f64, 0.0);
    for &x in &pts {
        for &y in &pts {
            let green = big.greens_function(x, y)?;
            let vals: Vec<f64> = horizons.iter().map(|&h| big.integrated_kernel(h, x, y)).collect();
            for (h, v) in horizons.iter().zip(&vals) {
                raw.rows.push(vec![x, y, *h, *v, green]);
            }
            if !(vals[0] < vals[1] && vals[1] < vals[2]) {
                not_monotone += 1.0;
            }
            worst_green = worst_green.max(((vals[2] - green) / green).abs());
        }
    }
    out.push(McReport::exact("kernel.green_limit_rel", worst_green, 0.0, 1e-4).with_note(format!("{green_modes} modes, T = 50 L²")));
    out.push(McReport::exact("kernel.green_monotone_violations", not_monotone, 0.0, 0.0));
    out.raw.push(raw);
    Ok(out)
}

/// All deterministic identities for one basis.
pub fn verify_identities(basis: &SpectralBasis, green_modes: usize) -> Result<VerifyOutput> {
    let mut out = verify_spectral(basis);
    out.extend(verify_kernels(basis, green_modes)?);
    Ok(out)
}

/// One rung of the `N` ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendRow {
    pub n: u64,
    pub length: f64,
    pub sigma_sq: f64,
    pub sigma_sq_quadrature: f64,
    /// `Σ(L)² / (N^c · 64π²/c⁶)`.
    pub ratio: f64,
    pub count_ratio: f64,
}

pub fn trend_rows(c: f64, ns: &[u64]) -> Result<Vec<TrendRow>> {
    ns.iter()
        .map(|&n| {
            let p: ModelParams = params_for_population(n, c)?;
            let stats = best_class_stats(&p)?;
            let b = build_basis(p, 1)?;
            let s = b.variance_profile().sigma_sq_total;
            let quad_s = integrate(|x| b.h(x).powi(2) * b.h_tilde(x), 0.0, p.length, 0.0, 1e-12).value;
            Ok(TrendRow {
                n,
                length: p.length,
                sigma_sq: s,
                sigma_sq_quadrature: quad_s,
                ratio: s / ((n as f64).powf(c) * sigma_sq_limit(c)),
                count_ratio: stats.count_ratio,
            })
        })
        .collect()
}

fn moving_toward(vals: &[f64], target: f64) -> f64 {
    count(vals.windows(2).map(|w| (w[1] - target).abs() >= (w[0] - target).abs()))
}

/// Monotone parts of the ladder: `Σ(L_N)²/N^c` against its constant and
/// `N^c J_{A_N}` against `k`.
pub fn verify_trend_monotone(c: f64, ns: &[u64]) -> Result<VerifyOutput> {
    let rows = trend_rows(c, ns)?;
    let mut out = VerifyOutput::default();
    let mut raw = RawTable::new("constant_trend", &["n", "length", "sigma_sq", "sigma_sq_quadrature", "ratio", "count_ratio"]);
    let mut worst_quad = 0.0f64;
    for r in &rows {
        raw.rows.push(vec![r.n as f64, r.length, r.sigma_sq, r.sigma_sq_quadrature, r.ratio, r.count_ratio]);
        worst_quad = worst_quad.max(((r.sigma_sq - r.sigma_sq_quadrature) / r.sigma_sq_quadrature).abs());
        out.push(McReport::new(format!("trend.ratio.N={:e}", r.n as f64), r.ratio, 1.0, 0.0, 0, Rule::Diagnostic));
    }
    out.push(McReport::exact("trend.sigma_sq_quadrature_rel", worst_quad, 0.0, 1e-8));
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    out.push(McReport::exact("trend.sigma_ratio_monotone_violations", moving_toward(&ratios, 1.0), 0.0, 0.0));
    let counts: Vec<f64> = rows.iter().map(|r| r.count_ratio).collect();
    let k = params_for_population(ns[0], c)?.loglog_coeff;
    out.push(McReport::exact("trend.count_ratio_monotone_violations", moving_toward(&counts, k), 0.0, 0.0));
    out.raw.push(raw);
    Ok(out)
}

/// `Σ(L_N)² / N^c` within `tol` of `64π²/c⁶` at population `n`.
pub fn verify_trend_gate(c: f64, n: u64, tol: f64) -> Result<McReport> {
    let row = trend_rows(c, &[n])?[0];
    Ok(McReport::new(format!("trend.sigma_ratio.N={:e}", n as f64), row.ratio, 1.0, 0.0, 0, Rule::Relative(tol)))
}
