//! Monte Carlo checks: many-to-few cross-checks, survival and Yaglom laws,
//! the Feller limit, sample genealogies and moment asymptotics.

use serde::{Deserialize, Serialize};

use super::report::{McReport, RawTable, Rule, VerifyOutput};
use super::stats::{elementary_symmetric, ks_one_sample, ks_two_sample, mean, mean_se, median};
use crate::bbm::{init_single, init_stable, is_ultrametric, Bbm, BbmConfig};
use crate::cpp::sample_h_matrix;
use crate::error::Result;
use crate::parallel::map_replicas;
use crate::quadrature::integrate;
use crate::rng::{stream, tag, tags, Rng};
use crate::spectral::{build_basis, params_for_population, ModelParams, SpectralBasis};
use crate::spine::{biased_measure_quadrature, biased_measure_samples, QuadratureGrid, SpineSampler, MAX_QUADRATURE_K};

/// Replica count, master seed, worker count and BBM time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub replicas: usize,
    pub seed: u64,
    pub threads: usize,
    pub dt: f64,
}

const SPINE_CHUNKS: usize = 64;
const STABLE_SURVIVAL: u64 = tag("survival.stable");
const GENEALOGY_H: u64 = tag("genealogy.h");

fn config(dt: f64, genealogy: bool) -> BbmConfig {
    BbmConfig {
        dt,
        genealogy,
        prune: genealogy,
        ..BbmConfig::default()
    }
}

fn collect<T>(rs: Vec<Result<T>>) -> Result<Vec<T>> {
    rs.into_iter().collect()
}

fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Spine samples split over fixed chunks, so the draw does not depend on
/// the worker count.
fn spine_samples(
    basis: &SpectralBasis,
    k: usize,
    t: f64,
    x: f64,
    g: &(dyn Fn(f64) -> f64 + Sync),
    samples: usize,
    seed: u64,
    stream_tag: u64,
    threads: usize,
) -> Result<Vec<f64>> {
    let sampler = SpineSampler::new(basis);
    let chunks = map_replicas(SPINE_CHUNKS, threads, |c| {
        let n = samples / SPINE_CHUNKS + usize::from(c < samples % SPINE_CHUNKS);
        let mut rng = stream(seed, stream_tag, c as u64);
        biased_measure_samples(&sampler, k, t, x, g, &mut rng, n)
    });
    Ok(collect(chunks)?.into_iter().flatten().collect())
}

fn kernel_integral(basis: &SpectralBasis, t: f64, x: f64, a: f64, b: f64) -> Result<f64> {
    let plan = basis.kernel_plan(t, 1e-13)?;
    Ok(integrate(|y| plan.p(x, y).value, a, b, 1e-15, 1e-13).value)
}

/// BBM against spectral quadrature (`k = 1`) and against the spine and the
/// moment recursion (`k = 2`), from one particle at `x`.
pub fn verify_many_to_few(
    basis: &SpectralBasis,
    x: f64,
    t: f64,
    mc: McSpec,
    spine_n: usize,
    grid: QuadratureGrid,
) -> Result<VerifyOutput> {
    let l = basis.length();
    let half = 0.5 * l;
    let init = init_single(basis, x)?;
    let per = collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, tags::BBM, i as u64);
        let mut sim = Bbm::new(basis, config(mc.dt, false), &init, &mut rng)?;
        sim.advance_to(t, &mut rng)?;
        let (mut sh, mut sh2, mut sind) = (0.0, 0.0, 0.0);
        for y in sim.positions() {
            let h = basis.h(y);
            sh += h;
            sh2 += h * h;
            sind += f64::from(u8::from(y <= half));
        }
        Ok([sim.z() as f64, sh, sh2, sind])
    }))?;
    let col = |f: &dyn Fn(&[f64; 4]) -> f64| per.iter().map(f).collect::<Vec<f64>>();
    let hx = basis.h(x);
    let n = mc.replicas;
    let mut out = VerifyOutput::default();

    let mass = kernel_integral(basis, t, x, 0.0, l)?;
    let mass_half = kernel_integral(basis, t, x, 0.0, half)?;
    let (m, se) = mean_se(&col(&|r| r[0]));
    out.push(McReport::new("many_to_few.k1.one.bbm", m, mass, se, n, Rule::WithinSe(3.0)));
    let (m, se) = mean_se(&col(&|r| r[1]));
    out.push(McReport::new("many_to_few.k1.h.bbm", m, hx, se, n, Rule::WithinSe(3.0)));
    let (m, se) = mean_se(&col(&|r| r[3]));
    out.push(McReport::new("many_to_few.k1.indicator.bbm", m, mass_half, se, n, Rule::WithinSe(3.0)));

    let one = |_: f64| 1.0;
    let ind = move |y: f64| f64::from(u8::from(y <= half));
    let s1 = spine_samples(basis, 1, t, x, &one, spine_n, mc.seed, tag("m2f.k1.one"), mc.threads)?;
    let (m, se) = mean_se(&s1);
    out.push(McReport::new("many_to_few.k1.one.spine", hx * m, mass, hx * se, spine_n, Rule::WithinSe(3.0)));
    let s1 = spine_samples(basis, 1, t, x, &ind, spine_n, mc.seed, tag("m2f.k1.indicator"), mc.threads)?;
    let (m, se) = mean_se(&s1);
    out.push(McReport::new("many_to_few.k1.indicator.spine", hx * m, mass_half, hx * se, spine_n, Rule::WithinSe(3.0)));

    let h = |y: f64| basis.h(y);
    let q_hh = biased_measure_quadrature(basis, 2, t, x, &h, grid)?;
    let q_11 = biased_measure_quadrature(basis, 2, t, x, &one, grid)?;
    let (target_hh, err_hh) = (2.0 * hx * q_hh.value, 2.0 * hx * q_hh.error_estimate);
    let (target_11, err_11) = (2.0 * hx * q_11.value, 2.0 * hx * q_11.error_estimate);

    let (bbm_hh, bbm_hh_se) = mean_se(&col(&|r| r[1] * r[1] - r[2]));
    out.push(McReport::new(
        "many_to_few.k2.hh.bbm_vs_recursion",
        bbm_hh,
        target_hh,
        combined(bbm_hh_se, err_hh),
        n,
        Rule::WithinSe(3.0),
    ));
    let s2 = spine_samples(basis, 2, t, x, &h, spine_n, mc.seed, tag("m2f.k2.hh"), mc.threads)?;
    let (m, se) = mean_se(&s2);
    let (spine_hh, spine_hh_se) = (2.0 * hx * m, 2.0 * hx * se);
    out.push(McReport::new(
        "many_to_few.k2.hh.spine_vs_recursion",
        spine_hh,
        target_hh,
        combined(spine_hh_se, err_hh),
        spine_n,
        Rule::WithinSe(3.0),
    ));
    out.push(McReport::new(
        "many_to_few.k2.hh.bbm_vs_spine",
        bbm_hh,
        spine_hh,
        combined(bbm_hh_se, spine_hh_se),
        n,
        Rule::WithinSe(3.0),
    ));
    let (m, se) = mean_se(&col(&|r| r[0] * (r[0] - 1.0)));
    out.push(McReport::new(
        "many_to_few.k2.one.bbm_vs_recursion",
        m,
        target_11,
        combined(se, err_11),
        n,
        Rule::WithinSe(3.0),
    ));
    let s2 = spine_samples(basis, 2, t, x, &one, spine_n, mc.seed, tag("m2f.k2.one"), mc.threads)?;
    let (m, se) = mean_se(&s2);
    out.push(McReport::new(
        "many_to_few.k2.one.spine_vs_recursion",
        2.0 * hx * m,
        target_11,
        combined(2.0 * hx * se, err_11),
        spine_n,
        Rule::WithinSe(3.0),
    ));

    let mut raw = RawTable::new("many_to_few_bbm", &["z", "sum_h", "sum_h_sq", "count_below_half"]);
    raw.rows = per.iter().map(|r| r.to_vec()).collect();
    out.raw.push(raw);
    Ok(out)
}

/// Population size at each time of `t_grid` for replicas started from one
/// particle at `x`.
pub fn simulate_survival(basis: &SpectralBasis, x: f64, t_grid: &[f64], mc: McSpec) -> Result<Vec<Vec<u64>>> {
    let init = init_single(basis, x)?;
    collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, tags::BBM, i as u64);
        let mut sim = Bbm::new(basis, config(mc.dt, false), &init, &mut rng)?;
        let mut zs = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            sim.advance_to(t, &mut rng)?;
            zs.push(sim.z() as u64);
        }
        Ok(zs)
    }))
}

/// Survival indicators for replicas started from one particle distributed
/// as `h̃`.
pub fn simulate_stable_survival(basis: &SpectralBasis, t_grid: &[f64], mc: McSpec) -> Result<Vec<Vec<bool>>> {
    collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, STABLE_SURVIVAL, i as u64);
        let init = init_stable(basis, 1, &mut rng)?;
        let mut sim = Bbm::new(basis, config(mc.dt, false), &init, &mut rng)?;
        let mut alive = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            sim.advance_to(t, &mut rng)?;
            alive.push(sim.z() > 0);
        }
        Ok(alive)
    }))
}

fn proportion(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Kolmogorov asymptotics `t P(Z_t > 0)/h(x) → 2/Σ²`, the bound
/// `P_{h̃}(Z_t > 0) ≤ 2/t`, and the halving of survival from `t` to `2t`.
pub fn survival_reports(
    basis: &SpectralBasis,
    x: f64,
    t_grid: &[f64],
    zs: &[Vec<u64>],
    stable: &[Vec<bool>],
) -> VerifyOutput {
    let mut out = VerifyOutput::default();
    let sigma_sq = basis.variance_profile().sigma_sq_total;
    let target = 2.0 / sigma_sq;
    let hx = basis.h(x);
    let n = zs.len();
    let mut probs = Vec::with_capacity(t_grid.len());
    let mut raw = RawTable::new("survival", &["t", "p_hat", "se", "t_p_over_h", "stable_p_hat"]);
    for (j, &t) in t_grid.iter().enumerate() {
        let (p, se) = proportion(zs.iter().filter(|z| z[j] > 0).count(), n);
        probs.push(p);
        let est = t * p / hx;
        let est_se = t * se / hx;
        let mut r = McReport::new(format!("survival.kolmogorov.t={t}"), est, target, est_se, n, Rule::Relative(0.10));
        if 3.0 * est_se > 0.10 * target {
            r = r.inconclusive("standard error too large to resolve 10%");
        }
        out.push(r);
        let (a, a_se) = proportion(stable.iter().filter(|s| s[j]).count(), stable.len());
        out.push(McReport::new(format!("survival.stable_bound.t={t}"), a, 2.0 / t, a_se, stable.len(), Rule::AtMost));
        raw.rows.push(vec![t, p, se, est, a]);
    }
    for (i, &t) in t_grid.iter().enumerate() {
        if let Some(j) = t_grid.iter().position(|&s| (s - 2.0 * t).abs() < 1e-9) {
            let ratio = probs[j] / probs[i];
            out.push(McReport::new(format!("survival.halving.t={t}"), ratio, 0.5, 0.0, n, Rule::Absolute(0.05)));
        }
    }
    out.raw.push(raw);
    out
}

fn exp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// `Z_t / (Σ² t / 2)` given survival against `Exp(1)`.
pub fn yaglom_reports(basis: &SpectralBasis, t_grid: &[f64], zs: &[Vec<u64>]) -> VerifyOutput {
    let mut out = VerifyOutput::default();
    let sigma_sq = basis.variance_profile().sigma_sq_total;
    let mut raw = RawTable::new("yaglom", &["t", "scaled_z"]);
    for (j, &t) in t_grid.iter().enumerate() {
        let scale = 0.5 * sigma_sq * t;
        let w: Vec<f64> = zs.iter().filter(|z| z[j] > 0).map(|z| z[j] as f64 / scale).collect();
        let n = w.len();
        raw.rows.extend(w.iter().map(|&v| vec![t, v]));
        let (m, se) = mean_se(&w);
        let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
        let (m2, se2) = mean_se(&sq);
        let ks = ks_one_sample(&w, exp_cdf);
        let mut reports = vec![
            McReport::new(format!("yaglom.mean.t={t}"), m, 1.0, se, n, Rule::Relative(0.10)),
            McReport::new(format!("yaglom.second_moment.t={t}"), m2, 2.0, se2, n, Rule::Relative(0.20)),
            McReport::new(format!("yaglom.ks_exp.t={t}"), ks, 0.05, 0.0, n, Rule::AtMost),
        ];
        if n < 500 {
            reports = reports.into_iter().map(|r| r.inconclusive("fewer than 500 survivors")).collect();
        }
        out.reports.extend(reports);
    }
    out.raw.push(raw);
    out
}

pub fn verify_survival(basis: &SpectralBasis, x: f64, t_grid: &[f64], mc: McSpec, stable_replicas: usize) -> Result<VerifyOutput> {
    let zs = simulate_survival(basis, x, t_grid, mc)?;
    let stable = simulate_stable_survival(basis, t_grid, McSpec { replicas: stable_replicas, ..mc })?;
    Ok(survival_reports(basis, x, t_grid, &zs, &stable))
}

pub fn verify_yaglom(basis: &SpectralBasis, x: f64, t_grid: &[f64], mc: McSpec) -> Result<VerifyOutput> {
    let zs = simulate_survival(basis, x, t_grid, mc)?;
    Ok(yaglom_reports(basis, t_grid, &zs))
}

/// Population-scale run: `N`, `c`, initial mass `z₀`, rescaled time `t` and
/// the Laplace arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FellerSpec {
    pub n: u64,
    pub c: f64,
    pub z0: f64,
    pub t: f64,
    pub lambdas: Vec<f64>,
}

/// `E[e^{−λȲ_t}]` against `exp(−z₀λ/(1 + Hλ))`, `H = Σ² N^{−c} t / 2`, with
/// `Ȳ_t = Y(t N^{1−c}) / N` started from `N z₀` particles drawn from `h̃`.
pub fn verify_feller(spec: &FellerSpec, mc: McSpec) -> Result<VerifyOutput> {
    let params = params_for_population(spec.n, spec.c)?;
    let basis = build_basis(params, 64)?;
    let n = spec.n as f64;
    let m = (n * spec.z0).round() as usize;
    let horizon = spec.t * n.powf(1.0 - spec.c);
    let per = collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, tags::BBM, i as u64);
        let init = init_stable(&basis, m, &mut rng)?;
        let mut sim = Bbm::new(&basis, config(mc.dt, false), &init, &mut rng)?;
        let y0 = sim.y() / n;
        sim.advance_to(horizon, &mut rng)?;
        Ok([y0, sim.y() / n, sim.z() as f64 / n])
    }))?;
    let sigma_sq = basis.variance_profile().sigma_sq_total;
    let h = 0.5 * sigma_sq * n.powf(-spec.c) * spec.t;
    let mut out = VerifyOutput::default();
    for &lambda in &spec.lambdas {
        let vals: Vec<f64> = per.iter().map(|r| (-lambda * r[1]).exp()).collect();
        let (est, se) = mean_se(&vals);
        let target = (-spec.z0 * lambda / (1.0 + h * lambda)).exp();
        out.push(McReport::new(format!("feller.laplace.lambda={lambda}"), est, target, se, mc.replicas, Rule::Relative(0.05)));
    }
    let y0: Vec<f64> = per.iter().map(|r| r[0]).collect();
    let yt: Vec<f64> = per.iter().map(|r| r[1]).collect();
    let diff: Vec<f64> = per.iter().map(|r| r[1] - r[0]).collect();
    out.push(McReport::new("feller.martingale", mean(&yt), mean(&y0), mean_se(&diff).1, mc.replicas, Rule::WithinSe(3.0)));
    let gap: Vec<f64> = per.iter().map(|r| (r[2] - r[1]).abs()).collect();
    out.push(McReport::new("feller.z_minus_y", mean(&gap), 0.0, mean_se(&gap).1, mc.replicas, Rule::Diagnostic));
    out.push(McReport::new("feller.h", h, h, 0.0, 0, Rule::Diagnostic).with_note(format!("Σ² = {sigma_sq}, L = {}", params.length)));
    let mut raw = RawTable::new("feller", &["y_bar_0", "y_bar_t", "z_bar_t"]);
    raw.rows = per.iter().map(|r| r.to_vec()).collect();
    out.raw.push(raw);
    Ok(out)
}

/// Rescaled genealogy of `k` individuals sampled from one surviving replica.
#[derive(Debug, Clone, PartialEq)]
struct SampledTree {
    k: usize,
    pair_depth: f64,
    mrca_depth: f64,
    ultrametric: bool,
    split_position: f64,
}

fn sample_trees(sim: &Bbm, ks: &[usize], rng: &mut Rng) -> Result<Vec<SampledTree>> {
    let ids = sim.ids();
    let t = sim.time();
    let mut out = Vec::new();
    for &k in ks {
        if ids.len() < k {
            continue;
        }
        let pick: Vec<usize> = rand::seq::index::sample(rng, ids.len(), k).into_iter().map(|i| ids[i]).collect();
        let d = sim.distance_matrix(&pick)?;
        let split = sim.forest().mrca(pick[0], pick[1])?.map_or(f64::NAN, |m| m.split_position);
        out.push(SampledTree {
            k,
            pair_depth: d[0][1] / t,
            mrca_depth: d.iter().flatten().fold(0.0, |a: f64, &b| a.max(b)) / t,
            ultrametric: is_ultrametric(&d, 1e-9 * t),
            split_position: split,
        });
    }
    Ok(out)
}

/// Sample genealogies at time `t` from one particle at `x`, against the
/// `θ`-mixture law.
pub fn verify_genealogy(
    basis: &SpectralBasis,
    x: f64,
    t: f64,
    ks: &[usize],
    mc: McSpec,
    h_samples: usize,
    min_survivors: usize,
) -> Result<VerifyOutput> {
    let init = init_single(basis, x)?;
    let per = collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, tags::BBM, i as u64);
        let mut sim = Bbm::new(basis, config(mc.dt, true), &init, &mut rng)?;
        sim.advance_to(t, &mut rng)?;
        if sim.z() == 0 {
            return Ok(None);
        }
        sample_trees(&sim, ks, &mut rng).map(Some)
    }))?;
    let survivors = per.iter().filter(|p| p.is_some()).count();
    let trees: Vec<&SampledTree> = per.iter().flatten().flatten().collect();
    let sigma_sq = basis.variance_profile().sigma_sq_total;
    let a_half = sigma_sq_median(basis);
    let mut out = VerifyOutput::default();
    out.push(McReport::new("genealogy.survivors", survivors as f64, min_survivors as f64, 0.0, mc.replicas, Rule::AtLeast));
    let mut raw = RawTable::new("genealogy", &["k", "pair_depth", "mrca_depth", "split_position"]);
    for &k in ks {
        let sel: Vec<&&SampledTree> = trees.iter().filter(|s| s.k == k).collect();
        raw.rows.extend(sel.iter().map(|s| vec![k as f64, s.pair_depth, s.mrca_depth, s.split_position]));
        let (pair, depth): (Vec<f64>, Vec<f64>) = sel.iter().map(|s| (s.pair_depth, s.mrca_depth)).unzip();
        let mut hrng = stream(mc.seed, GENEALOGY_H, k as u64);
        let mut h_pair = Vec::with_capacity(h_samples);
        let mut h_depth = Vec::with_capacity(h_samples);
        for _ in 0..h_samples {
            let hm = sample_h_matrix(k, t, sigma_sq, &mut hrng)?;
            h_pair.push(hm.entries[0][1] / hm.height);
            h_depth.push(hm.entries.iter().flatten().fold(0.0, |a: f64, &b| a.max(b)) / hm.height);
        }
        let mut reps = vec![
            McReport::new(format!("genealogy.ks_pair_depth.k={k}"), ks_two_sample(&pair, &h_pair), 0.05, 0.0, sel.len(), Rule::AtMost),
            McReport::new(format!("genealogy.ks_mrca_depth.k={k}"), ks_two_sample(&depth, &h_depth), 0.05, 0.0, sel.len(), Rule::AtMost),
        ];
        if survivors < min_survivors {
            reps = reps.into_iter().map(|r| r.inconclusive(format!("only {survivors} surviving replicas"))).collect();
        }
        out.reports.extend(reps);
        let ultra = sel.iter().filter(|s| s.ultrametric).count() as f64 / sel.len().max(1) as f64;
        out.push(McReport::new(format!("genealogy.ultrametric_fraction.k={k}"), ultra, 1.0, 0.0, sel.len(), Rule::Absolute(0.0)));
    }
    let splits: Vec<f64> = trees.iter().filter(|s| s.k == 2).map(|s| s.split_position).collect();
    let below = splits.iter().filter(|&&s| s <= a_half).count() as f64 / splits.len().max(1) as f64;
    out.push(
        McReport::new("genealogy.merges_below_sigma_median", below, 0.5, 0.0, splits.len(), Rule::Diagnostic)
            .with_note(format!("Σ² median at {a_half:.4}")),
    );
    out.raw.push(raw);
    Ok(out)
}

/// Point `A` with `Σ(A)² = Σ(L)²/2`.
pub fn sigma_sq_median(basis: &SpectralBasis) -> f64 {
    let prof = basis.variance_profile();
    let half = 0.5 * prof.sigma_sq_total;
    let (mut lo, mut hi) = (0.0, basis.length());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prof.sigma_sq(mid) < half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ladder of boundaries for merger positions. Each rung runs to
/// `horizon_factor / μ₂` from one particle at 0 and records the branching
/// position of the MRCA of `pairs` random pairs per surviving replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergerSpec {
    pub lengths: Vec<f64>,
    pub horizon_factor: f64,
    pub pairs: usize,
    /// Replicas per rung; empty means `mc.replicas` for every rung.
    #[serde(default)]
    pub rung_replicas: Vec<usize>,
}

pub fn verify_merger_ladder(spec: &MergerSpec, mc: McSpec) -> Result<VerifyOutput> {
    let mut out = VerifyOutput::default();
    let mut raw = RawTable::new("merger_positions", &["length", "horizon", "split_position"]);
    let mut medians = Vec::new();
    for (rung, &l) in spec.lengths.iter().enumerate() {
        let basis = build_basis(ModelParams::from_length(l)?, 8)?;
        let horizon = spec.horizon_factor / basis.decay(2);
        let init = init_single(&basis, 0.0)?;
        let replicas = spec.rung_replicas.get(rung).copied().unwrap_or(mc.replicas);
        let per = collect(map_replicas(replicas, mc.threads, |i| {
            let mut rng = stream(mc.seed ^ rung as u64, tags::BBM, i as u64);
            let mut sim = Bbm::new(&basis, config(mc.dt, true), &init, &mut rng)?;
            sim.advance_to(horizon, &mut rng)?;
            let ids = sim.ids();
            let mut splits = Vec::new();
            if ids.len() >= 2 {
                for _ in 0..spec.pairs {
                    let pick = rand::seq::index::sample(&mut rng, ids.len(), 2);
                    if let Some(m) = sim.forest().mrca(ids[pick.index(0)], ids[pick.index(1)])? {
                        splits.push(m.split_position);
                    }
                }
            }
            Ok(splits)
        }))?;
        let survivors = per.iter().filter(|s| !s.is_empty()).count();
        let splits: Vec<f64> = per.into_iter().flatten().collect();
        raw.rows.extend(splits.iter().map(|&s| vec![l, horizon, s]));
        let med = median(&splits);
        medians.push(med / l);
        let mut r = McReport::new(format!("merger.median_over_length.L={l}"), med / l, 0.5, 0.0, survivors, Rule::AtMost)
            .with_note(format!("t = {horizon:.2}, {} pairs", splits.len()));
        if survivors < 10 {
            r = r.inconclusive("fewer than 10 surviving replicas");
        }
        out.push(r);
    }
    let violations = medians.windows(2).filter(|w| !(w[1] < w[0])).count() as f64;
    out.push(McReport::exact("merger.median_over_length_decreasing_violations", violations, 0.0, 0.0));
    out.raw.push(raw);
    Ok(out)
}

/// `E[Σ_{distinct} Π h(X_i)]/h(x)` by BBM, spine and recursion, and
/// `E[Y_t^k]/h(x)`, each against `k! H^{k−1}` with `H = Σ² t / 2`.
pub fn verify_moments(
    basis: &SpectralBasis,
    x: f64,
    t: f64,
    k_max: usize,
    mc: McSpec,
    spine_n: usize,
    grid: QuadratureGrid,
) -> Result<VerifyOutput> {
    let init = init_single(basis, x)?;
    let per = collect(map_replicas(mc.replicas, mc.threads, |i| {
        let mut rng = stream(mc.seed, tags::BBM, i as u64);
        let mut sim = Bbm::new(basis, config(mc.dt, false), &init, &mut rng)?;
        sim.advance_to(t, &mut rng)?;
        let hs: Vec<f64> = sim.positions().map(|y| basis.h(y)).collect();
        Ok((elementary_symmetric(hs.iter().copied(), k_max), hs.iter().sum::<f64>()))
    }))?;
    let hx = basis.h(x);
    let big_h = 0.5 * basis.variance_profile().sigma_sq_total * t;
    let h = |y: f64| basis.h(y);
    let mut out = VerifyOutput::default();
    let mut raw = RawTable::new("moments", &["k", "bbm_factorial", "bbm_power", "spine", "recursion", "asymptote"]);
    for k in 1..=k_max {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let asymptote = fact * big_h.powi(k as i32 - 1);
        let e: Vec<f64> = per.iter().map(|(e, _)| fact * e[k] / hx).collect();
        let (bbm, bbm_se) = mean_se(&e);
        let pw: Vec<f64> = per.iter().map(|(_, y)| y.powi(k as i32) / hx).collect();
        let (power, power_se) = mean_se(&pw);

        let (rec, rec_err) = if k <= MAX_QUADRATURE_K {
            let q = biased_measure_quadrature(basis, k, t, x, &h, grid)?;
            (fact * q.value, fact * q.error_estimate)
        } else {
            (f64::NAN, f64::NAN)
        };
        let s = spine_samples(basis, k, t, x, &h, spine_n, mc.seed, tag("moments.spine") ^ k as u64, mc.threads)?;
        let (sp, sp_se) = mean_se(&s);
        let (spine, spine_se) = (fact * sp, fact * sp_se);
        raw.rows.push(vec![k as f64, bbm, power, spine, rec, asymptote]);

        let blown = |est: f64, se: f64| se > 0.25 * est.abs();
        let mut r = McReport::new(format!("moments.k={k}.bbm_vs_recursion"), bbm, rec, combined(bbm_se, rec_err), mc.replicas, Rule::WithinSe(3.0));
        if blown(bbm, bbm_se) {
            r = r.inconclusive("variance too large");
        }
        out.push(r);
        let spine_rule = if k == 1 { Rule::Absolute(1e-12) } else { Rule::WithinSe(3.0) };
        out.push(McReport::new(format!("moments.k={k}.spine_vs_recursion"), spine, rec, combined(spine_se, rec_err), spine_n, spine_rule));
        out.push(McReport::new(format!("moments.k={k}.recursion_vs_asymptote"), rec, asymptote, 0.0, 0, Rule::Diagnostic));
        let mut r = McReport::new(format!("moments.k={k}.power_vs_asymptote"), power, asymptote, power_se, mc.replicas, Rule::Diagnostic);
        if blown(power, power_se) {
            r = r.inconclusive("variance too large");
        }
        out.push(r);
    }
    out.raw.push(raw);
    Ok(out)
}
