//! Consistency of the coalescent point process samplers.

use rand::Rng as _;
use rand_distr::Exp1;

use super::report::{McReport, Rule, VerifyOutput};
use super::stats::{ks_one_sample, ks_two_sample, mean_se};
use crate::cpp::{cpp_moment_formula_draw, cpp_moment_mc_draw, sample_cpp_distances, sample_h_matrix};
use crate::error::Result;
use crate::parallel::map_replicas;
use crate::rng::{stream, tag};

use super::mc::McSpec;

const CHUNKS: usize = 64;

/// `CDF` of the pairwise depth `r = U/T` for two sampled individuals.
pub fn h_pair_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    let a = 1.0 - r;
    // −1/a − ln(1−a)/a² = Σ_{n≥0} aⁿ/(n+2).
    let inner = if a < 1e-3 {
        0.5 + a / 3.0 + a * a / 4.0 + a * a * a / 5.0
    } else {
        -1.0 / a - r.ln() / (a * a)
    };
    2.0 * r * inner
}

fn chunked<F>(n: usize, seed: u64, stream_tag: u64, threads: usize, draw: F) -> Vec<f64>
where
    F: Fn(&mut crate::rng::Rng) -> f64 + Sync,
{
    map_replicas(CHUNKS, threads, |c| {
        let m = n / CHUNKS + usize::from(c < n % CHUNKS);
        let mut rng = stream(seed, stream_tag, c as u64);
        (0..m).map(|_| draw(&mut rng)).collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

fn max_entry(d: &[Vec<f64>]) -> f64 {
    d.iter().flatten().fold(0.0, |a: f64, &b| a.max(b))
}

/// Named functionals `φ(d)` of a distance matrix for CPP height `height`.
pub fn functionals(height: f64) -> Vec<(&'static str, Box<dyn Fn(&[Vec<f64>]) -> f64 + Sync>)> {
    vec![
        ("one", Box::new(|_: &[Vec<f64>]| 1.0)),
        ("pair_depth", Box::new(|d: &[Vec<f64>]| d[0][1])),
        ("mrca_depth", Box::new(|d: &[Vec<f64>]| max_entry(d))),
        (
            "exp_total",
            Box::new(move |d: &[Vec<f64>]| {
                let s: f64 = (0..d.len()).flat_map(|i| (i + 1..d.len()).map(move |j| (i, j))).map(|(i, j)| d[i][j]).sum();
                (-s / height).exp()
            }),
        ),
        ("pair_below_half", Box::new(move |d: &[Vec<f64>]| f64::from(u8::from(d[0][1] < 0.5 * height)))),
    ]
}

/// Formula route against the MC route for each `k` and functional, the
/// mass and gap laws, and the `θ`-mixture marginals.
pub fn verify_cpp(height: f64, ks: &[usize], moment_samples: usize, law_samples: usize, mc: McSpec) -> Result<VerifyOutput> {
    let mut out = VerifyOutput::default();
    for &k in ks {
        for (name, phi) in functionals(height) {
            let phi = phi.as_ref();
            let f = chunked(moment_samples, mc.seed, tag("cpp.formula") ^ k as u64, mc.threads, |rng| {
                cpp_moment_formula_draw(k, height, phi, rng)
            });
            let m = chunked(moment_samples, mc.seed, tag("cpp.mc") ^ k as u64, mc.threads, |rng| {
                cpp_moment_mc_draw(k, height, phi, rng)
            });
            let (fm, fse) = mean_se(&f);
            let (mm, mse) = mean_se(&m);
            out.push(McReport::new(
                format!("cpp.moment.k={k}.{name}"),
                mm,
                fm,
                (fse * fse + mse * mse).sqrt(),
                moment_samples,
                Rule::WithinSe(3.0),
            ));
            if name == "one" {
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                out.push(McReport::exact(format!("cpp.moment.k={k}.one.formula_exact"), fm, fact * height.powi(k as i32), 1e-9 * fact * height.powi(k as i32)));
            }
        }
    }

    let y = chunked(law_samples, mc.seed, tag("cpp.mass"), mc.threads, |rng| height * rng.sample::<f64, _>(Exp1));
    let (ym, yse) = mean_se(&y);
    out.push(McReport::new("cpp.mass_mean", ym, height, yse, law_samples, Rule::WithinSe(3.0)));
    let gaps = chunked(law_samples, mc.seed, tag("cpp.gaps"), mc.threads, |rng| {
        sample_cpp_distances(2, height, rng).map_or(f64::NAN, |s| s.gaps[0] / height)
    });
    out.push(McReport::new("cpp.gap_ks_uniform", ks_one_sample(&gaps, |u| u.clamp(0.0, 1.0)), 0.005, 0.0, law_samples, Rule::AtMost));

    let n_h = law_samples / 10;
    let pair = |k: usize, t: f64, s2: f64, stream_tag: u64| {
        chunked(n_h, mc.seed, stream_tag, mc.threads, move |rng| {
            sample_h_matrix(k, t, s2, rng).map_or(f64::NAN, |h| h.entries[0][1])
        })
    };
    let a = pair(3, 2.0, 3.0, tag("cpp.h.a"));
    let b = pair(3, 6.0, 1.0, tag("cpp.h.b"));
    out.push(McReport::new("cpp.h_matrix_height_scaling_ks", ks_two_sample(&a, &b), 0.01, 0.0, n_h, Rule::AtMost));
    let two = pair(2, 2.0, 1.0, tag("cpp.h.two"));
    out.push(McReport::new("cpp.h_matrix_pair_cdf_ks", ks_one_sample(&two, h_pair_cdf), 0.01, 0.0, n_h, Rule::AtMost));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_cdf_is_continuous_at_the_series_switch() {
        let below = h_pair_cdf(1.0 - 0.999e-3);
        let above = h_pair_cdf(1.0 - 1.001e-3);
        assert!((below - above).abs() < 1e-5);
        assert!((h_pair_cdf(1.0 - 1e-12) - 1.0).abs() < 1e-9);
        let grid: Vec<f64> = (1..100).map(|i| h_pair_cdf(i as f64 / 100.0)).collect();
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pair_cdf_matches_mixture_integral() {
        // F(r) = ∫₀¹ 2u · r / (1 − u(1−r)) du.
        for r in [0.1, 0.4, 0.8] {
            let q = crate::quadrature::integrate(|u: f64| 2.0 * u * r / (1.0 - u * (1.0 - r)), 0.0, 1.0, 1e-14, 1e-14);
            assert!((q.value - h_pair_cdf(r)).abs() < 1e-12);
        }
    }
}
