//! Brownian coalescent point process of height `T` and the `θ`-mixture law
//! of the limiting sample genealogy.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::Rng;

/// One CPP draw observed at `k` uniform sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppSample {
    pub height: f64,
    /// Total mass `Y`, exponential with mean `height`.
    pub y: f64,
    /// Depths between consecutive sample points.
    pub gaps: Vec<f64>,
    /// Draws discarded because two depths tied.
    pub resampled: u32,
}

/// `d(i, j) = max(g_i, …, g_{j−1})` for `i < j`.
pub fn gap_matrix(gaps: &[f64]) -> Vec<Vec<f64>> {
    let k = gaps.len() + 1;
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        let mut m: f64 = 0.0;
        for j in i + 1..k {
            m = m.max(gaps[j - 1]);
            d[i][j] = m;
            d[j][i] = m;
        }
    }
    d
}

/// Relabels rows and columns by `perm`.
pub fn permute(d: &[Vec<f64>], perm: &[usize]) -> Vec<Vec<f64>> {
    perm.iter().map(|&i| perm.iter().map(|&j| d[i][j]).collect()).collect()
}

fn random_perm(k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

fn distinct(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] < w[1])
}

impl CppSample {
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        gap_matrix(&self.gaps)
    }
}

/// Exact finite-dimensional law: `Y ~ Exp(mean T)`, consecutive depths
/// i.i.d. uniform on `[0, T]`.
pub fn sample_cpp_distances(k: usize, height: f64, rng: &mut Rng) -> Result<CppSample> {
    if k < 2 {
        return Err(domain("k", k as f64, "k >= 2"));
    }
    if !(height > 0.0) {
        return Err(domain("T", height, "T > 0"));
    }
    let y = height * rng.sample::<f64, _>(Exp1);
    let mut resampled = 0;
    loop {
        let gaps: Vec<f64> = (0..k - 1).map(|_| height * rng.random::<f64>()).collect();
        if distinct(&gaps) {
            return Ok(CppSample { height, y, gaps, resampled });
        }
        resampled += 1;
    }
}

/// Pairwise depths of `k` individuals sampled from the limit genealogy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMatrix {
    pub k: usize,
    pub height: f64,
    pub theta: f64,
    pub entries: Vec<Vec<f64>>,
}

/// `H_θ(s) = (1+θ)(s/T) / (1 + θ s/T)` on `[0, T]`.
pub fn h_theta_cdf(theta: f64, height: f64, s: f64) -> f64 {
    let a = s / height;
    (1.0 + theta) * a / (1.0 + theta * a)
}

pub fn h_theta_quantile(theta: f64, height: f64, r: f64) -> f64 {
    height * r / ((1.0 + theta) - theta * r)
}

/// Samples with height `T = σ² t / 2`.
pub fn sample_h_matrix(k: usize, t: f64, sigma_sq: f64, rng: &mut Rng) -> Result<HMatrix> {
    if k < 2 {
        return Err(domain("k", k as f64, "k >= 2"));
    }
    if !(t > 0.0 && sigma_sq > 0.0) {
        return Err(domain("σ²t", sigma_sq * t, "σ²t > 0"));
    }
    let height = 0.5 * sigma_sq * t;
    // θ has density k(1+θ)^{−2}(θ/(1+θ))^{k−1}; u = θ/(1+θ) has density k u^{k−1}.
    let u = rng.random::<f64>().powf(1.0 / k as f64);
    let theta = u / (1.0 - u);
    let depths = loop {
        let d: Vec<f64> = (0..k - 1).map(|_| h_theta_quantile(theta, height, rng.random::<f64>())).collect();
        if distinct(&d) {
            break d;
        }
    };
    let perm = random_perm(k, rng);
    Ok(HMatrix {
        k,
        height,
        theta,
        entries: permute(&gap_matrix(&depths), &perm),
    })
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { f64::NAN };
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            mean: self.mean * c,
            se: self.se * c.abs(),
            n: self.n,
        }
    }
}

/// A functional of a distance matrix.
pub type Phi<'a> = &'a (dyn Fn(&[Vec<f64>]) -> f64 + Sync);

/// One draw of `k! T^k φ(U_σ)` with uniform planar depths.
pub fn cpp_moment_formula_draw(k: usize, height: f64, phi: Phi, rng: &mut Rng) -> f64 {
    let depths: Vec<f64> = (0..k - 1).map(|_| height * rng.random::<f64>()).collect();
    let perm = random_perm(k, rng);
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    fact * height.powi(k as i32) * phi(&permute(&gap_matrix(&depths), &perm))
}

/// One draw of `Y^k φ(d)` from the CPP observed at `k` uniform points of
/// `[0, Y]`; the depth between points `ℓ` apart has CDF `exp(−ℓ(1/s − 1/T))`.
pub fn cpp_moment_mc_draw(k: usize, height: f64, phi: Phi, rng: &mut Rng) -> f64 {
    let y = height * rng.sample::<f64, _>(Exp1);
    let mut pts: Vec<f64> = (0..k).map(|_| y * rng.random::<f64>()).collect();
    pts.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = pts
        .windows(2)
        .map(|w| {
            let ell = w[1] - w[0];
            let u = 1.0 - rng.random::<f64>();
            1.0 / (1.0 / height - u.ln() / ell)
        })
        .collect();
    let perm = random_perm(k, rng);
    y.powi(k as i32) * phi(&permute(&gap_matrix(&gaps), &perm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMode {
    Formula,
    MonteCarlo,
}

/// `E[∫_{[0,Y]^k} φ(d) dx] = k! T^k E[φ(U_σ)]`, estimated in either mode.
pub fn cpp_moment(k: usize, height: f64, phi: Phi, mode: MomentMode, samples: usize, rng: &mut Rng) -> Result<Estimate> {
    if k < 1 {
        return Err(domain("k", 0.0, "k >= 1"));
    }
    if !(height > 0.0) {
        return Err(domain("T", height, "T > 0"));
    }
    let xs: Vec<f64> = (0..samples)
        .map(|_| match mode {
            MomentMode::Formula => cpp_moment_formula_draw(k, height, phi, rng),
            MomentMode::MonteCarlo => cpp_moment_mc_draw(k, height, phi, rng),
        })
        .collect();
    Ok(Estimate::from_samples(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbm::is_ultrametric;
    use crate::rng::{stream, tags};

    #[test]
    fn inversion_round_trip() {
        for theta in [0.0, 0.3, 5.0, 1e3] {
            for r in [0.0, 0.2, 0.5, 0.99, 1.0] {
                let s = h_theta_quantile(theta, 3.0, r);
                assert!((h_theta_cdf(theta, 3.0, s) - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn samples_are_ultrametric() {
        let mut rng = stream(1, tags::CPP, 0);
        for k in 2..6 {
            let s = sample_cpp_distances(k, 2.0, &mut rng).unwrap();
            assert!(s.y > 0.0 && s.gaps.iter().all(|&g| (0.0..=2.0).contains(&g)));
            assert!(is_ultrametric(&s.distance_matrix(), 0.0));
            let h = sample_h_matrix(k, 3.0, 2.0, &mut rng).unwrap();
            assert_eq!(h.height, 3.0);
            assert!(is_ultrametric(&h.entries, 0.0));
            assert!(h.entries.iter().flatten().all(|&v| (0.0..=3.0).contains(&v)));
        }
        assert!(sample_cpp_distances(1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn constant_functional_is_exact_in_formula_mode() {
        let mut rng = stream(2, tags::CPP, 0);
        let one = |_: &[Vec<f64>]| 1.0;
        let e = cpp_moment(3, 1.5, &one, MomentMode::Formula, 10, &mut rng).unwrap();
        assert!((e.mean - 6.0 * 1.5f64.powi(3)).abs() < 1e-12);
        let a = cpp_moment(2, 2.0, &one, MomentMode::Formula, 4, &mut rng).unwrap().mean;
        let b = cpp_moment(2, 1.0, &one, MomentMode::Formula, 4, &mut rng).unwrap().mean;
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn half_height_indicator() {
        // Pair depth is uniform, so P(d ≤ T/2) = ½ and the moment is T².
        let mut rng = stream(4, tags::CPP, 0);
        let ind = |d: &[Vec<f64>]| if d[0][1] <= 1.0 { 1.0 } else { 0.0 };
        let e = cpp_moment(2, 2.0, &ind, MomentMode::Formula, 200_000, &mut rng).unwrap();
        assert!((e.mean - 4.0).abs() < 4.0 * e.se, "{e:?}");
    }
}
