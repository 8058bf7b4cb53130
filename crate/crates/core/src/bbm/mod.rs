//! Branching Brownian motion with drift `β`, reflected at 0, killed at `L`,
//! splitting in two at rate ½.

mod forest;

pub use forest::{is_ultrametric, Fate, GenealogyForest, Mrca, Record};

use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::Rng;
use crate::spectral::SpectralBasis;

pub const BRANCH_RATE: f64 = 0.5;

/// How an increment that overshoots 0 is mapped back into `[0, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reflection {
    /// Exact Skorokhod map using the sampled bridge minimum.
    #[default]
    Skorokhod,
    /// `x′ ← |x′|`.
    Fold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbmConfig {
    pub dt: f64,
    pub reflection: Reflection,
    pub population_cap: usize,
    /// Record births and deaths; needed for distance matrices.
    pub genealogy: bool,
    /// Compact the forest to ancestors of live particles when it grows.
    /// Particle ids are renumbered on each compaction.
    pub prune: bool,
    /// Splitting rate; ½ for the critical model, 0 for a single killed diffusion.
    pub branch_rate: f64,
}

impl Default for BbmConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            reflection: Reflection::Skorokhod,
            population_cap: 10_000_000,
            genealogy: true,
            prune: false,
            branch_rate: BRANCH_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub position: f64,
}

/// Live particles at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub time: f64,
    pub particles: Vec<Particle>,
}

impl PopulationState {
    pub fn z(&self) -> usize {
        self.particles.len()
    }

    /// Additive martingale `Y = Σ_v h(X_v)`.
    pub fn y(&self, basis: &SpectralBasis) -> f64 {
        self.particles.iter().map(|p| basis.h(p.position)).sum()
    }
}

/// One particle at `x`.
pub fn init_single(basis: &SpectralBasis, x: f64) -> Result<PopulationState> {
    if !(x >= 0.0 && x < basis.length()) {
        return Err(domain("x", x, format!("[0, {})", basis.length())));
    }
    Ok(PopulationState {
        time: 0.0,
        particles: vec![Particle {
            id: 0,
            parent: None,
            birth_time: 0.0,
            position: x,
        }],
    })
}

/// Inverse-CDF sampler for the stable configuration `h̃`.
#[derive(Debug, Clone)]
pub struct StableSampler<'a> {
    basis: &'a SpectralBasis,
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl<'a> StableSampler<'a> {
    pub fn new(basis: &'a SpectralBasis) -> Self {
        let n = 1024;
        let l = basis.length();
        let grid: Vec<f64> = (0..=n).map(|i| l * i as f64 / n as f64).collect();
        let cdf = grid.iter().map(|&z| basis.closed_forms(z).map(|c| c.j).unwrap_or(1.0)).collect();
        Self { basis, grid, cdf }
    }

    /// Solves `J_z = u` to rounding; the grid only supplies the bracket.
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.grid.len() - 1);
        let (mut lo, mut hi) = (self.grid[i - 1], self.grid[i]);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if crate::spectral::closed_forms_raw(self.basis.beta(), self.basis.gamma(), self.basis.length(), mid).j <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let x = self.quantile(rng.random::<f64>());
        x.min(self.basis.length() * (1.0 - f64::EPSILON))
    }
}

/// `m` i.i.d. particles with density `h̃`.
pub fn init_stable(basis: &SpectralBasis, m: usize, rng: &mut Rng) -> Result<PopulationState> {
    if m == 0 {
        return Err(domain("M", 0.0, "M >= 1"));
    }
    let sampler = StableSampler::new(basis);
    let particles = (0..m)
        .map(|id| Particle {
            id,
            parent: None,
            birth_time: 0.0,
            position: sampler.sample(rng),
        })
        .collect();
    Ok(PopulationState { time: 0.0, particles })
}

#[derive(Debug, Clone, Copy)]
struct Live {
    id: usize,
    x: f64,
    next_branch: f64,
}

/// `Z` and `Y` at a recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub z: usize,
    pub y: f64,
}

/// A running replica.
#[derive(Debug, Clone)]
pub struct Bbm<'a> {
    basis: &'a SpectralBasis,
    config: BbmConfig,
    time: f64,
    live: Vec<Live>,
    forest: GenealogyForest,
    next_id: usize,
    prune_at: usize,
    stack: Vec<(Live, f64)>,
    spare: Vec<Live>,
}

fn branch_wait(rate: f64, rng: &mut Rng) -> f64 {
    if rate > 0.0 {
        rng.sample::<f64, _>(Exp1) / rate
    } else {
        f64::INFINITY
    }
}

impl<'a> Bbm<'a> {
    pub fn new(basis: &'a SpectralBasis, config: BbmConfig, init: &PopulationState, rng: &mut Rng) -> Result<Self> {
        basis.params.require_nondegenerate()?;
        if !(config.dt > 0.0) {
            return Err(domain("dt", config.dt, "dt > 0"));
        }
        let mut sim = Self {
            basis,
            config,
            time: init.time,
            live: Vec::with_capacity(init.particles.len()),
            forest: GenealogyForest::default(),
            next_id: 0,
            prune_at: 1 << 16,
            stack: Vec::new(),
            spare: Vec::new(),
        };
        for (root, p) in init.particles.iter().enumerate() {
            if !(p.position >= 0.0 && p.position < basis.length()) {
                return Err(domain("x", p.position, format!("[0, {})", basis.length())));
            }
            let id = sim.new_id(None, init.time, p.position, root as u32);
            sim.live.push(Live {
                id,
                x: p.position,
                next_branch: init.time + branch_wait(config.branch_rate, rng),
            });
        }
        Ok(sim)
    }

    fn new_id(&mut self, parent: Option<usize>, time: f64, x: f64, tag: u32) -> usize {
        if self.config.genealogy {
            self.forest.push(Record {
                parent,
                birth_time: time,
                birth_position: x,
                end_time: f64::NAN,
                fate: Fate::Alive,
                tag,
            })
        } else {
            self.next_id += 1;
            self.next_id - 1
        }
    }

    fn close(&mut self, id: usize, time: f64, fate: Fate) {
        if self.config.genealogy {
            self.forest.close(id, time, fate);
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn z(&self) -> usize {
        self.live.len()
    }

    pub fn y(&self) -> f64 {
        self.live.iter().map(|p| self.basis.h(p.x)).sum()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.live.iter().map(|p| p.x)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.live.iter().map(|p| p.id).collect()
    }

    pub fn forest(&self) -> &GenealogyForest {
        &self.forest
    }

    pub fn state(&self) -> PopulationState {
        PopulationState {
            time: self.time,
            particles: self
                .live
                .iter()
                .map(|p| {
                    let r = self.forest.records.get(p.id);
                    Particle {
                        id: p.id,
                        parent: r.and_then(|r| r.parent),
                        birth_time: r.map_or(f64::NAN, |r| r.birth_time),
                        position: p.x,
                    }
                })
                .collect(),
        }
    }

    /// Distance matrix of live particles `ids` at the current time.
    pub fn distance_matrix(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        if !self.config.genealogy {
            return Err(Error::Config("genealogy recording is disabled".into()));
        }
        self.forest.distance_matrix(ids, self.time)
    }

    /// Moves a particle at `x` for time `s`; `None` if it is killed.
    fn diffuse(&self, x: f64, s: f64, rng: &mut Rng) -> Option<f64> {
        let l = self.basis.length();
        let sq = s.sqrt();
        let w = self.basis.beta() * s + sq * rng.sample::<f64, _>(StandardNormal);
        let y = match self.config.reflection {
            Reflection::Skorokhod => {
                // The bridge minimum falls 6√s below min(0, w) with probability e^{−72}.
                if x + w.min(0.0) < 6.0 * sq {
                    let u = 1.0 - rng.random::<f64>();
                    let m = 0.5 * (w - (w * w - 2.0 * s * u.ln()).sqrt());
                    (x + w).max(w - m)
                } else {
                    x + w
                }
            }
            Reflection::Fold => (x + w).abs(),
        };
        if y >= l {
            return None;
        }
        let a = (l - x) * (l - y);
        if a < 20.0 * s && rng.random::<f64>() < (-2.0 * a / s).exp() {
            return None;
        }
        Some(y)
    }

    /// Advances every particle to `time + dt`.
    pub fn step(&mut self, dt: f64, rng: &mut Rng) -> Result<()> {
        let t_end = self.time + dt;
        let mut stack = std::mem::take(&mut self.stack);
        let mut next = std::mem::take(&mut self.spare);
        stack.clear();
        next.clear();
        stack.extend(self.live.drain(..).rev().map(|p| (p, self.time)));
        while let Some((mut p, tau)) = stack.pop() {
            let seg_end = p.next_branch.min(t_end);
            if seg_end > tau {
                match self.diffuse(p.x, seg_end - tau, rng) {
                    Some(x) => p.x = x,
                    None => {
                        self.close(p.id, seg_end, Fate::Killed);
                        continue;
                    }
                }
            }
            if p.next_branch <= t_end {
                let at = p.next_branch;
                self.close(p.id, at, Fate::Branched);
                let first: u32 = rng.random::<bool>() as u32;
                for bit in [first, 1 - first] {
                    let id = self.new_id(Some(p.id), at, p.x, bit);
                    stack.push((
                        Live {
                            id,
                            x: p.x,
                            next_branch: at + branch_wait(self.config.branch_rate, rng),
                        },
                        at,
                    ));
                }
                if next.len() + stack.len() > self.config.population_cap {
                    let size = next.len() + stack.len();
                    self.live = next;
                    return Err(Error::PopulationCap {
                        size,
                        cap: self.config.population_cap,
                        time: at,
                    });
                }
            } else {
                next.push(p);
            }
        }
        self.spare = std::mem::replace(&mut self.live, next);
        self.stack = stack;
        self.time = t_end;
        if self.config.genealogy && self.config.prune && self.forest.len() > self.prune_at {
            self.prune();
        }
        Ok(())
    }

    fn prune(&mut self) {
        let keep: Vec<usize> = self.live.iter().map(|p| p.id).collect();
        let ids = self.forest.prune(&keep);
        for (p, id) in self.live.iter_mut().zip(ids) {
            p.id = id;
        }
        self.prune_at = (4 * self.forest.len()).max(1 << 16);
    }

    /// Steps of at most `dt` until `until`, landing on it exactly.
    pub fn advance_to(&mut self, until: f64, rng: &mut Rng) -> Result<()> {
        while self.time < until && !self.live.is_empty() {
            let remaining = until - self.time;
            let dt = if remaining <= self.config.dt * (1.0 + 1e-9) { remaining } else { self.config.dt };
            self.step(dt, rng)?;
            if remaining <= self.config.dt * (1.0 + 1e-9) {
                self.time = until;
            }
        }
        if self.live.is_empty() {
            self.time = self.time.max(until);
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            z: self.z(),
            y: self.y(),
        }
    }
}

/// Runs one replica to `horizon`, calling `observe` at each time in
/// `record_at` (sorted, within `[0, horizon]`).
pub fn run_with<'a, F>(
    basis: &'a SpectralBasis,
    config: BbmConfig,
    init: &PopulationState,
    horizon: f64,
    record_at: &[f64],
    rng: &mut Rng,
    mut observe: F,
) -> Result<Bbm<'a>>
where
    F: FnMut(usize, &Bbm<'a>),
{
    if !(horizon > 0.0) {
        return Err(domain("horizon", horizon, "horizon > 0"));
    }
    if record_at.windows(2).any(|w| w[0] > w[1]) || record_at.iter().any(|&t| !(t >= init.time && t <= horizon)) {
        return Err(Error::Config("record_at must be sorted and within [0, horizon]".into()));
    }
    let mut sim = Bbm::new(basis, config, init, rng)?;
    for (i, &t) in record_at.iter().enumerate() {
        sim.advance_to(t, rng)?;
        observe(i, &sim);
    }
    sim.advance_to(horizon, rng)?;
    Ok(sim)
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    pub snapshots: Vec<Snapshot>,
    pub last: Bbm<'a>,
}

pub fn run<'a>(
    basis: &'a SpectralBasis,
    config: BbmConfig,
    init: &PopulationState,
    horizon: f64,
    record_at: &[f64],
    rng: &mut Rng,
) -> Result<Trajectory<'a>> {
    let mut snapshots = Vec::with_capacity(record_at.len());
    let last = run_with(basis, config, init, horizon, record_at, rng, |_, sim| snapshots.push(sim.snapshot()))?;
    Ok(Trajectory { snapshots, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};
    use crate::spectral::{build_basis, ModelParams};

    fn basis() -> SpectralBasis {
        build_basis(ModelParams::from_drift(0.5).unwrap(), 64).unwrap()
    }

    #[test]
    fn single_start_checks_domain() {
        let b = basis();
        let s = init_single(&b, 1.0).unwrap();
        assert!((s.y(&b) - b.h(1.0)).abs() < 1e-12);
        assert!((init_single(&b, 0.0).unwrap().y(&b) - b.h(0.0)).abs() < 1e-15);
        assert!(init_single(&b, b.length()).is_err());
    }

    #[test]
    fn stable_quantile_inverts_closed_form() {
        let b = basis();
        let s = StableSampler::new(&b);
        for u in [1e-6, 0.1, 0.5, 0.93, 1.0 - 1e-9] {
            let x = s.quantile(u);
            assert!((b.closed_forms(x).unwrap().j - u).abs() < 1e-12);
        }
        let mut rng = stream(1, tags::INIT, 0);
        let one = init_stable(&b, 1, &mut rng).unwrap();
        assert_eq!(one.z(), 1);
        assert!(one.particles[0].position < b.length());
    }

    #[test]
    fn runs_are_deterministic() {
        let b = basis();
        let init = init_single(&b, 1.0).unwrap();
        let cfg = BbmConfig { dt: 0.05, ..Default::default() };
        let go = || {
            let mut rng = stream(11, tags::BBM, 5);
            let tr = run(&b, cfg, &init, 6.0, &[1.0, 3.0, 6.0], &mut rng).unwrap();
            (tr.snapshots, tr.last.positions().collect::<Vec<_>>())
        };
        let (a, b2) = (go(), go());
        assert_eq!(a.0, b2.0);
        assert_eq!(a.1, b2.1);
        assert_eq!(a.0.len(), 3);
    }

    #[test]
    fn genealogy_is_consistent() {
        let b = basis();
        let init = init_single(&b, 0.2).unwrap();
        let cfg = BbmConfig { dt: 0.05, ..Default::default() };
        for seed in 0..40 {
            let mut rng = stream(seed, tags::BBM, 0);
            let tr = run(&b, cfg, &init, 8.0, &[], &mut rng).unwrap();
            let ids = tr.last.ids();
            if ids.len() < 3 {
                continue;
            }
            let d = tr.last.distance_matrix(&ids).unwrap();
            assert!(is_ultrametric(&d, 1e-12));
            assert!(d.iter().flatten().all(|&v| (0.0..=8.0).contains(&v)));
            for r in &tr.last.forest().records {
                if let Some(p) = r.parent {
                    assert!(r.birth_time > tr.last.forest().records[p].birth_time);
                }
            }
        }
    }

    #[test]
    fn pruning_preserves_distances() {
        let b = basis();
        let init = init_single(&b, 0.2).unwrap();
        let plain = BbmConfig { dt: 0.05, ..Default::default() };
        let pruned = BbmConfig { prune: true, ..plain };
        for seed in 0..10 {
            let a = run(&b, plain, &init, 10.0, &[], &mut stream(seed, tags::BBM, 0)).unwrap().last;
            let mut c = run(&b, pruned, &init, 10.0, &[], &mut stream(seed, tags::BBM, 0)).unwrap().last;
            c.prune();
            assert_eq!(a.positions().collect::<Vec<_>>(), c.positions().collect::<Vec<_>>());
            if a.z() > 1 {
                assert_eq!(a.distance_matrix(&a.ids()).unwrap(), c.distance_matrix(&c.ids()).unwrap());
            }
        }
    }

    #[test]
    fn population_cap_is_enforced() {
        let b = basis();
        let init = init_single(&b, 0.1).unwrap();
        let cfg = BbmConfig { dt: 0.05, population_cap: 1, ..Default::default() };
        let hit = (0..50).any(|s| matches!(run(&b, cfg, &init, 20.0, &[], &mut stream(s, tags::BBM, 0)), Err(Error::PopulationCap { .. })));
        assert!(hit);
    }

    #[test]
    fn simulator_rejects_degenerate_drift() {
        let b = build_basis(ModelParams::from_drift(0.0).unwrap(), 4).unwrap();
        let init = init_single(&b, 0.1).unwrap();
        assert!(Bbm::new(&b, BbmConfig::default(), &init, &mut stream(0, tags::BBM, 0)).is_err());
    }
}
