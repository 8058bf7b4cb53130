use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fwl_core::bbm::{init_single, init_stable, BbmConfig, Bbm, Reflection, Snapshot};
use fwl_core::cpp::{cpp_moment, sample_cpp_distances, sample_h_matrix, Estimate, MomentMode};
use fwl_core::parallel::map_replicas;
use fwl_core::rng::{stream, tags};
use fwl_core::spectral::{best_class_stats, build_basis, sigma_sq_limit, SpectralBasis};
use fwl_core::bbm::run_with;
use fwl_core::spine::{biased_measure_quadrature, log_weight_delta, sample_topology, QuadratureGrid, SpineSampler};
use fwl_core::verify::{self, functionals, McSpec, Verdict, VerifyOutput};

use crate::config::{resolve, CommonFlags, Init, ModelFlags, RunConfig};
use crate::output::{fmt, Csv, OutDir};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigen-system profile table and summary.
    Spectral(SpectralArgs),
    /// Run BBM replicas and record Z and Y.
    Simulate(SimulateArgs),
    /// Draw marked k-spines.
    SpineSample(SpineSampleArgs),
    /// Evaluate the k-spine measure by the moment recursion.
    SpineQuadrature(SpineQuadratureArgs),
    /// Draw CPP or θ-mixture distance matrices.
    CppSample(CppSampleArgs),
    /// Estimate a CPP moment by both routes.
    CppMoment(CppMomentArgs),
    /// Run one verification test.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SpectralArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(skip)]
    model: ModelFlags,
    /// Profile grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// Eigenmodes to compute.
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(skip)]
    model: ModelFlags,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Start from one particle at x.
    #[arg(long, conflicts_with = "stable")]
    x: Option<f64>,
    /// Start from M particles drawn from h̃.
    #[arg(long)]
    stable: Option<usize>,
    /// Comma-separated recording times.
    #[arg(long, value_delimiter = ',')]
    record_at: Option<Vec<f64>>,
    /// skorokhod or fold.
    #[arg(long)]
    reflection: Option<String>,
    #[arg(long)]
    population_cap: Option<usize>,
    /// Also write the genealogy as newline-delimited JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    forest: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SpineSampleArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(skip)]
    model: ModelFlags,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpineQuadratureArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(skip)]
    model: ModelFlags,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    /// Leaf function: one or h.
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    time_nodes: Option<usize>,
    #[arg(long)]
    space_nodes: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct CppSampleArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[arg(long)]
    k: Option<usize>,
    /// CPP height.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    height: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// cpp (uniform gaps) or theta (θ-mixture limit law).
    #[arg(long)]
    law: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct CppMomentArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    height: Option<f64>,
    /// one, pair_depth, mrca_depth, exp_total or pair_below_half.
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Test {
    Identities,
    Trend,
    ManyToFew,
    Survival,
    Yaglom,
    Feller,
    Genealogy,
    Mergers,
    Moments,
    Cpp,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[serde(skip)]
    test: Test,
    #[command(flatten)]
    #[serde(skip)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(skip)]
    model: ModelFlags,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Largest moment order.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    z0: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    spine_samples: Option<usize>,
    #[arg(long)]
    stable_replicas: Option<usize>,
    /// Reference draws (H-matrix or CPP).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    height: Option<f64>,
    /// Modes for the Green's function check.
    #[arg(long)]
    modes: Option<usize>,
}

/// Runs a command; `Ok(false)` means a verification failed.
pub fn run(cmd: Command) -> Result<bool> {
    let (cfg, job): (RunConfig, Box<dyn FnOnce(&RunConfig, &mut OutDir) -> Result<bool>>) = match cmd {
        Command::Spectral(a) => (resolve("spectral", &a.common, &a.model, &a)?, Box::new(spectral)),
        Command::Simulate(a) => (resolve("simulate", &a.common, &a.model, &a)?, Box::new(simulate)),
        Command::SpineSample(a) => (resolve("spine-sample", &a.common, &a.model, &a)?, Box::new(spine_sample)),
        Command::SpineQuadrature(a) => (resolve("spine-quadrature", &a.common, &a.model, &a)?, Box::new(spine_quadrature)),
        Command::CppSample(a) => (resolve("cpp-sample", &a.common, &ModelFlags::default(), &a)?, Box::new(cpp_sample)),
        Command::CppMoment(a) => (resolve("cpp-moment", &a.common, &ModelFlags::default(), &a)?, Box::new(cpp_moment_cmd)),
        Command::Verify(a) => {
            let test = a.test;
            let name = format!("verify {}", test.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default());
            (resolve(&name, &a.common, &a.model, &a)?, Box::new(move |c: &RunConfig, o: &mut OutDir| verify_cmd(test, c, o)))
        }
    };
    validate(&cfg)?;
    let mut out = OutDir::create(&cfg.out_dir()?, &cfg)?;
    let result = job(&cfg, &mut out);
    let status = result.as_ref().map(|_| ()).map_err(|e| anyhow::anyhow!("{e:#}"));
    out.finish(&status)?;
    result
}

/// Checks that do not need the output directory.
fn validate(cfg: &RunConfig) -> Result<()> {
    let stochastic = !matches!(cfg.command.as_str(), "spectral" | "spine-quadrature" | "verify identities" | "verify trend");
    if stochastic {
        cfg.seed()?;
    }
    if let Some(r) = &cfg.run.reflection {
        reflection(r)?;
    }
    if !cfg.command.starts_with("cpp") && !matches!(cfg.command.as_str(), "verify trend" | "verify feller" | "verify mergers" | "verify cpp") {
        cfg.params()?;
    }
    Ok(())
}

fn reflection(name: &str) -> Result<Reflection> {
    match name {
        "skorokhod" => Ok(Reflection::Skorokhod),
        "fold" => Ok(Reflection::Fold),
        other => bail!("unknown reflection `{other}` (expected skorokhod or fold)"),
    }
}

fn basis(cfg: &RunConfig, modes: usize) -> Result<SpectralBasis> {
    Ok(build_basis(cfg.params()?, modes)?)
}

fn spectral(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let b = basis(cfg, cfg.run.modes.unwrap_or(64))?;
    let grid = cfg.run.grid.unwrap_or(2048).max(2);
    let l = b.length();
    let profile = b.variance_profile();
    let mut csv = Csv::new(&["x", "v1", "h", "h_tilde", "Pi", "Sigma_sq_cum"]);
    for i in 0..grid {
        let x = l * i as f64 / (grid - 1) as f64;
        let p = b.profile_at(x)?;
        csv.push_f64(&[x, p.v1, p.h, p.h_tilde, p.pi, profile.sigma_sq(x)]);
    }
    out.write_csv("spectral_profile.csv", &csv)?;
    let p = &b.params;
    let best = best_class_stats(p).ok();
    let summary = json!({
        "beta": p.beta,
        "L": p.length,
        "c": p.exponent,
        "N": p.population,
        "gammas": b.gammas,
        "sigma_sq_limit": p.exponent.map(sigma_sq_limit::<f64>),
        "A_N": best.map(|s| s.a_n),
        "J_A": best.map(|s| s.expected_count / p.population.unwrap_or(1) as f64),
        "Sigma_sq_L": profile.sigma_sq_total,
    });
    out.write_json("spectral_summary.json", &summary)?;
    println!("beta = {}, L = {}, Sigma(L)^2 = {}", p.beta, p.length, profile.sigma_sq_total);
    Ok(true)
}

#[derive(Serialize)]
struct ForestLine {
    replica: usize,
    id: usize,
    label: String,
    #[serde(flatten)]
    record: fwl_core::bbm::Record,
}

fn simulate(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let b = basis(cfg, 64)?;
    let r = &cfg.run;
    let seed = cfg.seed()?;
    let horizon = r.horizon.context("simulate needs --horizon")?;
    let record_at = r.record_at.clone().unwrap_or_else(|| vec![horizon]);
    let replicas = r.replicas.unwrap_or(1);
    let forest = r.forest.unwrap_or(false);
    let start = match (r.x, r.stable) {
        (Some(x), _) => Init::Single(x),
        (None, Some(m)) => Init::Stable(m),
        (None, None) => r.init.unwrap_or(Init::Single(1.0)),
    };
    let config = BbmConfig {
        dt: r.dt.unwrap_or(BbmConfig::default().dt),
        reflection: r.reflection.as_deref().map(reflection).transpose()?.unwrap_or_default(),
        population_cap: r.population_cap.unwrap_or(BbmConfig::default().population_cap),
        genealogy: forest,
        prune: false,
        ..BbmConfig::default()
    };
    let results = map_replicas(replicas, cfg.threads(), |i| -> Result<(Vec<Snapshot>, Vec<ForestLine>)> {
        let mut rng = stream(seed, tags::BBM, i as u64);
        let init = match start {
            Init::Stable(m) => init_stable(&b, m, &mut stream(seed, tags::INIT, i as u64))?,
            Init::Single(x) => init_single(&b, x)?,
        };
        let mut snaps = Vec::with_capacity(record_at.len());
        let sim = run_with(&b, config, &init, horizon, &record_at, &mut rng, |_, s: &Bbm| snaps.push(s.snapshot()))?;
        let lines = if forest {
            let f = sim.forest();
            (0..f.len())
                .map(|id| {
                    Ok(ForestLine {
                        replica: i,
                        id,
                        label: f.label(id)?,
                        record: *f.record(id)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok((snaps, lines))
    });
    let mut z = Csv::new(&["time", "replica", "Z"]);
    let mut y = Csv::new(&["time", "replica", "Y"]);
    let mut ndjson = String::new();
    for (i, res) in results.into_iter().enumerate() {
        let (snaps, lines) = res?;
        for s in snaps {
            z.push([fmt(s.time), i.to_string(), s.z.to_string()]);
            y.push([fmt(s.time), i.to_string(), fmt(s.y)]);
        }
        for l in lines {
            ndjson.push_str(&serde_json::to_string(&l)?);
            ndjson.push('\n');
        }
    }
    out.write_csv("population_z.csv", &z)?;
    out.write_csv("population_y.csv", &y)?;
    if forest {
        out.write("forest.ndjson", ndjson.as_bytes())?;
    }
    Ok(true)
}

fn spine_sample(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let b = basis(cfg, 64)?;
    let r = &cfg.run;
    let seed = cfg.seed()?;
    let k = r.k.context("spine-sample needs --k")?;
    let t = r.t.context("spine-sample needs --t")?;
    let x = r.x.unwrap_or(1.0);
    let n = r.samples.unwrap_or(1000);
    let sampler = SpineSampler::new(&b);
    const CHUNKS: usize = 64;
    let rows = map_replicas(CHUNKS, cfg.threads(), |c| -> Result<Vec<Vec<f64>>> {
        let m = n / CHUNKS + usize::from(c < n % CHUNKS);
        let mut rng = stream(seed, tags::SPINE, c as u64);
        (0..m)
            .map(|_| {
                let topo = sample_topology(k, t, &mut rng)?;
                let marked = sampler.run_marks(&topo, x, 1.0, &mut rng)?;
                let mut row = vec![k as f64, t];
                row.extend(&marked.topology.depths);
                row.push(marked.root);
                row.extend(&marked.branch_marks);
                row.extend(&marked.leaf_marks);
                row.push(log_weight_delta(&marked, &b));
                Ok(row)
            })
            .collect()
    });
    let mut cols = vec!["sample_id".to_string(), "k".into(), "t".into()];
    cols.extend((1..k).map(|i| format!("u_{i}")));
    cols.push("root".into());
    cols.extend((1..k).map(|i| format!("branch_{i}")));
    cols.extend((1..=k).map(|i| format!("leaf_{i}")));
    cols.push("log_delta".into());
    let mut csv = Csv::new(&cols);
    let mut id = 0usize;
    for chunk in rows {
        for row in chunk? {
            csv.push(std::iter::once(id.to_string()).chain(row.iter().map(|v| fmt(*v))));
            id += 1;
        }
    }
    out.write_csv("spine_samples.csv", &csv)?;
    Ok(true)
}

fn spine_quadrature(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let r = &cfg.run;
    let grid = QuadratureGrid {
        time_nodes: r.time_nodes.unwrap_or(QuadratureGrid::default().time_nodes),
        space_nodes: r.space_nodes.unwrap_or(QuadratureGrid::default().space_nodes),
        modes: r.modes.unwrap_or(QuadratureGrid::default().modes),
    };
    let b = basis(cfg, grid.modes)?;
    let k = r.k.context("spine-quadrature needs --k")?;
    let t = r.t.context("spine-quadrature needs --t")?;
    let x = r.x.unwrap_or(1.0);
    let g: Box<dyn Fn(f64) -> f64> = match r.g.as_deref().unwrap_or("one") {
        "one" => Box::new(|_| 1.0),
        "h" => Box::new(|y| b.h(y)),
        other => bail!("unknown leaf function `{other}` (expected one or h)"),
    };
    let v = biased_measure_quadrature(&b, k, t, x, &*g, grid)?;
    out.write_json("spine_quadrature.json", &v)?;
    println!("{}", serde_json::to_string(&v)?);
    Ok(true)
}

fn cpp_sample(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let r = &cfg.run;
    let seed = cfg.seed()?;
    let k = r.k.context("cpp-sample needs --k")?;
    let height = r.height.context("cpp-sample needs --T")?;
    let n = r.samples.unwrap_or(1000);
    let theta = match r.law.as_deref().unwrap_or("cpp") {
        "cpp" => false,
        "theta" => true,
        other => bail!("unknown law `{other}` (expected cpp or theta)"),
    };
    let rows = map_replicas(n, cfg.threads(), |i| -> Result<Vec<f64>> {
        let mut rng = stream(seed, tags::CPP, i as u64);
        let d = if theta {
            sample_h_matrix(k, 2.0 * height, 1.0, &mut rng)?.entries
        } else {
            sample_cpp_distances(k, height, &mut rng)?.distance_matrix()
        };
        Ok((0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).map(|(i, j)| d[i][j]).collect())
    });
    let mut cols = vec!["sample_id".to_string(), "k".into(), "T".into()];
    cols.extend((0..k).flat_map(|i| (i + 1..k).map(move |j| format!("d_{}_{}", i + 1, j + 1))));
    let mut csv = Csv::new(&cols);
    for (i, row) in rows.into_iter().enumerate() {
        csv.push([i.to_string(), k.to_string(), fmt(height)].into_iter().chain(row?.iter().map(|v| fmt(*v))));
    }
    out.write_csv("cpp_samples.csv", &csv)?;
    Ok(true)
}

fn cpp_moment_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let r = &cfg.run;
    let seed = cfg.seed()?;
    let k = r.k.context("cpp-moment needs --k")?;
    let height = r.height.context("cpp-moment needs --T")?;
    let n = r.samples.unwrap_or(100_000);
    let name = r.phi.clone().unwrap_or_else(|| "one".into());
    let all = functionals(height);
    let phi = all
        .iter()
        .find(|(nm, _)| *nm == name)
        .with_context(|| format!("unknown phi `{name}`; expected one of {:?}", all.iter().map(|p| p.0).collect::<Vec<_>>()))?;
    let formula: Estimate = cpp_moment(k, height, phi.1.as_ref(), MomentMode::Formula, n, &mut stream(seed, tags::CPP, 0))?;
    let mc: Estimate = cpp_moment(k, height, phi.1.as_ref(), MomentMode::MonteCarlo, n, &mut stream(seed, tags::CPP, 1))?;
    let v = json!({
        "k": k,
        "T": height,
        "phi_name": name,
        "formula": formula.mean,
        "formula_se": formula.se,
        "mc": mc.mean,
        "mc_se": mc.se,
        "se": (formula.se.powi(2) + mc.se.powi(2)).sqrt(),
    });
    out.write_json("cpp_moment.json", &v)?;
    println!("{v}");
    Ok(true)
}

fn verify_cmd(test: Test, cfg: &RunConfig, out: &mut OutDir) -> Result<bool> {
    let r = &cfg.run;
    let mc = || -> Result<McSpec> {
        Ok(McSpec {
            replicas: r.replicas.unwrap_or(10_000),
            seed: cfg.seed()?,
            threads: cfg.threads(),
            dt: r.dt.unwrap_or(0.1),
        })
    };
    let x = r.x.unwrap_or(1.0);
    let grid = QuadratureGrid::default();
    let result: VerifyOutput = match test {
        Test::Identities => verify::verify_identities(&basis(cfg, 64)?, r.modes.unwrap_or(20_000))?,
        Test::Trend => {
            let c = cfg.model.c.unwrap_or(0.5);
            let ns: Vec<u64> = (2..=8).map(|e| 10u64.pow(2 * e)).collect();
            let mut o = verify::verify_trend_monotone(c, &ns)?;
            o.push(verify::verify_trend_gate(c, 10u64.pow(16), 0.25)?);
            o
        }
        Test::ManyToFew => {
            verify::verify_many_to_few(&basis(cfg, 64)?, x, r.t.unwrap_or(2.0), mc()?, r.spine_samples.unwrap_or(10_000), grid)?
        }
        Test::Survival => {
            let m = mc()?;
            let stable = r.stable_replicas.unwrap_or(m.replicas);
            verify::verify_survival(&basis(cfg, 64)?, x, &t_grid(r)?, m, stable)?
        }
        Test::Yaglom => verify::verify_yaglom(&basis(cfg, 64)?, x, &t_grid(r)?, mc()?)?,
        Test::Feller => {
            let spec = verify::FellerSpec {
                n: cfg.model.n.unwrap_or(10_000),
                c: cfg.model.c.unwrap_or(0.5),
                z0: r.z0.unwrap_or(1.0),
                t: r.t.unwrap_or(1.0),
                lambdas: r.lambdas.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0]),
            };
            verify::verify_feller(&spec, mc()?)?
        }
        Test::Genealogy => {
            let m = mc()?;
            let ks = r.ks.clone().unwrap_or_else(|| vec![2, 3]);
            verify::verify_genealogy(&basis(cfg, 64)?, x, r.t.unwrap_or(100.0), &ks, m, r.samples.unwrap_or(100_000), 10_000)?
        }
        Test::Mergers => {
            let spec = verify::MergerSpec {
                lengths: r.lengths.clone().unwrap_or_else(|| vec![5.0, 10.0, 18.0]),
                horizon_factor: r.t.unwrap_or(3.0),
                pairs: r.pairs.unwrap_or(50),
                rung_replicas: Vec::new(),
            };
            verify::verify_merger_ladder(&spec, mc()?)?
        }
        Test::Moments => verify::verify_moments(
            &basis(cfg, 64)?,
            x,
            r.t.unwrap_or(20.0),
            r.k.unwrap_or(3),
            mc()?,
            r.spine_samples.unwrap_or(10_000),
            grid,
        )?,
        Test::Cpp => {
            let ks = r.ks.clone().unwrap_or_else(|| vec![2, 3, 4]);
            let n = r.samples.unwrap_or(100_000);
            verify::verify_cpp(r.height.unwrap_or(1.0), &ks, n, 10 * n, mc()?)?
        }
    };
    for rep in &result.reports {
        println!("{}", rep.line());
    }
    out.write_json("reports.json", &result.reports)?;
    for table in &result.raw {
        let mut csv = Csv::new(&table.columns);
        for row in &table.rows {
            csv.push_f64(row);
        }
        out.write_csv(&format!("{}.csv", table.name), &csv)?;
    }
    Ok(result.reports.iter().all(|r| r.verdict != Verdict::Fail))
}

fn t_grid(r: &crate::config::RunBlock) -> Result<Vec<f64>> {
    let g = r.t_grid.clone().unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
    if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
        bail!("t_grid must be non-empty and strictly increasing");
    }
    Ok(g)
}
