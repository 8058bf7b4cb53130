//! Run configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use fwl_core::spectral::{params_for_population, ModelParams, DEFAULT_LOGLOG_COEFF};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub beta: Option<f64>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub c: Option<f64>,
    pub loglog_coeff: Option<f64>,
}

/// Every run-level key any subcommand accepts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    /// Worker count; not written to the manifest.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub record_at: Option<Vec<f64>>,
    /// `{"single": x}` or `{"stable": M}`; `x` and `stable` override it.
    pub init: Option<Init>,
    pub x: Option<f64>,
    pub stable: Option<usize>,
    pub reflection: Option<String>,
    pub population_cap: Option<usize>,
    pub forest: Option<bool>,
    pub grid: Option<usize>,
    pub modes: Option<usize>,
    pub k: Option<usize>,
    pub t: Option<f64>,
    pub samples: Option<usize>,
    pub g: Option<String>,
    pub time_nodes: Option<usize>,
    pub space_nodes: Option<usize>,
    #[serde(rename = "T")]
    pub height: Option<f64>,
    pub law: Option<String>,
    pub phi: Option<String>,
    pub t_grid: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub z0: Option<f64>,
    pub ks: Option<Vec<usize>>,
    pub lengths: Option<Vec<f64>>,
    pub pairs: Option<usize>,
    pub spine_samples: Option<usize>,
    pub stable_replicas: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Init {
    Single(f64),
    Stable(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// Not written to the manifest.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelBlock,
    pub run: RunBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelFlags {
    /// Drift β ∈ [0, 1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Killing boundary L ≥ π/2.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub length: Option<f64>,
    /// Population scale; requires --c.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub loglog_coeff: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: FWL_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

fn overlay(base: &mut Value, top: Value) {
    if let (Value::Object(b), Value::Object(t)) = (base, top) {
        for (k, v) in t {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
}

/// Reads `common.config` (if any) and overlays the non-empty flags.
pub fn resolve(command: &str, common: &CommonFlags, model: &ModelFlags, run: impl Serialize) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load(path)?,
        None => RunConfig::default(),
    };
    if !cfg.command.is_empty() && cfg.command != command {
        bail!("config file is for `{}`, not `{command}`", cfg.command);
    }
    cfg.command = command.to_string();
    let mut m = serde_json::to_value(&cfg.model)?;
    overlay(&mut m, serde_json::to_value(model)?);
    cfg.model = serde_json::from_value(m)?;
    let threads = cfg.run.threads;
    let mut r = serde_json::to_value(&cfg.run)?;
    overlay(&mut r, serde_json::to_value(run)?);
    overlay(&mut r, serde_json::json!({ "seed": common.seed }));
    cfg.run = serde_json::from_value(r).context("invalid run flags")?;
    cfg.run.threads = common.threads.or(threads);
    if common.out.is_some() {
        cfg.output.dir = common.out.clone();
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunConfig {
    /// Model parameters from exactly one of `beta`, `L`, or `N` with `c`.
    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let given = [m.beta.is_some(), m.length.is_some(), m.n.is_some()].iter().filter(|&&b| b).count();
        if given > 1 {
            bail!("conflicting model block: give exactly one of beta, L, or N (with c)");
        }
        if m.c.is_some() && m.n.is_none() {
            bail!("c is only meaningful together with N");
        }
        let p = if let Some(beta) = m.beta {
            ModelParams::from_drift(beta)?
        } else if let Some(l) = m.length {
            ModelParams::from_length(l)?
        } else if let Some(n) = m.n {
            let c = m.c.context("N requires c")?;
            let k = m.loglog_coeff.unwrap_or(DEFAULT_LOGLOG_COEFF);
            if k == DEFAULT_LOGLOG_COEFF {
                params_for_population(n, c)?
            } else {
                ModelParams::for_population(n, c, k)?
            }
        } else {
            bail!("missing model block: give one of beta, L, or N with c");
        };
        Ok(p)
    }

    pub fn seed(&self) -> Result<u64> {
        self.run.seed.with_context(|| format!("missing seed: `{}` is stochastic, pass --seed", self.command))
    }

    pub fn threads(&self) -> usize {
        self.run.threads.unwrap_or_else(fwl_core::parallel::default_threads).max(1)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.output.dir.clone().context("missing output directory: pass --out")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(model: ModelFlags) -> RunConfig {
        resolve("simulate", &CommonFlags::default(), &model, serde_json::json!({})).unwrap()
    }

    #[test]
    fn conflicting_model_is_rejected() {
        let c = cfg(ModelFlags { beta: Some(0.5), n: Some(10_000), c: Some(0.5), ..Default::default() });
        let e = c.params().unwrap_err().to_string();
        assert!(e.contains("conflicting"), "{e}");
    }

    #[test]
    fn population_below_threshold_names_it() {
        let c = cfg(ModelFlags { n: Some(3), c: Some(0.5), ..Default::default() });
        let e = c.params().unwrap_err().to_string();
        assert!(e.contains("N_0 = 4"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"run": {"sede": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("sede"));
        let ok: RunConfig = serde_json::from_str(r#"{"model": {"beta": 0.5}, "run": {"seed": 3, "threads": 2}}"#).unwrap();
        assert_eq!(ok.run.threads, Some(2));
        assert!(!serde_json::to_string(&ok).unwrap().contains("threads"));
    }

    #[test]
    fn init_block_parses() {
        let c: RunConfig = serde_json::from_str(r#"{"run": {"init": {"stable": 50}}}"#).unwrap();
        assert_eq!(c.run.init, Some(Init::Stable(50)));
        assert!(serde_json::from_str::<RunConfig>(r#"{"run": {"init": {"both": 1}}}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"model": {"beta": 0.3}, "run": {"seed": 1, "horizon": 4.0}}"#).unwrap();
        let common = CommonFlags { config: Some(path), seed: Some(9), ..Default::default() };
        let c = resolve("simulate", &common, &ModelFlags::default(), serde_json::json!({"horizon": 10.0, "dt": null})).unwrap();
        assert_eq!(c.model.beta, Some(0.3));
        assert_eq!(c.run.seed, Some(9));
        assert_eq!(c.run.horizon, Some(10.0));
        assert!(c.seed().is_ok());
    }
}
