use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctsr::train::TrainConfig;
use ctsr::trim::{TrimMode, TrimPlan};
use serde::{Deserialize, Serialize};

/// How `trim` produces its slim network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimStrategy {
    OneShotIndependent,
    OneShotGreedy,
    Cascade,
    /// Build a slim base and cascade-train it; needs no input model.
    TrimTrain,
}

impl TrimStrategy {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "one_shot_independent" | "one_shot" => TrimStrategy::OneShotIndependent,
            "one_shot_greedy" => TrimStrategy::OneShotGreedy,
            "cascade" => TrimStrategy::Cascade,
            "trim_train" => TrimStrategy::TrimTrain,
            other => bail!("unknown trim mode {other:?} (one_shot_independent, one_shot_greedy, cascade, trim_train)"),
        })
    }

    fn plan_mode(self) -> TrimMode {
        match self {
            TrimStrategy::OneShotIndependent => TrimMode::OneShotIndependent,
            TrimStrategy::OneShotGreedy => TrimMode::OneShotGreedy,
            TrimStrategy::Cascade | TrimStrategy::TrimTrain => TrimMode::Cascade,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrimSettings {
    pub mode: TrimStrategy,
    /// Uniform trim rate for every layer but the output layer.
    pub rate: f64,
    /// Per-layer rates; overrides `rate` when present.
    pub rates: Option<Vec<f64>>,
    pub layers_per_stage: usize,
}

impl Default for TrimSettings {
    fn default() -> Self {
        TrimSettings { mode: TrimStrategy::Cascade, rate: 0.5, rates: None, layers_per_stage: 2 }
    }
}

impl TrimSettings {
    pub fn plan(&self, depth: usize, seed: u64) -> TrimPlan {
        let mut plan = TrimPlan::uniform(depth, self.rate, self.mode.plan_mode(), seed);
        if let Some(rates) = &self.rates {
            plan.rates = rates.clone();
        }
        plan.layers_per_stage = self.layers_per_stage;
        plan
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset manifest (image list, scale, patch geometry).
    pub manifest: Option<PathBuf>,
    /// Patch cache written by `prepare` and read by `train`/`trim`.
    pub patches: Option<PathBuf>,
    /// Input model for `trim`, `eval` and `infer`.
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Directory for CSV/JSON logs; defaults to the output's directory.
    pub log_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub trim: TrimSettings,
}

impl RunConfig {
    /// Parses a config file. Relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.patches, &mut cfg.model, &mut cfg.out, &mut cfg.log_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn log_dir(&self) -> PathBuf {
        self.log_dir
            .clone()
            .or_else(|| self.out.as_ref().and_then(|o| o.parent()).map(Path::to_path_buf))
            .unwrap_or_default()
    }
}

/// Fails with the offending path unless it exists.
pub fn require_file(what: &str, path: Option<&PathBuf>) -> Result<PathBuf> {
    let Some(path) = path else {
        bail!("no {what} given (set it in the config or on the command line)");
    };
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(path.clone())
}

pub fn require_out(path: Option<&PathBuf>) -> Result<PathBuf> {
    path.cloned().context("no output path given (use --out or \"out\" in the config)")
}
