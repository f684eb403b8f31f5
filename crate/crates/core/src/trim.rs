//! Structured filter trimming.
//!
//! Removing output filter `j` of layer `i` deletes its kernel slab and bias
//! and the matching input-channel slice of layer `i + 1`, so both layers
//! get cheaper. Filters are ranked by the squared sum of their weights,
//! scored either on the original kernels (independent) or on kernels
//! already thinned by trimming the previous layer (greedy). Cascade
//! trimming instead removes random halves two layers at a time, from the
//! output end toward the input, fine-tuning the whole network in between.

use serde::{Deserialize, Serialize};

use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::model::{Network, Widths};
use crate::rng::RngState;
use crate::train::{cascade_train_from, train_stage, Progress, StageLog, TrainConfig, TrainObserver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    OneShotIndependent,
    OneShotGreedy,
    Cascade,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    Independent,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimPlan {
    /// Fraction of filters removed from each layer; the output layer's is 0.
    pub rates: Vec<f64>,
    pub mode: TrimMode,
    pub layers_per_stage: usize,
    pub seed: u64,
}

impl TrimPlan {
    /// The same rate for every layer but the output layer.
    pub fn uniform(depth: usize, rate: f64, mode: TrimMode, seed: u64) -> Self {
        let mut rates = vec![rate; depth];
        if let Some(last) = rates.last_mut() {
            *last = 0.0;
        }
        TrimPlan { rates, mode, layers_per_stage: 2, seed }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        crate::error::ensure_eq("TrimPlan", "rates.len", self.rates.len(), "network depth", depth)?;
        if let Some(r) = self.rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!("trim rate {r} outside [0, 1)")));
        }
        if self.rates.last().is_some_and(|&r| r != 0.0) {
            return Err(Error::InvalidArgument("the output layer cannot be trimmed".into()));
        }
        if self.layers_per_stage == 0 {
            return Err(Error::InvalidArgument("layers_per_stage must be positive".into()));
        }
        Ok(())
    }

    fn count(&self, layer: usize, filters: usize) -> usize {
        (self.rates[layer] * filters as f64).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimStageLog {
    pub stage: usize,
    pub trimmed_layers: Vec<usize>,
    pub removed_filters: Vec<Vec<usize>>,
    pub param_count: usize,
    pub finetune_losses: Vec<f64>,
}

/// Squared sum of one filter's weights.
pub fn filter_importance(weights: &[f32]) -> f64 {
    weights.iter().map(|&w| (w as f64) * (w as f64)).sum()
}

/// Importance of every filter of `layer` over the network's current kernels.
pub fn importance_scores(net: &Network, layer: usize) -> Result<Vec<f64>> {
    if layer >= net.depth() {
        return Err(Error::InvalidArgument(format!("layer {layer} out of range for depth {}", net.depth())));
    }
    let k = &net.layer(layer).kernel;
    Ok((0..k.out_filters()).map(|j| filter_importance(k.filter(j))).collect())
}

/// Scores for `layer`: independent mode reads `original`, greedy mode reads
/// `current`, whose kernels may have lost input slices to upstream trims.
pub fn importance_scores_mode(current: &Network, original: &Network, layer: usize, mode: ScoreMode) -> Result<Vec<f64>> {
    match mode {
        ScoreMode::Independent => importance_scores(original, layer),
        ScoreMode::Greedy => importance_scores(current, layer),
    }
}

/// The `count` lowest-scoring filter indices, ascending; ties go to the
/// lower index.
pub fn lowest_scoring(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut picked = idx[..count.min(scores.len())].to_vec();
    picked.sort_unstable();
    picked
}

/// Removes output filters `indices` of `layer` and the matching input
/// slices of the following layer.
pub fn trim_filters(net: &Network, layer: usize, indices: &[usize]) -> Result<Network> {
    let depth = net.depth();
    if layer + 1 >= depth {
        return Err(Error::InvalidArgument(format!("layer {layer} cannot be trimmed in a {depth}-layer network")));
    }
    if indices.is_empty() {
        return Ok(net.clone());
    }
    let n = net.layer(layer).spec.out_filters;
    let mut drop = indices.to_vec();
    drop.sort_unstable();
    drop.dedup();
    if drop.len() != indices.len() {
        return Err(Error::InvalidArgument("duplicate filter index".into()));
    }
    if let Some(&bad) = drop.iter().find(|&&j| j >= n) {
        return Err(Error::InvalidArgument(format!("filter {bad} out of range for layer {layer} with {n} filters")));
    }
    if drop.len() >= n {
        return Err(Error::InvalidArgument(format!("cannot remove all {n} filters of layer {layer}")));
    }

    let mut out = net.clone();
    let layers = out.layers_mut();
    let cur = &mut layers[layer];
    cur.kernel = cur.kernel.without_filters(&drop);
    cur.bias = cur.bias.iter().enumerate().filter(|(j, _)| drop.binary_search(j).is_err()).map(|(_, &b)| b).collect();
    cur.spec.out_filters -= drop.len();
    let next = &mut layers[layer + 1];
    next.kernel = next.kernel.without_inputs(&drop);
    next.spec.in_channels -= drop.len();
    out.validate()?;
    Ok(out)
}

/// Layer groups of each cascade stage, deepest first, e.g. for 13 layers
/// `[10, 11], [8, 9], ..., [0, 1]`. The output layer is never included.
pub fn cascade_schedule(depth: usize, layers_per_stage: usize) -> Vec<Vec<usize>> {
    let trimmable: Vec<usize> = (0..depth.saturating_sub(1)).collect();
    trimmable.rchunks(layers_per_stage.max(1)).map(|c| c.to_vec()).collect()
}

/// Trims every layer at once by importance score, then fine-tunes.
/// Fine-tuning is skipped when nothing was removed.
pub fn one_shot_trim(
    net: &Network,
    plan: &TrimPlan,
    patches: &PatchSet,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(Network, TrimStageLog)> {
    plan.validate(net.depth())?;
    let mode = match plan.mode {
        TrimMode::OneShotIndependent => ScoreMode::Independent,
        TrimMode::OneShotGreedy => ScoreMode::Greedy,
        TrimMode::Cascade => return Err(Error::InvalidArgument("one_shot_trim needs a one-shot plan".into())),
    };
    let mut current = net.clone();
    let mut trimmed_layers = Vec::new();
    let mut removed_filters = Vec::new();
    for layer in 0..net.depth() - 1 {
        let count = plan.count(layer, net.layer(layer).spec.out_filters);
        let scores = importance_scores_mode(&current, net, layer, mode)?;
        let drop = lowest_scoring(&scores, count);
        current = trim_filters(&current, layer, &drop)?;
        if !drop.is_empty() {
            trimmed_layers.push(layer);
            removed_filters.push(drop);
        }
    }
    let mut finetune_losses = Vec::new();
    if !trimmed_layers.is_empty() {
        let log = train_stage(&mut current, patches, cfg, &mut Progress::default(), observer)?;
        finetune_losses = log.losses;
    }
    let param_count = current.param_count();
    Ok((current, TrimStageLog { stage: 1, trimmed_layers, removed_filters, param_count, finetune_losses }))
}

/// Removes randomly chosen filters from the layers of one cascade stage.
pub fn cascade_trim_stage(net: &Network, plan: &TrimPlan, layers: &[usize], rng: &mut RngState) -> Result<(Network, Vec<Vec<usize>>)> {
    let mut current = net.clone();
    let mut removed = Vec::with_capacity(layers.len());
    for &layer in layers {
        let n = current.layer(layer).spec.out_filters;
        let drop = rng.choose_distinct(n, plan.count(layer, n));
        current = trim_filters(&current, layer, &drop)?;
        removed.push(drop);
    }
    Ok((current, removed))
}

/// Cascade trimming with whole-network fine-tuning after every stage.
pub fn cascade_trim(
    net: &Network,
    patches: &PatchSet,
    cfg: &TrainConfig,
    plan: &TrimPlan,
    observer: &mut dyn TrainObserver,
) -> Result<(Network, Vec<TrimStageLog>)> {
    plan.validate(net.depth())?;
    if plan.mode != TrimMode::Cascade {
        return Err(Error::InvalidArgument("cascade_trim needs a cascade plan".into()));
    }
    let mut current = net.clone();
    let mut logs = Vec::new();
    let mut progress = Progress::default();
    for (stage, layers) in cascade_schedule(net.depth(), plan.layers_per_stage).into_iter().enumerate() {
        let mut rng = RngState::stream(plan.seed, stage as u64);
        let (trimmed, removed) = cascade_trim_stage(&current, plan, &layers, &mut rng)?;
        current = trimmed;
        let log: StageLog = train_stage(&mut current, patches, cfg, &mut progress, observer)?;
        logs.push(TrimStageLog {
            stage: stage + 1,
            trimmed_layers: layers,
            removed_filters: removed,
            param_count: current.param_count(),
            finetune_losses: log.losses,
        });
    }
    Ok((current, logs))
}

/// Builds the slim three-layer base (widths reduced by the plan's first two
/// rates) and cascade-trains it to `cfg.target_depth` with slim insertions.
pub fn trim_train(
    patches: &PatchSet,
    cfg: &TrainConfig,
    plan: &TrimPlan,
    observer: &mut dyn TrainObserver,
) -> Result<(Network, Vec<StageLog>)> {
    if plan.rates.len() < 2 || plan.rates.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::InvalidArgument("trim_train needs valid rates for the first two layers".into()));
    }
    let keep = |n: usize, r: f64| n - (r * n as f64).floor() as usize;
    let widths = Widths { first: keep(Widths::STANDARD.first, plan.rates[0]), hidden: keep(Widths::STANDARD.hidden, plan.rates[1]) };
    let base = Network::with_depth_init(3, widths, cfg.init_sigma, &mut RngState::stream(cfg.seed, 0))?;
    cascade_train_from(base, patches, cfg, observer)
}
