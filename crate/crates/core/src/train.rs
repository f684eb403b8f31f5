//! Staged training: train to a loss plateau, insert two layers before the
//! output layer, repeat until the target depth is reached.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::PatchSet;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{checkpoint_path, save_model, Network, StageRecord, Widths};
use crate::rng::RngState;

/// Stream ids below this value seed layer initialization; shuffles use
/// `SHUFFLE_STREAM + global epoch`.
const SHUFFLE_STREAM: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Cascade,
    OneShot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Stage ends when the epoch loss drops by less than this fraction.
    pub plateau_threshold: f64,
    pub insert_count: usize,
    pub target_depth: usize,
    pub batch_size: usize,
    pub max_epochs_per_stage: usize,
    /// Epochs run before the plateau rule is consulted (capped by the max).
    pub min_epochs_per_stage: usize,
    pub seed: u64,
    pub mode: TrainMode,
    /// Standard deviation of every freshly initialized layer.
    pub init_sigma: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0001,
            plateau_threshold: 0.03,
            insert_count: 2,
            target_depth: 19,
            batch_size: 64,
            max_epochs_per_stage: 100,
            min_epochs_per_stage: 1,
            seed: 0,
            mode: TrainMode::Cascade,
            init_sigma: crate::model::INIT_SIGMA,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.plateau_threshold > 0.0 && self.plateau_threshold < 1.0) {
            return bad(format!("plateau_threshold must be in (0, 1), got {}", self.plateau_threshold));
        }
        if self.target_depth < 3 || self.target_depth % 2 == 0 {
            return bad(format!("target_depth must be odd and >= 3, got {}", self.target_depth));
        }
        if self.insert_count == 0 || self.insert_count % 2 != 0 {
            return bad(format!("insert_count must be a positive even number, got {}", self.insert_count));
        }
        if (self.target_depth - 3) % self.insert_count != 0 {
            return bad(format!("target_depth {} unreachable in steps of {}", self.target_depth, self.insert_count));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.init_sigma > 0.0) || !self.init_sigma.is_finite() {
            return bad(format!("init_sigma must be positive, got {}", self.init_sigma));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Plateau,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub depth: usize,
    pub losses: Vec<f64>,
    pub epochs: usize,
    pub terminated_by: Termination,
}

impl StageLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// One SGD update, as seen by an observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub stage: usize,
    pub epoch: usize,
    pub step: usize,
    pub learning_rate: f32,
    pub batch_loss: f64,
}

/// Hooks into a training run. Errors from hooks abort the run.
pub trait TrainObserver {
    fn on_step(&mut self, _step: &StepRecord) {}

    fn on_epoch(&mut self, _stage: usize, _depth: usize, _epoch: usize, _mean_loss: f64, _wall_seconds: f64) -> Result<()> {
        Ok(())
    }

    fn on_stage_end(&mut self, _stage: usize, _net: &Network, _log: &StageLog) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Writes the per-epoch CSV log and a model checkpoint at each stage end.
pub struct RunRecorder {
    model_base: PathBuf,
    suffix: fn(usize, &Network) -> String,
    log: fs::File,
    started: Instant,
    pub checkpoints: Vec<PathBuf>,
}

impl RunRecorder {
    /// Checkpoints go to `model_base` with a `-d{depth}` suffix.
    pub fn new(model_base: &Path, log_path: &Path) -> Result<Self> {
        Self::with_suffix(model_base, log_path, |_, net| format!("-d{}", net.depth()))
    }

    pub fn with_suffix(model_base: &Path, log_path: &Path, suffix: fn(usize, &Network) -> String) -> Result<Self> {
        if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(Error::at(dir))?;
        }
        let fresh = !log_path.exists();
        let mut log = fs::OpenOptions::new().create(true).append(true).open(log_path).map_err(Error::at(log_path))?;
        if fresh {
            writeln!(log, "stage_index,depth,epoch,mean_loss,wall_seconds")?;
        }
        Ok(RunRecorder { model_base: model_base.to_path_buf(), suffix, log, started: Instant::now(), checkpoints: Vec::new() })
    }
}

impl TrainObserver for RunRecorder {
    fn on_epoch(&mut self, stage: usize, depth: usize, epoch: usize, mean_loss: f64, _wall: f64) -> Result<()> {
        writeln!(self.log, "{stage},{depth},{epoch},{mean_loss:.9e},{:.3}", self.started.elapsed().as_secs_f64())?;
        Ok(())
    }

    fn on_stage_end(&mut self, stage: usize, net: &Network, _log: &StageLog) -> Result<()> {
        let path = checkpoint_path(&self.model_base, &(self.suffix)(stage, net));
        save_model(net, &path)?;
        self.checkpoints.push(path);
        Ok(())
    }
}

/// True when the loss fell by less than `threshold` of `prev_loss`,
/// including any increase.
pub fn plateau_reached(prev_loss: f64, curr_loss: f64, threshold: f64) -> Result<bool> {
    if !(prev_loss > 0.0) {
        return Err(Error::InvalidArgument(format!("previous loss must be positive, got {prev_loss}")));
    }
    Ok((prev_loss - curr_loss) / prev_loss < threshold)
}

/// Running position of a multi-stage run, used to pick shuffle streams and
/// label observer events.
#[derive(Clone, Copy, Debug, Default)]
pub struct Progress {
    pub stage: usize,
    pub global_epoch: u64,
}

/// One pass over `patches` in a shuffled order with mini-batch SGD at
/// `cfg.learning_rate`. Returns the mean per-element loss of the epoch,
/// each batch measured before its update.
pub fn run_epoch(net: &mut Network, patches: &PatchSet, cfg: &TrainConfig, epoch: u64) -> Result<f64> {
    let mut progress = Progress { stage: 0, global_epoch: epoch };
    run_epoch_observed(net, patches, cfg, &mut progress, 0, &mut NoObserver)
}

fn run_epoch_observed(
    net: &mut Network,
    patches: &PatchSet,
    cfg: &TrainConfig,
    progress: &mut Progress,
    epoch_in_stage: usize,
    observer: &mut dyn TrainObserver,
) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty patch set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let (oh, ow) = net.output_size(patches.lr_size(), patches.lr_size())?;
    crate::error::ensure_eq("run_epoch", "network output", oh, "HR patch size", patches.hr_size())?;
    debug_assert_eq!(oh, ow);

    let mut order: Vec<usize> = (0..patches.len()).collect();
    RngState::stream(cfg.seed, SHUFFLE_STREAM + progress.global_epoch).shuffle(&mut order);
    let lr = cfg.learning_rate as f32;
    let mut sse = 0.0;
    for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let (x, y) = patches.batch(chunk)?;
        let (grads, batch_sse) = net.batch_gradients(&x, &y, cfg.exec)?;
        if lr != 0.0 {
            net.apply_gradients(&grads, lr);
        }
        sse += batch_sse;
        observer.on_step(&StepRecord {
            stage: progress.stage,
            epoch: epoch_in_stage,
            step,
            learning_rate: lr,
            batch_loss: batch_sse / y.len() as f64,
        });
    }
    progress.global_epoch += 1;
    Ok(sse / (patches.len() * patches.hr_size() * patches.hr_size()) as f64)
}

/// Trains one stage until the plateau rule fires or the epoch cap is hit.
pub fn train_stage(
    net: &mut Network,
    patches: &PatchSet,
    cfg: &TrainConfig,
    progress: &mut Progress,
    observer: &mut dyn TrainObserver,
) -> Result<StageLog> {
    let mut losses: Vec<f64> = Vec::new();
    let mut terminated_by = Termination::MaxEpochs;
    for epoch in 0..cfg.max_epochs_per_stage {
        let started = Instant::now();
        let loss = run_epoch_observed(net, patches, cfg, progress, epoch, observer)?;
        observer.on_epoch(progress.stage, net.depth(), epoch, loss, started.elapsed().as_secs_f64())?;
        log::debug!("stage {} depth {} epoch {epoch}: loss {loss:.6e}", progress.stage, net.depth());
        let plateau = match losses.last() {
            _ if epoch + 1 < cfg.min_epochs_per_stage => false,
            Some(&prev) if prev > 0.0 => plateau_reached(prev, loss, cfg.plateau_threshold)?,
            Some(_) => true,
            None => false,
        };
        losses.push(loss);
        if plateau {
            terminated_by = Termination::Plateau;
            break;
        }
    }
    let log = StageLog { depth: net.depth(), epochs: losses.len(), losses, terminated_by };
    net.push_history(StageRecord {
        depth_after: net.depth(),
        epochs_run: log.epochs,
        final_loss: log.final_loss().unwrap_or(f64::NAN),
    });
    observer.on_stage_end(progress.stage, net, &log)?;
    progress.stage += 1;
    Ok(log)
}

/// Cascade training from the standard three-layer base network.
pub fn cascade_train(patches: &PatchSet, cfg: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<(Network, Vec<StageLog>)> {
    if cfg.mode != TrainMode::Cascade {
        return Err(Error::InvalidArgument("cascade_train requires mode = cascade".into()));
    }
    let base = Network::with_depth_init(3, Widths::STANDARD, cfg.init_sigma, &mut RngState::stream(cfg.seed, 0))?;
    cascade_train_from(base, patches, cfg, observer)
}

/// Cascade training starting from an arbitrary family member.
pub fn cascade_train_from(
    mut net: Network,
    patches: &PatchSet,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(Network, Vec<StageLog>)> {
    cfg.validate()?;
    if net.depth() > cfg.target_depth {
        return Err(Error::InvalidArgument(format!("network depth {} exceeds target {}", net.depth(), cfg.target_depth)));
    }
    let mut progress = Progress::default();
    let mut logs = Vec::new();
    loop {
        logs.push(train_stage(&mut net, patches, cfg, &mut progress, observer)?);
        if net.depth() >= cfg.target_depth {
            break;
        }
        let mut rng = RngState::stream(cfg.seed, progress.stage as u64);
        net = net.insert_layers_init(cfg.insert_count, cfg.init_sigma, &mut rng)?;
    }
    Ok((net, logs))
}

/// Trains a full-depth network from scratch in a single stage.
pub fn one_shot_train(
    patches: &PatchSet,
    cfg: &TrainConfig,
    depth: usize,
    observer: &mut dyn TrainObserver,
) -> Result<(Network, StageLog)> {
    if cfg.mode != TrainMode::OneShot {
        return Err(Error::InvalidArgument("one_shot_train requires mode = one_shot".into()));
    }
    let mut net = Network::with_depth_init(depth, Widths::STANDARD, cfg.init_sigma, &mut RngState::stream(cfg.seed, 0))?;
    let mut progress = Progress::default();
    let log = train_stage(&mut net, patches, cfg, &mut progress, observer)?;
    Ok((net, log))
}
