//! `ctsr`: prepare patches, train, trim, evaluate and run super-resolution
//! networks from a JSON run config.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ctsr::data::{benchmark, bicubic_resize, infer_image, load_image, save_image, DatasetManifest, PatchSet, Role};
use ctsr::model::{load_model, save_model};
use ctsr::train::{cascade_train, one_shot_train, NoObserver, RunRecorder, TrainMode};
use ctsr::trim::{cascade_trim, one_shot_trim, trim_train};
use ctsr::Exec;

use config::{require_file, require_out, RunConfig, TrimStrategy};

#[derive(Parser, Debug)]
#[command(name = "ctsr", version, about = "Cascade-trained super-resolution networks")]
struct Cli {
    /// JSON run config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input model file
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output file (patch cache, model, report stem or image)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training mode (cascade, one_shot) or trim mode
    /// (one_shot_independent, one_shot_greedy, cascade, trim_train)
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Target depth for training
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Upscaling factor
    #[arg(long, global = true)]
    scale: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cut LR/HR training patches from the manifest into a cache file
    Prepare,
    /// Train a network, writing a checkpoint per stage
    Train,
    /// Trim a trained network (or trim-then-train from scratch)
    Trim,
    /// Score a model, or the bicubic baseline, on the manifest's test images
    Eval {
        #[arg(long)]
        baseline: bool,
    },
    /// Super-resolve one PGM image
    Infer {
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Reads `CT_THREADS`; one thread means the sequential path.
fn exec_from_env() -> Result<Exec> {
    match std::env::var("CT_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("CT_THREADS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("CT_THREADS must be a positive integer, got 0");
            }
            ctsr::exec::init_threads(n);
            Ok(if n == 1 { Exec::Sequential } else { Exec::Parallel })
        }
        Err(_) => Ok(Exec::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = exec_from_env()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(depth) = cli.depth {
        cfg.train.target_depth = depth;
    }
    if cli.model.is_some() {
        cfg.model = cli.model.clone();
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    cfg.train.exec = exec;
    match cli.command {
        Command::Prepare => prepare(&cfg, cli.scale, exec),
        Command::Train => {
            if let Some(mode) = &cli.mode {
                cfg.train.mode = match mode.as_str() {
                    "cascade" => TrainMode::Cascade,
                    "one_shot" => TrainMode::OneShot,
                    other => bail!("unknown training mode {other:?} (cascade, one_shot)"),
                };
            }
            train(&cfg, exec)
        }
        Command::Trim => {
            if let Some(mode) = &cli.mode {
                cfg.trim.mode = TrimStrategy::parse(mode)?;
            }
            trim(&cfg, exec)
        }
        Command::Eval { baseline } => eval(&cfg, cli.scale, baseline, exec),
        Command::Infer { input } => infer(&cfg, &input, cli.scale),
    }
}

fn load_manifest(cfg: &RunConfig, scale: Option<u32>) -> Result<DatasetManifest> {
    let path = require_file("manifest", cfg.manifest.as_ref())?;
    let mut manifest = DatasetManifest::load(&path).with_context(|| format!("loading manifest {}", path.display()))?;
    if let Some(s) = scale {
        manifest.scale = s;
    }
    manifest.validate()?;
    Ok(manifest)
}

fn require_images(manifest: &DatasetManifest, role: Role) -> Result<()> {
    let missing: Vec<String> =
        manifest.missing().into_iter().filter(|p| manifest.paths(role).any(|q| q == *p)).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        bail!("missing image file(s): {}", missing.join(", "));
    }
    Ok(())
}

fn prepare(cfg: &RunConfig, scale: Option<u32>, exec: Exec) -> Result<()> {
    let manifest = load_manifest(cfg, scale)?;
    let out = cfg.out.clone().or_else(|| cfg.patches.clone()).context("no patch cache path given (use --out or \"patches\")")?;
    require_images(&manifest, Role::Train)?;
    let (set, warnings) = PatchSet::from_manifest(&manifest, Role::Train, exec)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    set.save(&out)?;
    println!("{} patch pairs written to {}", set.len(), out.display());
    Ok(())
}

/// The patch cache when one exists, otherwise patches cut from the manifest.
fn training_patches(cfg: &RunConfig, exec: Exec) -> Result<PatchSet> {
    if let Some(path) = cfg.patches.as_ref().filter(|p| p.is_file()) {
        return PatchSet::load(path).with_context(|| format!("loading patch cache {}", path.display()));
    }
    if cfg.manifest.is_none() {
        match &cfg.patches {
            Some(p) => bail!("patch cache not found: {}", p.display()),
            None => bail!("no training data: set \"patches\" or \"manifest\" in the config"),
        }
    }
    let manifest = load_manifest(cfg, None)?;
    require_images(&manifest, Role::Train)?;
    let (set, warnings) = PatchSet::from_manifest(&manifest, Role::Train, exec)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(set)
}

fn train(cfg: &RunConfig, exec: Exec) -> Result<()> {
    cfg.train.validate()?;
    let out = require_out(cfg.out.as_ref())?;
    let patches = training_patches(cfg, exec)?;
    let log_path = cfg.log_dir().join("train-log.csv");
    let mut recorder = RunRecorder::new(&out, &log_path)?;
    let net = match cfg.train.mode {
        TrainMode::Cascade => cascade_train(&patches, &cfg.train, &mut recorder)?.0,
        TrainMode::OneShot => one_shot_train(&patches, &cfg.train, cfg.train.target_depth, &mut recorder)?.0,
    };
    save_model(&net, &out)?;
    for c in &recorder.checkpoints {
        println!("checkpoint {}", c.display());
    }
    println!("depth {} param_count {} written to {}", net.depth(), net.param_count(), out.display());
    Ok(())
}

fn trim(cfg: &RunConfig, exec: Exec) -> Result<()> {
    cfg.train.validate()?;
    let out = require_out(cfg.out.as_ref())?;
    let log_path = cfg.log_dir().join("trim-log.json");
    let parent = match cfg.trim.mode {
        TrimStrategy::TrimTrain => None,
        _ => {
            let path = require_file("model", cfg.model.as_ref())?;
            Some(load_model(&path).with_context(|| format!("loading model {}", path.display()))?)
        }
    };
    let depth = parent.as_ref().map_or(cfg.train.target_depth, |n| n.depth());
    let plan = cfg.trim.plan(depth, cfg.train.seed);
    plan.validate(depth)?;
    let patches = training_patches(cfg, exec)?;
    let (net, log_json) = match (cfg.trim.mode, parent) {
        (TrimStrategy::TrimTrain, _) => {
            let csv = cfg.log_dir().join("train-log.csv");
            let mut recorder = RunRecorder::new(&out, &csv)?;
            let (net, logs) = trim_train(&patches, &cfg.train, &plan, &mut recorder)?;
            (net, serde_json::to_string_pretty(&logs)?)
        }
        (TrimStrategy::Cascade, Some(parent)) => {
            let csv = cfg.log_dir().join("trim-finetune-log.csv");
            let mut recorder = RunRecorder::with_suffix(&out, &csv, |stage, _| format!("-trimS{}", stage + 1))?;
            let (net, logs) = cascade_trim(&parent, &patches, &cfg.train, &plan, &mut recorder)?;
            for c in &recorder.checkpoints {
                println!("checkpoint {}", c.display());
            }
            (net, serde_json::to_string_pretty(&logs)?)
        }
        (_, Some(parent)) => {
            let (net, log) = one_shot_trim(&parent, &plan, &patches, &cfg.train, &mut NoObserver)?;
            (net, serde_json::to_string_pretty(&[log])?)
        }
        (_, None) => unreachable!("model loaded for every mode but trim_train"),
    };
    save_model(&net, &out)?;
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&log_path, log_json + "\n").with_context(|| format!("writing {}", log_path.display()))?;
    println!("depth {} param_count {} written to {}", net.depth(), net.param_count(), out.display());
    Ok(())
}

fn eval(cfg: &RunConfig, scale: Option<u32>, baseline: bool, exec: Exec) -> Result<()> {
    let manifest = load_manifest(cfg, scale)?;
    let net = if baseline {
        None
    } else {
        let path = require_file("model", cfg.model.as_ref())?;
        Some(load_model(&path).with_context(|| format!("loading model {}", path.display()))?)
    };
    let stem = require_out(cfg.out.as_ref())?;
    let report = benchmark(net.as_ref(), &manifest, exec);
    report.write(&stem)?;
    if report.images.is_empty() {
        log::warn!("no test images in the manifest; wrote an empty report");
    }
    match (report.mean_psnr_db, report.mean_ssim) {
        (Some(p), Some(s)) => println!("{}: mean PSNR {p:.3} dB, mean SSIM {s:.4} over {} images", report.net, report.images.len() - report.failures),
        _ => println!("{}: no images scored", report.net),
    }
    if report.failures > 0 {
        for s in report.images.iter().filter(|s| s.error.is_some()) {
            eprintln!("failed: {}: {}", s.image, s.error.as_deref().unwrap_or(""));
        }
        bail!("{} of {} images failed", report.failures, report.images.len());
    }
    Ok(())
}

/// Runs the network over `input`, first upscaling it bicubically when
/// `--scale` is given.
fn infer(cfg: &RunConfig, input: &Path, scale: Option<u32>) -> Result<()> {
    let model = require_file("model", cfg.model.as_ref())?;
    let out = require_out(cfg.out.as_ref())?;
    let net = load_model(&model).with_context(|| format!("loading model {}", model.display()))?;
    let mut img = load_image(input).with_context(|| format!("reading {}", input.display()))?;
    if let Some(s) = scale.filter(|&s| s > 1) {
        img = bicubic_resize(&img, img.h() * s as usize, img.w() * s as usize)?;
    }
    let sr = infer_image(&net, &img).with_context(|| format!("super-resolving {}", input.display()))?;
    save_image(&sr, &out)?;
    println!("{}x{} -> {}x{} written to {}", img.w(), img.h(), sr.w(), sr.h(), out.display());
    Ok(())
}
