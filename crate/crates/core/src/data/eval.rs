//! Whole-image inference and PSNR/SSIM/time reports.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::bicubic::{crop_to_multiple, degrade};
use super::image::load_image;
use super::manifest::{DatasetManifest, Role};
use super::metrics::{psnr, ssim};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Network;
use crate::tensor::Tensor4;

/// Border shaved from ground truth when scoring the bicubic baseline, equal
/// to the shrink of every network in the family.
pub const BASELINE_BORDER: usize = 8;

/// Runs the network over a whole interpolated image. The result is
/// `border()` pixels smaller per side than the input.
pub fn infer_image(net: &Network, lr_upsampled: &Tensor4) -> Result<Tensor4> {
    net.forward(lr_upsampled)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageScore {
    pub image: String,
    /// `None` when the error is zero (infinite PSNR).
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub net: String,
    pub scale: u32,
    pub images: Vec<ImageScore>,
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub mean_seconds: Option<f64>,
    pub failures: usize,
}

impl EvalReport {
    fn from_scores(net: String, scale: u32, images: Vec<ImageScore>) -> Self {
        let ok: Vec<&ImageScore> = images.iter().filter(|s| s.error.is_none()).collect();
        let mean = |f: &dyn Fn(&ImageScore) -> f64| {
            if ok.is_empty() {
                None
            } else {
                Some(ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64)
            }
        };
        let finite: Vec<f64> = ok.iter().filter_map(|s| s.psnr_db).collect();
        let mean_psnr_db = match ok.iter().any(|s| s.psnr_infinite) {
            true => Some(f64::INFINITY),
            false if finite.is_empty() => None,
            false => Some(finite.iter().sum::<f64>() / finite.len() as f64),
        };
        let failures = images.len() - ok.len();
        EvalReport {
            net,
            scale,
            mean_psnr_db,
            mean_ssim: mean(&|s| s.ssim),
            mean_seconds: mean(&|s| s.seconds),
            failures,
            images,
        }
    }

    /// `image,psnr_db,ssim,seconds`, one row per image; failed rows carry
    /// empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,psnr_db,ssim,seconds\n");
        for s in &self.images {
            match &s.error {
                Some(_) => out.push_str(&format!("{},,,\n", s.image)),
                None => {
                    let p = if s.psnr_infinite { "inf".to_string() } else { format!("{:.6}", s.psnr_db.unwrap_or(f64::NAN)) };
                    out.push_str(&format!("{},{p},{:.6},{:.6}\n", s.image, s.ssim, s.seconds));
                }
            }
        }
        out
    }

    /// Writes `stem.csv` and `stem.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(Error::at(dir))?;
        }
        let csv = stem.with_extension("csv");
        fs::write(&csv, self.to_csv()).map_err(Error::at(&csv))?;
        let json = stem.with_extension("json");
        let mut value = serde_json::to_value(self)?;
        if self.mean_psnr_db == Some(f64::INFINITY) {
            value["mean_psnr_db"] = serde_json::Value::String("inf".into());
        }
        fs::write(&json, serde_json::to_string_pretty(&value)? + "\n").map_err(Error::at(&json))?;
        Ok(())
    }
}

fn score_one(net: Option<&Network>, name: String, hr: &Tensor4, scale: usize) -> Result<ImageScore> {
    let hr = crop_to_multiple(hr, scale)?;
    let lr = degrade(&hr, scale)?;
    let border = net.map_or(BASELINE_BORDER, Network::border);
    let (h, w) = (hr.h(), hr.w());
    if h <= 2 * border || w <= 2 * border {
        return Err(Error::InvalidArgument(format!("{h}x{w} image too small for border {border}")));
    }
    let start = Instant::now();
    let pred = match net {
        Some(n) => infer_image(n, &lr)?,
        None => lr.crop(border, border, h - 2 * border, w - 2 * border)?,
    };
    let seconds = start.elapsed().as_secs_f64();
    let truth = hr.crop(border, border, h - 2 * border, w - 2 * border)?;
    let mut pred = pred;
    for v in pred.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let p = psnr(&pred, &truth)?;
    Ok(ImageScore {
        image: name,
        psnr_db: p.is_finite().then_some(p),
        psnr_infinite: p.is_infinite(),
        ssim: ssim(&pred, &truth)?,
        seconds,
        error: None,
    })
}

fn failed(name: String, e: Error) -> ImageScore {
    ImageScore { image: name, psnr_db: None, psnr_infinite: false, ssim: f64::NAN, seconds: 0.0, error: Some(e.to_string()) }
}

/// Scores in-memory HR images: degrade, super-resolve (or keep the bicubic
/// interpolation when `net` is `None`), shave the border and compare.
/// Network outputs are clamped to `[0, 1]` before scoring.
pub fn evaluate_images(net: Option<&Network>, images: &[(String, Tensor4)], scale: u32, exec: Exec) -> EvalReport {
    let scores = exec.map(images.len(), |i| {
        let (name, img) = &images[i];
        score_one(net, name.clone(), img, scale as usize).unwrap_or_else(|e| failed(name.clone(), e))
    });
    let label = net.map_or_else(|| "bicubic".to_string(), |n| format!("ctsr-{}", n.depth()));
    EvalReport::from_scores(label, scale, scores)
}

/// Evaluates every test image of the manifest. Unreadable images are
/// recorded as failures rather than aborting the run.
pub fn benchmark(net: Option<&Network>, manifest: &DatasetManifest, exec: Exec) -> EvalReport {
    let paths: Vec<&Path> = manifest.paths(Role::Test).collect();
    if paths.is_empty() {
        log::warn!("benchmark: manifest lists no test images");
    }
    let scale = manifest.scale;
    let scores = exec.map(paths.len(), |i| {
        let name = paths[i].display().to_string();
        load_image(paths[i])
            .and_then(|img| score_one(net, name.clone(), &img, scale as usize))
            .unwrap_or_else(|e| failed(name, e))
    });
    let label = net.map_or_else(|| "bicubic".to_string(), |n| format!("ctsr-{}", n.depth()));
    EvalReport::from_scores(label, scale, scores)
}
