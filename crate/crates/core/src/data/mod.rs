//! Images, degradation, patch sets and quality metrics.

pub mod bicubic;
pub mod eval;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod patches;
pub mod synth;

pub use bicubic::{bicubic_resize, crop_to_multiple, degrade};
pub use eval::{benchmark, evaluate_images, infer_image, EvalReport, ImageScore};
pub use image::{load_image, save_image};
pub use manifest::{DatasetManifest, ImageEntry, PatchParams, Role};
pub use metrics::{psnr, ssim};
pub use patches::{extract_patches, PatchSet, PatchSource};
