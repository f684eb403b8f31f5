//! PSNR and SSIM on unit-range images.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(a: &Tensor4, b: &Tensor4, context: &'static str) -> Result<()> {
    let da = [a.n(), a.c(), a.h(), a.w()];
    let db = [b.n(), b.c(), b.h(), b.w()];
    match da.iter().zip(&db).find(|(x, y)| x != y) {
        Some((&x, &y)) => Err(Error::dims(context, "a dim", x, "b dim", y)),
        None => Ok(()),
    }
}

/// `10 * log10(1 / mse)` in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    same_dims(a, b, "psnr")?;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable 'valid' filtering of an `h x w` plane with the 1-D window.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| plane[y * w + x + i] * win[i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| tmp[(y + i) * ow + x] * win[i]).sum();
        }
    }
    out
}

/// Mean structural similarity over all valid 11x11 Gaussian windows
/// (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2), averaged over channels and items.
pub fn ssim(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    same_dims(a, b, "ssim")?;
    let (h, w) = (a.h(), a.w());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let win = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for (pa, pb) in a.data().chunks_exact(h * w).zip(b.data().chunks_exact(h * w)) {
        let x: Vec<f64> = pa.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = pb.iter().map(|&v| v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, h, w, &win);
        let my = filter_valid(&y, h, w, &win);
        let sxx = filter_valid(&xx, h, w, &win);
        let syy = filter_valid(&yy, h, w, &win);
        let sxy = filter_valid(&xy, h, w, &win);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor4 {
        let mut rng = RngState::new(seed);
        Tensor4::image(h, w, (0..h * w).map(|_| rng.uniform() as f32).collect()).unwrap()
    }

    #[test]
    fn psnr_values() {
        let a = random_image(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Tensor4::filled(1, 1, 4, 4, 0.5);
        let c = Tensor4::filled(1, 1, 4, 4, 0.6);
        assert!((psnr(&b, &c).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&b, &random_image(8, 8, 2)).is_err());
    }

    #[test]
    fn psnr_reference() {
        let a = random_image(16, 16, 3);
        let b = random_image(16, 16, 4);
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / 256.0;
        assert!((psnr(&a, &b).unwrap() - (-10.0 * mse.log10())).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random_image(20, 24, 5);
        let b = random_image(20, 24, 6);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &Tensor4::zeros(1, 1, 5, 5)).is_err());
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = Tensor4::filled(1, 1, 16, 16, 0.9);
        let b = Tensor4::filled(1, 1, 16, 16, 0.1);
        // zero variance: luminance term only
        let ua = 0.9f32 as f64;
        let ub = 0.1f32 as f64;
        let expected = (2.0 * ua * ub + SSIM_C1) / (ua * ua + ub * ub + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }
}
