//! Separable cubic-convolution resampling (a = -0.5).
//!
//! Sample centers are aligned (`src = (dst + 0.5) * in / out - 0.5`) and
//! taps outside the image are clamped to the nearest edge pixel. When
//! shrinking, the kernel is stretched by the reduction factor so it acts as
//! an anti-aliasing filter, the convention of common image tools.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel.
pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Tap indices and normalized weights for each output position.
fn contributions(input: usize, output: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = output as f64 / input as f64;
    let (stretch, support) = if scale < 1.0 { (scale, 2.0 / scale) } else { (1.0, 2.0) };
    (0..output)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for t in lo..=hi {
                let wgt = stretch * cubic(stretch * (center - t as f64));
                if wgt == 0.0 {
                    continue;
                }
                let idx = t.clamp(0, input as isize - 1) as usize;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(tap) => tap.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(i, w)| (i, (w / total) as f32)).collect()
        })
        .collect()
}

/// Resamples every channel of every item to `out_h x out_w`.
pub fn bicubic_resize(img: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resize target {out_h}x{out_w} must be positive")));
    }
    let (n, c, h, w) = img.dims();
    let rows = contributions(h, out_h);
    let cols = contributions(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    let mut tmp = vec![0.0f32; h * out_w];
    for plane in img.data().chunks_exact(h * w) {
        for y in 0..h {
            let src = &plane[y * w..(y + 1) * w];
            for (x, taps) in cols.iter().enumerate() {
                tmp[y * out_w + x] = taps.iter().map(|&(i, wt)| src[i] * wt).sum();
            }
        }
        for taps in &rows {
            for x in 0..out_w {
                out.push(taps.iter().map(|&(i, wt)| tmp[i * out_w + x] * wt).sum());
            }
        }
    }
    Tensor4::from_vec(n, c, out_h, out_w, out)
}

/// Top-left crop to dimensions divisible by `scale`.
pub fn crop_to_multiple(img: &Tensor4, scale: usize) -> Result<Tensor4> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    let h = img.h() - img.h() % scale;
    let w = img.w() - img.w() % scale;
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!("{}x{} image smaller than scale {scale}", img.h(), img.w())));
    }
    if (h, w) == (img.h(), img.w()) {
        return Ok(img.clone());
    }
    img.crop(0, 0, h, w)
}

/// Bicubic downsample by `scale` and back up to the (cropped) original
/// size, clamped to `[0, 1]`. The input is first cropped to a multiple of
/// `scale`; the output has the cropped size.
pub fn degrade(hr: &Tensor4, scale: usize) -> Result<Tensor4> {
    let hr = crop_to_multiple(hr, scale)?;
    let small = bicubic_resize(&hr, hr.h() / scale, hr.w() / scale)?;
    let mut up = bicubic_resize(&small, hr.h(), hr.w())?;
    for v in up.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(up)
}
