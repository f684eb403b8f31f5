//! Procedural grayscale scenes for self-contained desk-scale experiments.
//!
//! A scene is a smooth shaded background with overlapping rotated
//! rectangles and ellipses, some filled with oriented stripe textures,
//! rendered with 4x4 supersampled edges and a light binomial blur.

use std::f64::consts::PI;

use crate::rng::RngState;
use crate::tensor::Tensor4;

enum Shape {
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, cos: f64, sin: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, cos: f64, sin: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, hw, hh, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                u.abs() <= hw && v.abs() <= hh
            }
            Shape::Ellipse { cx, cy, rx, ry, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
        }
    }
}

struct Fill {
    base: f64,
    stripe_amp: f64,
    freq: f64,
    dir: (f64, f64),
    phase: f64,
}

impl Fill {
    fn at(&self, x: f64, y: f64) -> f64 {
        self.base + self.stripe_amp * (2.0 * PI * self.freq * (x * self.dir.0 + y * self.dir.1) + self.phase).sin()
    }
}

/// One `h x w` scene drawn from `rng`, values in `[0.05, 0.95]`.
pub fn scene(h: usize, w: usize, rng: &mut RngState) -> Tensor4 {
    let size = h.max(w) as f64;
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.uniform() * PI;
            let freq = (0.5 + 2.0 * rng.uniform()) / size;
            (angle.cos() * freq, angle.sin() * freq, rng.uniform() * 2.0 * PI, 0.05 + 0.1 * rng.uniform())
        })
        .collect();
    let background = 0.3 + 0.4 * rng.uniform();

    let count = 8 + rng.below(10);
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let angle = rng.uniform() * PI;
        let (cos, sin) = (angle.cos(), angle.sin());
        let cx = rng.uniform() * w as f64;
        let cy = rng.uniform() * h as f64;
        let a = size * (0.04 + 0.18 * rng.uniform());
        let b = size * (0.04 + 0.18 * rng.uniform());
        let shape = if rng.uniform() < 0.5 {
            Shape::Rect { cx, cy, hw: a, hh: b, cos, sin }
        } else {
            Shape::Ellipse { cx, cy, rx: a, ry: b, cos, sin }
        };
        let textured = rng.uniform() < 0.4;
        let dir = rng.uniform() * PI;
        let fill = Fill {
            base: 0.15 + 0.7 * rng.uniform(),
            stripe_amp: if textured { 0.1 + 0.15 * rng.uniform() } else { 0.0 },
            freq: 0.05 + 0.3 * rng.uniform(),
            dir: (dir.cos(), dir.sin()),
            phase: rng.uniform() * 2.0 * PI,
        };
        shapes.push((shape, fill));
    }

    const SS: usize = 4;
    let mut img = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64;
                    let mut v = background
                        + waves.iter().map(|&(fx, fy, ph, amp)| amp * (2.0 * PI * (fx * px + fy * py) + ph).sin()).sum::<f64>();
                    for (shape, fill) in &shapes {
                        if shape.contains(px, py) {
                            v = fill.at(px, py);
                        }
                    }
                    acc += v;
                }
            }
            img[y * w + x] = acc / (SS * SS) as f64;
        }
    }
    let blurred = binomial_blur(&img, h, w);
    let data = blurred.into_iter().map(|v| v.clamp(0.05, 0.95) as f32).collect();
    Tensor4::image(h, w, data).expect("positive dims")
}

fn binomial_blur(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let tap = |v: &dyn Fn(isize) -> f64| 0.25 * v(-1) + 0.5 * v(0) + 0.25 * v(1);
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = tap(&|d| img[y * w + (x as isize + d).clamp(0, w as isize - 1) as usize]);
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = tap(&|d| tmp[(y as isize + d).clamp(0, h as isize - 1) as usize * w + x]);
        }
    }
    out
}

/// `count` scenes from independent streams of `seed`.
pub fn corpus(count: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor4> {
    (0..count).map(|i| scene(h, w, &mut RngState::stream(seed, i as u64))).collect()
}
