//! Dense tensors and the numerical kernels the networks are built from.

mod conv;
mod ops;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub(crate) use conv::{conv_backward_sample, conv_forward_sample, Scratch};
pub use ops::{mse_loss, relu_backward, relu_forward, sgd_step};
pub(crate) use ops::axpy as ops_axpy;

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Dense `(n, c, h, w)` array of `f32` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self::filled(n, c, h, w, 0.0)
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: f32) -> Self {
        assert!(n > 0 && c > 0 && h > 0 && w > 0, "tensor dims must be positive");
        Tensor4 { n, c, h, w, data: vec![value; n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!("tensor dims must be positive, got {n}x{c}x{h}x{w}")));
        }
        crate::error::ensure_eq("Tensor4::from_vec", "n*c*h*w", n * c * h * w, "data.len()", data.len())?;
        Ok(Tensor4 { n, c, h, w, data })
    }

    /// Single-channel image tensor `1x1xhxw`.
    pub fn image(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_vec(1, 1, h, w, data)
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let o = self.offset(n, c, y, x);
        self.data[o] = v;
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Contiguous `(c, h, w)` slab of batch item `i`.
    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    /// Window `[y0, y0+h) x [x0, x0+w)` of every channel of every item.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y0 + h > self.h || x0 + w > self.w {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} at ({y0},{x0}) exceeds {}x{}",
                self.h, self.w
            )));
        }
        let mut out = Vec::with_capacity(self.n * self.c * h * w);
        for n in 0..self.n {
            for c in 0..self.c {
                for y in y0..y0 + h {
                    let start = self.offset(n, c, y, x0);
                    out.extend_from_slice(&self.data[start..start + w]);
                }
            }
        }
        Tensor4::from_vec(self.n, self.c, h, w, out)
    }
}

/// Convolution weights in `(out, in, kh, kw)` order with square kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    out: usize,
    inp: usize,
    k: usize,
    data: Vec<f32>,
}

impl Kernel {
    pub fn zeros(out: usize, inp: usize, k: usize) -> Self {
        assert!(out > 0 && inp > 0 && k > 0, "kernel dims must be positive");
        Kernel { out, inp, k, data: vec![0.0; out * inp * k * k] }
    }

    pub fn from_vec(out: usize, inp: usize, k: usize, data: Vec<f32>) -> Result<Self> {
        if out == 0 || inp == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!("kernel dims must be positive, got {out}x{inp}x{k}x{k}")));
        }
        crate::error::ensure_eq("Kernel::from_vec", "out*in*k*k", out * inp * k * k, "data.len()", data.len())?;
        Ok(Kernel { out, inp, k, data })
    }

    pub fn out_filters(&self) -> usize {
        self.out
    }
    pub fn in_channels(&self) -> usize {
        self.inp
    }
    pub fn size(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn filter_len(&self) -> usize {
        self.inp * self.k * self.k
    }

    /// All weights of output filter `j`.
    pub fn filter(&self, j: usize) -> &[f32] {
        let len = self.filter_len();
        &self.data[j * len..(j + 1) * len]
    }

    pub fn get(&self, o: usize, i: usize, y: usize, x: usize) -> f32 {
        self.data[((o * self.inp + i) * self.k + y) * self.k + x]
    }

    pub fn set(&mut self, o: usize, i: usize, y: usize, x: usize, v: f32) {
        let k = self.k;
        let inp = self.inp;
        self.data[((o * inp + i) * k + y) * k + x] = v;
    }

    /// Copy without the listed output filters.
    pub fn without_filters(&self, drop: &[usize]) -> Kernel {
        let keep: Vec<usize> = (0..self.out).filter(|j| !drop.contains(j)).collect();
        let mut data = Vec::with_capacity(keep.len() * self.filter_len());
        for &j in &keep {
            data.extend_from_slice(self.filter(j));
        }
        Kernel { out: keep.len(), inp: self.inp, k: self.k, data }
    }

    /// Copy without the listed input-channel slices.
    pub fn without_inputs(&self, drop: &[usize]) -> Kernel {
        let keep: Vec<usize> = (0..self.inp).filter(|i| !drop.contains(i)).collect();
        let kk = self.k * self.k;
        let mut data = Vec::with_capacity(self.out * keep.len() * kk);
        for o in 0..self.out {
            for &i in &keep {
                let start = (o * self.inp + i) * kk;
                data.extend_from_slice(&self.data[start..start + kk]);
            }
        }
        Kernel { out: self.out, inp: keep.len(), k: self.k, data }
    }
}

/// I.i.d. zero-mean Gaussian weights with standard deviation `sigma`.
pub fn gaussian_init(out: usize, inp: usize, k: usize, sigma: f64, rng: &mut RngState) -> Result<Kernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let data = (0..out * inp * k * k).map(|_| rng.normal(sigma)).collect();
    Kernel::from_vec(out, inp, k, data)
}
