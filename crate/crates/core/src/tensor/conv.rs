//! Stride-one 2-D cross-correlation via im2col and SGEMM.

use super::{Kernel, Tensor4};
use crate::error::{ensure_eq, Error, Result};

/// Reusable column buffers for one worker.
#[derive(Default, Debug)]
pub(crate) struct Scratch {
    cols: Vec<f32>,
    grad_cols: Vec<f32>,
}

pub(crate) fn output_size(h: usize, w: usize, k: usize, pad: usize, context: &str) -> Result<(usize, usize)> {
    let ho = h as isize + 2 * pad as isize - k as isize + 1;
    let wo = w as isize + 2 * pad as isize - k as isize + 1;
    if ho < 1 || wo < 1 {
        return Err(Error::EmptyOutput { context: context.to_string(), h: ho, w: wo });
    }
    Ok((ho as usize, wo as usize))
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index addressed by the strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f32], c: usize, h: usize, w: usize, k: usize, pad: usize, ho: usize, wo: usize, cols: &mut Vec<f32>) {
    let n = ho * wo;
    cols.clear();
    cols.resize(c * k * k * n, 0.0);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * n;
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                    // ix = ox + kx - pad must land in [0, w)
                    let lo = pad.saturating_sub(kx);
                    let hi = (w + pad).saturating_sub(kx).min(wo);
                    if lo < hi {
                        let s0 = lo + kx - pad;
                        dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f32], c: usize, h: usize, w: usize, k: usize, pad: usize, ho: usize, wo: usize, gx: &mut [f32]) {
    let n = ho * wo;
    for ci in 0..c {
        let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * n;
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let lo = pad.saturating_sub(kx);
                    let hi = (w + pad).saturating_sub(kx).min(wo);
                    if lo >= hi {
                        continue;
                    }
                    let s0 = lo + kx - pad;
                    let dst = &mut plane[iy as usize * w + s0..iy as usize * w + s0 + (hi - lo)];
                    let src = &cols[row + oy * wo + lo..row + oy * wo + hi];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Forward pass for one `(c, h, w)` sample into `out` (`(out_filters, ho, wo)`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward_sample(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kernel: &Kernel,
    bias: &[f32],
    pad: usize,
    out: &mut [f32],
    scratch: &mut Scratch,
) -> (usize, usize) {
    let k = kernel.size();
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let n = ho * wo;
    let m = kernel.out_filters();
    for (o, &b) in bias.iter().enumerate() {
        out[o * n..(o + 1) * n].fill(b);
    }
    if k == 1 && pad == 0 {
        gemm(m, c, n, kernel.data(), false, x, false, 1.0, out);
    } else {
        im2col(x, c, h, w, k, pad, ho, wo, &mut scratch.cols);
        gemm(m, c * k * k, n, kernel.data(), false, &scratch.cols, false, 1.0, out);
    }
    (ho, wo)
}

/// Backward pass for one sample. Kernel and bias gradients accumulate into
/// `grad_kernel` / `grad_bias`; the input gradient is overwritten when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_sample(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kernel: &Kernel,
    pad: usize,
    grad_out: &[f32],
    grad_kernel: &mut [f32],
    grad_bias: &mut [f32],
    grad_input: Option<&mut [f32]>,
    scratch: &mut Scratch,
) {
    let k = kernel.size();
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let n = ho * wo;
    let m = kernel.out_filters();
    let kdim = c * k * k;
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out[o * n..(o + 1) * n].iter().sum::<f32>();
    }
    let direct = k == 1 && pad == 0;
    if !direct {
        im2col(x, c, h, w, k, pad, ho, wo, &mut scratch.cols);
    }
    let cols: &[f32] = if direct { x } else { &scratch.cols };
    gemm(m, n, kdim, grad_out, false, cols, true, 1.0, grad_kernel);
    if let Some(gx) = grad_input {
        if direct {
            gemm(kdim, m, n, kernel.data(), true, grad_out, false, 0.0, gx);
        } else {
            scratch.grad_cols.clear();
            scratch.grad_cols.resize(kdim * n, 0.0);
            gemm(kdim, m, n, kernel.data(), true, grad_out, false, 0.0, &mut scratch.grad_cols);
            gx.fill(0.0);
            col2im_add(&scratch.grad_cols, c, h, w, k, pad, ho, wo, gx);
        }
    }
}

fn check_conv(input: &Tensor4, kernel: &Kernel, bias: &[f32], pad: usize) -> Result<(usize, usize)> {
    ensure_eq("conv2d", "input.channels", input.c(), "kernel.in_channels", kernel.in_channels())?;
    ensure_eq("conv2d", "bias.len", bias.len(), "kernel.out_filters", kernel.out_filters())?;
    output_size(input.h(), input.w(), kernel.size(), pad, "conv2d")
}

/// Cross-correlation of every batch item with `kernel`, plus bias.
pub fn conv2d_forward(input: &Tensor4, kernel: &Kernel, bias: &[f32], pad: usize) -> Result<Tensor4> {
    let (ho, wo) = check_conv(input, kernel, bias, pad)?;
    let mut out = Tensor4::zeros(input.n(), kernel.out_filters(), ho, wo);
    let mut scratch = Scratch::default();
    for i in 0..input.n() {
        conv_forward_sample(
            input.sample(i),
            input.c(),
            input.h(),
            input.w(),
            kernel,
            bias,
            pad,
            out.sample_mut(i),
            &mut scratch,
        );
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub grad_input: Tensor4,
    pub grad_kernel: Kernel,
    pub grad_bias: Vec<f32>,
}

/// Gradients of a scalar loss through [`conv2d_forward`], given `grad_output`
/// of the same shape as the forward output. Batch contributions to the
/// kernel and bias gradients are summed in batch order.
pub fn conv2d_backward(input: &Tensor4, kernel: &Kernel, grad_output: &Tensor4, pad: usize) -> Result<ConvGrads> {
    ensure_eq("conv2d_backward", "input.channels", input.c(), "kernel.in_channels", kernel.in_channels())?;
    let (ho, wo) = output_size(input.h(), input.w(), kernel.size(), pad, "conv2d_backward")?;
    ensure_eq("conv2d_backward", "grad_output.n", grad_output.n(), "input.n", input.n())?;
    ensure_eq("conv2d_backward", "grad_output.c", grad_output.c(), "kernel.out_filters", kernel.out_filters())?;
    ensure_eq("conv2d_backward", "grad_output.h", grad_output.h(), "output.h", ho)?;
    ensure_eq("conv2d_backward", "grad_output.w", grad_output.w(), "output.w", wo)?;

    let (n, c, h, w) = input.dims();
    let mut grad_input = Tensor4::zeros(n, c, h, w);
    let mut grad_kernel = Kernel::zeros(kernel.out_filters(), kernel.in_channels(), kernel.size());
    let mut grad_bias = vec![0.0; kernel.out_filters()];
    let mut scratch = Scratch::default();
    for i in 0..n {
        conv_backward_sample(
            input.sample(i),
            c,
            h,
            w,
            kernel,
            pad,
            grad_output.sample(i),
            grad_kernel.data_mut(),
            &mut grad_bias,
            Some(grad_input.sample_mut(i)),
            &mut scratch,
        );
    }
    Ok(ConvGrads { grad_input, grad_kernel, grad_bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut RngState) -> Tensor4 {
        Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.normal(1.0)).collect()).unwrap()
    }

    fn random_kernel(o: usize, i: usize, k: usize, rng: &mut RngState) -> Kernel {
        Kernel::from_vec(o, i, k, (0..o * i * k * k).map(|_| rng.normal(1.0)).collect()).unwrap()
    }

    /// Direct six-deep loop, no im2col.
    fn naive_conv(x: &Tensor4, k: &Kernel, b: &[f32], pad: usize) -> Tensor4 {
        let ks = k.size();
        let ho = x.h() + 2 * pad + 1 - ks;
        let wo = x.w() + 2 * pad + 1 - ks;
        let mut out = Tensor4::zeros(x.n(), k.out_filters(), ho, wo);
        for n in 0..x.n() {
            for o in 0..k.out_filters() {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[o] as f64;
                        for i in 0..k.in_channels() {
                            for ky in 0..ks {
                                for kx in 0..ks {
                                    let iy = oy as isize + ky as isize - pad as isize;
                                    let ix = ox as isize + kx as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h() && (ix as usize) < x.w() {
                                        acc += x.get(n, i, iy as usize, ix as usize) as f64 * k.get(o, i, ky, kx) as f64;
                                    }
                                }
                            }
                        }
                        out.set(n, o, oy, ox, acc as f32);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn all_ones_sum() {
        let x = Tensor4::filled(1, 1, 3, 3, 1.0);
        let k = Kernel::from_vec(1, 1, 3, vec![1.0; 9]).unwrap();
        let y = conv2d_forward(&x, &k, &[0.0], 0).unwrap();
        assert_eq!(y.dims(), (1, 1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = RngState::new(5);
        let x = random_tensor(1, 1, 5, 5, &mut rng);
        let k = Kernel::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &k, &[0.0], 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_naive_loop_padded() {
        let mut rng = RngState::new(42);
        let x = random_tensor(1, 2, 6, 6, &mut rng);
        let k = random_kernel(3, 2, 3, &mut rng);
        let b = vec![0.1, -0.2, 0.3];
        let fast = conv2d_forward(&x, &k, &b, 1).unwrap();
        let slow = naive_conv(&x, &k, &b, 1);
        assert_eq!(fast.dims(), (1, 3, 6, 6));
        for (a, e) in fast.data().iter().zip(slow.data()) {
            assert!((a - e).abs() < 1e-5, "{a} vs {e}");
        }
    }

    #[test]
    fn dimension_errors() {
        let x = Tensor4::zeros(1, 2, 4, 4);
        let k = Kernel::zeros(1, 3, 3);
        match conv2d_forward(&x, &k, &[0.0], 0) {
            Err(Error::DimMismatch { left, right, .. }) => assert_eq!((left, right), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let k = Kernel::zeros(1, 2, 5);
        assert!(matches!(conv2d_forward(&x, &k, &[0.0], 0), Err(Error::EmptyOutput { .. })));
    }

    #[test]
    fn backward_scalar_case() {
        let x = Tensor4::filled(1, 1, 1, 1, 3.0);
        let k = Kernel::from_vec(1, 1, 1, vec![2.0]).unwrap();
        let g = Tensor4::filled(1, 1, 1, 1, 0.5);
        let grads = conv2d_backward(&x, &k, &g, 0).unwrap();
        assert_eq!(grads.grad_input.data(), &[1.0]);
        assert_eq!(grads.grad_kernel.data(), &[1.5]);
        assert_eq!(grads.grad_bias, vec![0.5]);
    }

    #[test]
    fn backward_zero_grad() {
        let mut rng = RngState::new(9);
        let x = random_tensor(2, 2, 5, 5, &mut rng);
        let k = random_kernel(3, 2, 3, &mut rng);
        let g = Tensor4::zeros(2, 3, 5, 5);
        let grads = conv2d_backward(&x, &k, &g, 1).unwrap();
        assert!(grads.grad_input.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_kernel.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_checks_grad_shape() {
        let x = Tensor4::zeros(1, 1, 5, 5);
        let k = Kernel::zeros(1, 1, 3);
        let g = Tensor4::zeros(1, 1, 4, 4);
        assert!(matches!(conv2d_backward(&x, &k, &g, 0), Err(Error::DimMismatch { .. })));
    }
}
