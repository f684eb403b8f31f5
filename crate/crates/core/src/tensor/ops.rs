use super::{Kernel, Tensor4};
use crate::error::{ensure_eq, Error, Result};

pub fn relu_forward(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes `grad_output` where `input > 0`, zero elsewhere.
pub fn relu_backward(input: &Tensor4, grad_output: &Tensor4) -> Result<Tensor4> {
    ensure_eq("relu_backward", "input.len", input.len(), "grad_output.len", grad_output.len())?;
    let mut out = grad_output.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Per-element mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.dims() != target.dims() {
        let (pn, pc, ph, pw) = pred.dims();
        let (tn, tc, th, tw) = target.dims();
        let (l, r) = [(pn, tn), (pc, tc), (ph, th), (pw, tw)].into_iter().find(|(a, b)| a != b).unwrap_or((0, 0));
        return Err(Error::dims("mse_loss", "pred dim", l, "target dim", r));
    }
    let count = pred.len() as f64;
    let scale = (2.0 / count) as f32;
    let mut sse = 0.0f64;
    let mut grad = pred.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        sse += (d as f64) * (d as f64);
        *g = scale * d;
    }
    Ok((sse / count, grad))
}

/// `p <- p - lr * g` on a kernel and its bias vector.
pub fn sgd_step(kernel: &mut Kernel, bias: &mut [f32], grad_kernel: &Kernel, grad_bias: &[f32], lr: f32) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    ensure_eq("sgd_step", "kernel.len", kernel.len(), "grad_kernel.len", grad_kernel.len())?;
    ensure_eq("sgd_step", "bias.len", bias.len(), "grad_bias.len", grad_bias.len())?;
    axpy(kernel.data_mut(), grad_kernel.data(), lr);
    axpy(bias, grad_bias, lr);
    Ok(())
}

pub(crate) fn axpy(params: &mut [f32], grads: &[f32], lr: f32) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}
