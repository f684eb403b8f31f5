//! The `9-5-3-...-3-5` super-resolution network family.
//!
//! A network starts as three layers (64 9x9 filters, 32 5x5 filters, one
//! 5x5 output filter) and grows by inserting padded 3x3 layers just before
//! the output layer. The 9x9 and 5x5 layers are unpadded, so a network of
//! any depth maps a 33x33 input to a 17x17 output.

mod io;

pub use io::{checkpoint_path, load_model, save_model, sidecar_path, FORMAT_VERSION, MODEL_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::RngState;
use crate::tensor::{conv_backward_sample, conv_forward_sample, gaussian_init, Kernel, Scratch, Tensor4};

/// Standard deviation of freshly initialized weights.
pub const INIT_SIGMA: f64 = 0.001;

/// Kernel size of inserted layers.
pub const INSERT_KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Rectifier,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::None => 0,
            Activation::Rectifier => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::None),
            1 => Ok(Activation::Rectifier),
            other => Err(Error::Invariant(format!("unknown activation code {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_filters: usize,
    pub pad: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(kernel_size: usize, in_channels: usize, out_filters: usize, activation: Activation) -> Self {
        let pad = if kernel_size == INSERT_KERNEL { 1 } else { 0 };
        LayerSpec { kernel_size, in_channels, out_filters, pad, activation }
    }

    pub fn validate(&self) -> Result<()> {
        if ![3, 5, 9].contains(&self.kernel_size) {
            return Err(Error::Invariant(format!("kernel size {} not in {{3, 5, 9}}", self.kernel_size)));
        }
        if self.out_filters == 0 || self.in_channels == 0 {
            return Err(Error::Invariant("layer must have at least one input channel and one filter".into()));
        }
        let expected_pad = usize::from(self.kernel_size == INSERT_KERNEL);
        if self.pad != expected_pad {
            return Err(Error::Invariant(format!(
                "{}x{} layer must have pad {expected_pad}, found {}",
                self.kernel_size, self.kernel_size, self.pad
            )));
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        self.kernel_size * self.kernel_size * self.in_channels * self.out_filters
    }

    /// Pixels lost per side by this layer.
    pub fn shrink(&self) -> usize {
        (self.kernel_size - 1) / 2 - self.pad
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub kernel: Kernel,
    pub bias: Vec<f32>,
}

impl Layer {
    /// Gaussian-initialized weights (sigma [`INIT_SIGMA`]), zero bias.
    pub fn init(spec: LayerSpec, rng: &mut RngState) -> Result<Self> {
        Self::init_with(spec, INIT_SIGMA, rng)
    }

    pub fn init_with(spec: LayerSpec, sigma: f64, rng: &mut RngState) -> Result<Self> {
        let kernel = gaussian_init(spec.out_filters, spec.in_channels, spec.kernel_size, sigma, rng)?;
        Ok(Layer { spec, kernel, bias: vec![0.0; spec.out_filters] })
    }

    fn check(&self, index: usize) -> Result<()> {
        self.spec.validate()?;
        let k = &self.kernel;
        if k.out_filters() != self.spec.out_filters
            || k.in_channels() != self.spec.in_channels
            || k.size() != self.spec.kernel_size
            || self.bias.len() != self.spec.out_filters
        {
            return Err(Error::Invariant(format!("layer {index}: weights do not match spec")));
        }
        Ok(())
    }
}

/// Filter widths of the family: the 9x9 layer and every later hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub first: usize,
    pub hidden: usize,
}

impl Widths {
    pub const STANDARD: Widths = Widths { first: 64, hidden: 32 };

    /// Widths after removing `floor(rate * n)` filters from each layer.
    pub fn trimmed(self, rate: f64) -> Widths {
        let keep = |n: usize| n - (rate * n as f64).floor() as usize;
        Widths { first: keep(self.first), hidden: keep(self.hidden) }
    }
}

impl Default for Widths {
    fn default() -> Self {
        Widths::STANDARD
    }
}

/// One completed training stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub depth_after: usize,
    pub epochs_run: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    scale: u32,
    history: Vec<StageRecord>,
}

/// Per-layer kernel and bias gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub kernels: Vec<Vec<f32>>,
    pub biases: Vec<Vec<f32>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            kernels: net.layers.iter().map(|l| vec![0.0; l.kernel.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.kernels.iter_mut().zip(&other.kernels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

impl Network {
    /// The three-layer starting network with standard widths.
    pub fn base(rng: &mut RngState) -> Result<Self> {
        Self::with_depth(3, Widths::STANDARD, rng)
    }

    /// A full `depth`-layer family member, every layer freshly initialized.
    pub fn with_depth(depth: usize, widths: Widths, rng: &mut RngState) -> Result<Self> {
        Self::with_depth_init(depth, widths, INIT_SIGMA, rng)
    }

    pub fn with_depth_init(depth: usize, widths: Widths, sigma: f64, rng: &mut RngState) -> Result<Self> {
        if depth < 3 || depth % 2 == 0 {
            return Err(Error::InvalidArgument(format!("depth must be odd and >= 3, got {depth}")));
        }
        let mut specs = vec![
            LayerSpec::new(9, 1, widths.first, Activation::Rectifier),
            LayerSpec::new(5, widths.first, widths.hidden, Activation::Rectifier),
        ];
        for _ in 0..depth - 3 {
            specs.push(LayerSpec::new(INSERT_KERNEL, widths.hidden, widths.hidden, Activation::Rectifier));
        }
        specs.push(LayerSpec::new(5, widths.hidden, 1, Activation::None));
        let layers = specs.into_iter().map(|s| Layer::init_with(s, sigma, rng)).collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, 2)
    }

    pub fn from_layers(layers: Vec<Layer>, scale: u32) -> Result<Self> {
        let net = Network { layers, scale, history: Vec::new() };
        net.validate()?;
        Ok(net)
    }

    /// Checks the chain and family invariants.
    pub fn validate(&self) -> Result<()> {
        let l = self.layers.len();
        if l < 3 {
            return Err(Error::Invariant(format!("network needs at least 3 layers, has {l}")));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check(i)?;
            let expected_k = match i {
                0 => 9,
                1 => 5,
                _ if i == l - 1 => 5,
                _ => INSERT_KERNEL,
            };
            if layer.spec.kernel_size != expected_k {
                return Err(Error::Invariant(format!(
                    "layer {i} has kernel {} where the 9-5-3-...-3-5 pattern needs {expected_k}",
                    layer.spec.kernel_size
                )));
            }
            let expected_act = if i == l - 1 { Activation::None } else { Activation::Rectifier };
            if layer.spec.activation != expected_act {
                return Err(Error::Invariant(format!("layer {i} has activation {:?}", layer.spec.activation)));
            }
        }
        if self.layers[0].spec.in_channels != 1 {
            return Err(Error::Invariant("first layer must take one input channel".into()));
        }
        if self.layers[l - 1].spec.out_filters != 1 {
            return Err(Error::Invariant("last layer must have one output filter".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].spec.out_filters != pair[1].spec.in_channels {
                return Err(Error::Invariant(format!(
                    "layer {i} has {} filters but layer {} expects {} inputs",
                    pair[0].spec.out_filters,
                    i + 1,
                    pair[1].spec.in_channels
                )));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    pub(crate) fn layers_mut(&mut self) -> &mut Vec<Layer> {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn filter_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.spec.out_filters).collect()
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn set_scale(&mut self, scale: u32) {
        self.scale = scale;
    }

    pub fn history(&self) -> &[StageRecord] {
        &self.history
    }

    pub fn push_history(&mut self, record: StageRecord) {
        self.history.push(record);
    }

    pub(crate) fn set_history(&mut self, history: Vec<StageRecord>) {
        self.history = history;
    }

    /// Weight count, biases excluded.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.weight_count()).sum()
    }

    /// Pixels lost per side over the whole network.
    pub fn border(&self) -> usize {
        self.layers.iter().map(|l| l.spec.shrink()).sum()
    }

    /// Output spatial size for an `h x w` input, or an error naming the
    /// first layer whose output would be empty.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (mut h, mut w) = (h, w);
        for (i, l) in self.layers.iter().enumerate() {
            let s = 2 * l.spec.shrink();
            if h <= s || w <= s {
                return Err(Error::EmptyOutput {
                    context: format!("layer {i} ({0}x{0} kernel) on {h}x{w} input", l.spec.kernel_size),
                    h: h as isize - s as isize,
                    w: w as isize - s as isize,
                });
            }
            h -= s;
            w -= s;
        }
        Ok((h, w))
    }

    /// Multiplications for one forward pass on an `h x w` input:
    /// the sum over layers of `k^2 * n_in * n_out * h_out * w_out`.
    pub fn multiply_count(&self, h: usize, w: usize) -> Result<u64> {
        self.output_size(h, w)?;
        let (mut h, mut w) = (h, w);
        let mut total = 0u64;
        for l in &self.layers {
            let s = 2 * l.spec.shrink();
            h -= s;
            w -= s;
            total += (l.spec.weight_count() * h * w) as u64;
        }
        Ok(total)
    }

    /// New network with `how_many` 3x3 layers inserted just before the
    /// output layer. Inserted layers match the width feeding the output
    /// layer; all existing weights are carried over unchanged.
    pub fn insert_layers(&self, how_many: usize, rng: &mut RngState) -> Result<Network> {
        self.insert_layers_init(how_many, INIT_SIGMA, rng)
    }

    pub fn insert_layers_init(&self, how_many: usize, sigma: f64, rng: &mut RngState) -> Result<Network> {
        let l = self.layers.len();
        let width = self.layers[l - 2].spec.out_filters;
        let mut layers = self.layers[..l - 1].to_vec();
        for _ in 0..how_many {
            layers.push(Layer::init_with(LayerSpec::new(INSERT_KERNEL, width, width, Activation::Rectifier), sigma, rng)?);
        }
        layers.push(self.layers[l - 1].clone());
        let net = Network { layers, scale: self.scale, history: self.history.clone() };
        net.validate()?;
        Ok(net)
    }

    fn check_input(&self, input: &Tensor4) -> Result<(usize, usize)> {
        crate::error::ensure_eq("forward", "input.channels", input.c(), "first layer in_channels", 1)?;
        self.output_size(input.h(), input.w())
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        self.forward_with(input, Exec::Sequential)
    }

    /// Forward pass over a batch, batch items distributed by `exec`.
    pub fn forward_with(&self, input: &Tensor4, exec: Exec) -> Result<Tensor4> {
        let (ho, wo) = self.check_input(input)?;
        let outs = exec.map(input.n(), |i| {
            let mut scratch = Scratch::default();
            self.trace(input.sample(i), input.h(), input.w(), &mut scratch).pop().unwrap_or_default()
        });
        Tensor4::from_vec(input.n(), 1, ho, wo, outs.concat())
    }

    /// Per-layer activations for one sample: `[input, out_0, ..., out_{L-1}]`.
    fn trace(&self, x: &[f32], h: usize, w: usize, scratch: &mut Scratch) -> Vec<Vec<f32>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let (mut h, mut w) = (h, w);
        for l in &self.layers {
            let s = 2 * l.spec.shrink();
            let mut out = vec![0.0; l.spec.out_filters * (h - s) * (w - s)];
            let prev = acts.last().expect("input pushed");
            conv_forward_sample(prev, l.spec.in_channels, h, w, &l.kernel, &l.bias, l.spec.pad, &mut out, scratch);
            if l.spec.activation == Activation::Rectifier {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h -= s;
            w -= s;
            acts.push(out);
        }
        acts
    }

    /// Backpropagates the squared error of one sample. Gradients of
    /// `grad_scale * sum((pred - target)^2) / 2` accumulate into `grads`;
    /// returns the sample's sum of squared errors.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_sample(
        &self,
        x: &[f32],
        h: usize,
        w: usize,
        target: &[f32],
        grad_scale: f32,
        grads: &mut Gradients,
        scratch: &mut Scratch,
    ) -> f64 {
        let acts = self.trace(x, h, w, scratch);
        let pred = acts.last().expect("at least one layer");
        debug_assert_eq!(pred.len(), target.len());
        let mut sse = 0.0f64;
        let mut grad: Vec<f32> = pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let d = p - t;
                sse += (d as f64) * (d as f64);
                grad_scale * d
            })
            .collect();

        let mut dims = Vec::with_capacity(self.layers.len());
        let (mut hh, mut ww) = (h, w);
        for l in &self.layers {
            dims.push((hh, ww));
            let s = 2 * l.spec.shrink();
            hh -= s;
            ww -= s;
        }

        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let (ih, iw) = dims[i];
            let mut grad_in = if i > 0 { Some(vec![0.0; acts[i].len()]) } else { None };
            conv_backward_sample(
                &acts[i],
                l.spec.in_channels,
                ih,
                iw,
                &l.kernel,
                l.spec.pad,
                &grad,
                &mut grads.kernels[i],
                &mut grads.biases[i],
                grad_in.as_deref_mut(),
                scratch,
            );
            if let Some(mut g) = grad_in {
                if self.layers[i - 1].spec.activation == Activation::Rectifier {
                    for (gv, &a) in g.iter_mut().zip(&acts[i]) {
                        if a <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                }
                grad = g;
            }
        }
        sse
    }

    /// Gradient of the per-element mean squared error over a batch, with
    /// per-sample work distributed by `exec` and summed in batch order.
    /// Returns the gradients and the batch sum of squared errors.
    pub fn batch_gradients(&self, lr: &Tensor4, hr: &Tensor4, exec: Exec) -> Result<(Gradients, f64)> {
        let (ho, wo) = self.check_input(lr)?;
        crate::error::ensure_eq("batch_gradients", "lr.n", lr.n(), "hr.n", hr.n())?;
        crate::error::ensure_eq("batch_gradients", "output.h", ho, "hr.h", hr.h())?;
        crate::error::ensure_eq("batch_gradients", "output.w", wo, "hr.w", hr.w())?;
        let scale = (2.0 / hr.len() as f64) as f32;
        let per_sample = exec.map(lr.n(), |i| {
            let mut g = Gradients::zeros_like(self);
            let mut scratch = Scratch::default();
            let sse = self.accumulate_sample(lr.sample(i), lr.h(), lr.w(), hr.sample(i), scale, &mut g, &mut scratch);
            (g, sse)
        });
        let mut total = Gradients::zeros_like(self);
        let mut sse = 0.0;
        for (g, s) in &per_sample {
            total.add_assign(g);
            sse += s;
        }
        Ok((total, sse))
    }

    /// Plain SGD step `w <- w - lr * g` on every layer.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f32) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            crate::tensor::ops_axpy(layer.kernel.data_mut(), &grads.kernels[i], lr);
            crate::tensor::ops_axpy(&mut layer.bias, &grads.biases[i], lr);
        }
    }
}
