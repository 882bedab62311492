//! Dense-network numerics: activations, seeded initialization,
//! forward/backward passes for fully connected layers, and SGD with
//! learning-rate scheduling.
//!
//! Everything here is deterministic: identical (spec, seed, data, config)
//! produces bit-identical parameters after any number of steps. The
//! architectures in this crate are small and fixed, so layers are
//! hand-differentiated rather than routed through a general autodiff
//! graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeding;

/// Numerically stable logistic function; never over/underflows to NaN.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Elementwise nonlinearity applied after the affine map of a layer.
///
/// `Identity` exists so heads that feed a softmax (or any loss defined on
/// logits) can reuse the same layer plumbing; it is not offered in
/// configs for hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(t),
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
            Activation::Identity => t,
        }
    }

    /// Derivative expressed through the *output* value `o = apply(t)`.
    ///
    /// All four activations admit this form (for ReLU the subgradient at
    /// 0 is taken as 0), which lets the backward pass work from stored
    /// outputs without keeping pre-activations around.
    #[inline]
    pub fn derivative_from_output(self, o: f64) -> f64 {
        match self {
            Activation::Sigmoid => o * (1.0 - o),
            Activation::Relu => {
                if o > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - o * o,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Activation> {
        match name {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture of a feedforward network: input width, hidden widths,
/// the hidden activation, and output width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, activation: Activation, output_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_dims,
            activation,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.dims();
        if all.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("all layer dims must be >= 1, got {all:?}")));
        }
        Ok(())
    }

    /// Layer widths from input to output, e.g. `2 -> 3 -> 1` gives `[2, 3, 1]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_dims.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden_dims);
        d.push(self.output_dim);
        d
    }
}

/// One fully connected layer. `w` has one row per output unit
/// (`out_dim x in_dim`), so the forward map is `act(x w^T + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl DenseLayer {
    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }
}

/// All layers of a feedforward network, input side first.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    /// Bitwise equality across every weight and bias.
    pub fn bit_eq(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.w.bit_eq(&b.w)
                    && a.b.len() == b.b.len()
                    && a.b.iter().zip(&b.b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Gradients for one layer, shaped like the layer itself.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> LayerGrads {
        LayerGrads {
            w: Matrix::zeros(layer.w.rows(), layer.w.cols()),
            b: vec![0.0; layer.b.len()],
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in self.w.data_mut() {
            *v *= s;
        }
        for v in &mut self.b {
            *v *= s;
        }
    }

    pub fn add_in_place(&mut self, other: &LayerGrads) {
        self.w.add_in_place(&other.w);
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }
}

/// Draws one layer's weights uniform in `[-s, +s]` with
/// `s = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
pub fn init_layer(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> DenseLayer {
    let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.random_range(-s..=s)).collect();
    DenseLayer {
        w: Matrix::from_vec(out_dim, in_dim, data).expect("init weights are finite by construction"),
        b: vec![0.0; out_dim],
    }
}

/// Seeded initialization of a full network. Identical `(spec, seed)`
/// yields bit-identical parameters.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<MlpParams> {
    spec.validate()?;
    let mut rng = seeding::rng_for(seed, seeding::streams::INIT_EXTRACTOR);
    let dims = spec.dims();
    let layers = dims
        .windows(2)
        .map(|pair| init_layer(pair[0], pair[1], &mut rng))
        .collect();
    Ok(MlpParams { layers })
}

/// `out = act(x w^T + b)` rowwise; `x` is `batch x in_dim`.
pub fn dense_forward(x: &Matrix, layer: &DenseLayer, act: Activation) -> Result<Matrix> {
    if x.cols() != layer.in_dim() {
        return Err(Error::Dim(format!(
            "dense_forward: input has {} columns, layer expects {}",
            x.cols(),
            layer.in_dim()
        )));
    }
    let mut out = x.matmul_nt(&layer.w);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (v, b) in row.iter_mut().zip(&layer.b) {
            *v = act.apply(*v + b);
        }
    }
    Ok(out)
}

/// Exact analytic gradients of `dense_forward`.
///
/// `output` must be the value returned by the matching forward call and
/// `upstream` the loss gradient w.r.t. that output. Returns gradients
/// w.r.t. the weights, the bias, and the layer input.
pub fn dense_backward(
    x: &Matrix,
    layer: &DenseLayer,
    act: Activation,
    output: &Matrix,
    upstream: &Matrix,
) -> Result<(LayerGrads, Matrix)> {
    if x.cols() != layer.in_dim() {
        return Err(Error::Dim(format!(
            "dense_backward: input has {} columns, layer expects {}",
            x.cols(),
            layer.in_dim()
        )));
    }
    if upstream.rows() != x.rows() || upstream.cols() != layer.out_dim() {
        return Err(Error::Dim(format!(
            "dense_backward: upstream is {}x{}, expected {}x{}",
            upstream.rows(),
            upstream.cols(),
            x.rows(),
            layer.out_dim()
        )));
    }
    // delta = upstream (.) act'(pre), with act' recovered from the output.
    let mut delta = upstream.clone();
    for r in 0..delta.rows() {
        let out_row = output.row(r);
        for (d, &o) in delta.row_mut(r).iter_mut().zip(out_row) {
            *d *= act.derivative_from_output(o);
        }
    }
    let grad_w = delta.matmul_tn(x); // out_dim x in_dim
    let mut grad_b = vec![0.0; layer.out_dim()];
    for r in 0..delta.rows() {
        for (g, d) in grad_b.iter_mut().zip(delta.row(r)) {
            *g += d;
        }
    }
    let grad_x = delta.matmul_nn(&layer.w); // batch x in_dim
    Ok((LayerGrads { w: grad_w, b: grad_b }, grad_x))
}

/// Runs a whole network forward, applying `act` after every layer
/// (including the last). Returns each layer's output; the final entry is
/// the network output. Used by the DANN feature extractor, where the
/// representation itself is the nonlinearity's output.
pub fn mlp_forward_all(x: &Matrix, params: &MlpParams, act: Activation) -> Result<Vec<Matrix>> {
    let mut outs = Vec::with_capacity(params.layers.len());
    let mut cur = x;
    for layer in &params.layers {
        let next = dense_forward(cur, layer, act)?;
        outs.push(next);
        cur = outs.last().expect("just pushed");
    }
    Ok(outs)
}

/// Backpropagates through a stack forwarded with `mlp_forward_all`,
/// returning per-layer gradients and the gradient w.r.t. the input.
pub fn mlp_backward_all(
    x: &Matrix,
    params: &MlpParams,
    act: Activation,
    outs: &[Matrix],
    upstream: &Matrix,
) -> Result<(Vec<LayerGrads>, Matrix)> {
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(params.layers.len());
    let mut up = upstream.clone();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let input = if i == 0 { x } else { &outs[i - 1] };
        let (g, gx) = dense_backward(input, layer, act, &outs[i], &up)?;
        grads.push(g);
        up = gx;
    }
    grads.reverse();
    Ok((grads, up))
}

/// Learning-rate schedule: `mu_t = lr0` (constant) or
/// `mu_t = lr0 / (1 + alpha * t)^beta` (inverse decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    InverseDecay { alpha: f64, beta: f64 },
}

/// SGD hyperparameters shared by every training loop in the crate.
///
/// `batch_size` must be even because adversarial batches are balanced
/// halves (source/target); keeping the constraint here means plain
/// classifier training consumes rows at the same granularity, which the
/// lambda = 0 equivalence tests rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr0: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    /// May be omitted in config files; experiment runners rewrite it
    /// from the top-level seed.
    #[serde(default)]
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::Config(format!("lr0 must be positive and finite, got {}", self.lr0)));
        }
        if let LrSchedule::InverseDecay { alpha, beta } = self.schedule {
            if alpha < 0.0 || beta < 0.0 || !alpha.is_finite() || !beta.is_finite() {
                return Err(Error::Config(format!(
                    "inverse_decay needs alpha >= 0 and beta >= 0, got alpha={alpha}, beta={beta}"
                )));
            }
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch_size must be even and >= 2, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate at global step `t` (0-based).
    pub fn lr_at(&self, t: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr0,
            LrSchedule::InverseDecay { alpha, beta } => self.lr0 / (1.0 + alpha * t as f64).powf(beta),
        }
    }
}

/// In-place update `p <- p - mu_t * g` over a flat parameter slice.
/// Rejects non-finite gradients so divergence is reported, not silently
/// propagated.
pub fn sgd_update_slice(p: &mut [f64], g: &[f64], t: usize, cfg: &SgdConfig) -> Result<()> {
    debug_assert_eq!(p.len(), g.len());
    let lr = cfg.lr_at(t);
    for (pv, &gv) in p.iter_mut().zip(g) {
        if !gv.is_finite() {
            return Err(Error::Training {
                at: format!("step {t}"),
                detail: format!("non-finite gradient {gv}"),
            });
        }
        *pv -= lr * gv;
    }
    Ok(())
}

/// One SGD step over a whole network: `p <- p - mu_t * g` for every
/// weight and bias.
pub fn sgd_step(params: &mut MlpParams, grads: &[LayerGrads], t: usize, cfg: &SgdConfig) -> Result<()> {
    if params.layers.len() != grads.len() {
        return Err(Error::Dim(format!(
            "sgd_step: {} layers but {} gradient blocks",
            params.layers.len(),
            grads.len()
        )));
    }
    for (layer, grad) in params.layers.iter_mut().zip(grads) {
        if layer.w.rows() != grad.w.rows() || layer.w.cols() != grad.w.cols() || layer.b.len() != grad.b.len() {
            return Err(Error::Dim("sgd_step: gradient shape does not match parameters".into()));
        }
        sgd_update_slice(layer.w.data_mut(), grad.w.data(), t, cfg)?;
        sgd_update_slice(&mut layer.b, &grad.b, t, cfg)?;
    }
    Ok(())
}
