//! Feed-forward network assembly and training.
//!
//! Networks are ordered stacks of fully-connected layers (dense,
//! tensor-train, or low-rank factored) and elementwise ReLU, trained with
//! softmax cross-entropy and SGD with momentum and L2 regularization.
//! Activations flow as column-major `features x batch` matrices.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layer::{LayerGradients, TtLayer};

/// Number of samples evaluated per forward pass in [`evaluate`].
const EVAL_BATCH: usize = 256;

fn check_finite(name: &str, data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} contains a non-finite entry")));
    }
    Ok(())
}

fn add_bias(y: &mut DMatrix<f64>, bias: &[f64]) {
    for mut col in y.column_iter_mut() {
        for (v, b) in col.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

fn bias_gradient(dy: &DMatrix<f64>) -> Vec<f64> {
    (0..dy.nrows()).map(|i| dy.row(i).sum()).collect()
}

/// Fully-connected layer `y = W x + b` with an explicit dense weight
/// matrix, `W` of size `M x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weight: DMatrix<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: DMatrix<f64>, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weight.nrows()
            )));
        }
        check_finite("weight", weight.as_slice())?;
        check_finite("bias", &bias)?;
        Ok(DenseLayer { weight, bias })
    }

    /// Random layer: weight entries i.i.d. `N(0, sigma^2)`, bias zero.
    pub fn init_gaussian<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("invalid sigma: {e}")))?;
        let weight = DMatrix::from_fn(rows, cols, |_, _| normal.sample(rng));
        DenseLayer::new(weight, vec![0.0; rows])
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.weight.ncols() {
            return Err(Error::shape(format!(
                "input has {} rows, layer expects {}",
                x.nrows(),
                self.weight.ncols()
            )));
        }
        let mut y = &self.weight * x;
        add_bias(&mut y, &self.bias);
        Ok(y)
    }

    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> (LayerGradient, DMatrix<f64>) {
        let dw = dy * x.transpose();
        let db = bias_gradient(dy);
        let dx = self.weight.transpose() * dy;
        (
            LayerGradient::Dense {
                weight: dw,
                bias: db,
            },
            dx,
        )
    }
}

/// Two chained dense maps `y = L (R x) + b` with a shared inner dimension
/// `r`, so the product `L R` has matrix rank at most `r`. Serves as the
/// low-rank baseline a tensor-train layer is compared against at matched
/// parameter budget.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRankBottleneck {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    bias: Vec<f64>,
}

impl MatrixRankBottleneck {
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>, bias: Vec<f64>) -> Result<Self> {
        if left.ncols() != right.nrows() {
            return Err(Error::shape(format!(
                "inner dimensions disagree: left is {}x{}, right is {}x{}",
                left.nrows(),
                left.ncols(),
                right.nrows(),
                right.ncols()
            )));
        }
        if left.ncols() == 0 {
            return Err(Error::invalid("inner rank must be at least 1"));
        }
        if bias.len() != left.nrows() {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                left.nrows()
            )));
        }
        check_finite("left factor", left.as_slice())?;
        check_finite("right factor", right.as_slice())?;
        check_finite("bias", &bias)?;
        Ok(MatrixRankBottleneck { left, right, bias })
    }

    /// Random factors with i.i.d. `N(0, sigma^2)` entries, bias zero.
    pub fn init_gaussian<R: Rng + ?Sized>(
        rows: usize,
        rank: usize,
        cols: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("invalid sigma: {e}")))?;
        let left = DMatrix::from_fn(rows, rank, |_, _| normal.sample(rng));
        let right = DMatrix::from_fn(rank, cols, |_, _| normal.sample(rng));
        MatrixRankBottleneck::new(left, right, vec![0.0; rows])
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.left.len() + self.right.len() + self.bias.len()
    }

    fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.right.ncols() {
            return Err(Error::shape(format!(
                "input has {} rows, layer expects {}",
                x.nrows(),
                self.right.ncols()
            )));
        }
        let mut y = &self.left * (&self.right * x);
        add_bias(&mut y, &self.bias);
        Ok(y)
    }

    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> (LayerGradient, DMatrix<f64>) {
        let z = &self.right * x;
        let d_left = dy * z.transpose();
        let dz = self.left.transpose() * dy;
        let d_right = &dz * x.transpose();
        let db = bias_gradient(dy);
        let dx = self.right.transpose() * dz;
        (
            LayerGradient::Bottleneck {
                left: d_left,
                right: d_right,
                bias: db,
            },
            dx,
        )
    }
}

/// One stage of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Tt(TtLayer),
    Dense(DenseLayer),
    Bottleneck(MatrixRankBottleneck),
    /// Elementwise `max(0, x)`; shape-preserving.
    Relu,
}

impl Layer {
    /// Expected input width, or `None` for shape-preserving layers.
    pub fn in_dim(&self) -> Option<usize> {
        match self {
            Layer::Tt(l) => Some(l.shape().ncols()),
            Layer::Dense(l) => Some(l.weight.ncols()),
            Layer::Bottleneck(l) => Some(l.right.ncols()),
            Layer::Relu => None,
        }
    }

    /// Produced output width, or `None` for shape-preserving layers.
    pub fn out_dim(&self) -> Option<usize> {
        match self {
            Layer::Tt(l) => Some(l.shape().nrows()),
            Layer::Dense(l) => Some(l.weight.nrows()),
            Layer::Bottleneck(l) => Some(l.left.nrows()),
            Layer::Relu => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Tt(l) => l.param_count(),
            Layer::Dense(l) => l.param_count(),
            Layer::Bottleneck(l) => l.param_count(),
            Layer::Relu => 0,
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Layer::Tt(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Bottleneck(l) => l.forward(x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
        }
    }

    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>) -> Result<(LayerGradient, DMatrix<f64>)> {
        match self {
            Layer::Tt(l) => {
                let grads = l.backward(x, dy)?;
                let dx = grads.input.clone();
                Ok((LayerGradient::Tt(grads), dx))
            }
            Layer::Dense(l) => Ok(l.backward(x, dy)),
            Layer::Bottleneck(l) => Ok(l.backward(x, dy)),
            Layer::Relu => {
                let dx = dy.zip_map(x, |g, v| if v > 0.0 { g } else { 0.0 });
                Ok((LayerGradient::Relu, dx))
            }
        }
    }
}

/// Gradient of the loss with respect to one layer's parameters, summed
/// over the batch. Mirrors the [`Layer`] variants.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGradient {
    Tt(LayerGradients),
    Dense {
        weight: DMatrix<f64>,
        bias: Vec<f64>,
    },
    Bottleneck {
        left: DMatrix<f64>,
        right: DMatrix<f64>,
        bias: Vec<f64>,
    },
    Relu,
}

impl LayerGradient {
    fn param_slices(&self) -> Vec<&[f64]> {
        match self {
            LayerGradient::Tt(g) => g.param_slices(),
            LayerGradient::Dense { weight, bias } => vec![weight.as_slice(), bias],
            LayerGradient::Bottleneck { left, right, bias } => {
                vec![left.as_slice(), right.as_slice(), bias]
            }
            LayerGradient::Relu => Vec::new(),
        }
    }
}

/// Ordered layer stack with validated dimension chaining.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a network needs at least one layer"));
        }
        let mut width: Option<usize> = None;
        for (k, layer) in layers.iter().enumerate() {
            if let (Some(prev), Some(expected)) = (width, layer.in_dim()) {
                if prev != expected {
                    return Err(Error::shape(format!(
                        "layer {k} expects {expected} inputs but layer {} produces {prev}",
                        k - 1
                    )));
                }
            }
            if let Some(out) = layer.out_dim() {
                width = Some(out);
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, k: usize) -> &Layer {
        &self.layers[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut Layer {
        &mut self.layers[k]
    }

    /// Input width of the first size-changing layer, if any.
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| l.in_dim())
    }

    /// Output width of the last size-changing layer, if any.
    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| l.out_dim())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Every trainable parameter array in a fixed order: layers front to
    /// back, each contributing its arrays as in [`TtLayer::param_slices`]
    /// (dense: weight then bias; bottleneck: left, right, bias).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Tt(l) => out.extend(l.param_slices()),
                Layer::Dense(l) => {
                    out.push(l.weight.as_slice());
                    out.push(l.bias.as_slice());
                }
                Layer::Bottleneck(l) => {
                    out.push(l.left.as_slice());
                    out.push(l.right.as_slice());
                    out.push(l.bias.as_slice());
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Mutable counterpart of [`Network::param_slices`], same order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Tt(l) => out.extend(l.param_slices_mut()),
                Layer::Dense(l) => {
                    out.push(l.weight.as_mut_slice());
                    out.push(l.bias.as_mut_slice());
                }
                Layer::Bottleneck(l) => {
                    out.push(l.left.as_mut_slice());
                    out.push(l.right.as_mut_slice());
                    out.push(l.bias.as_mut_slice());
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Batch forward pass; `x` is `features x batch`.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass that keeps each layer's input for the backward pass.
    pub fn forward_trace(&self, x: &DMatrix<f64>) -> Result<ForwardTrace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok(ForwardTrace {
            inputs,
            logits: cur,
        })
    }

    /// Backward pass through a recorded trace. `dlogits` is the gradient
    /// of the scalar loss with respect to the traced logits; parameter
    /// gradients come back summed over the batch, in layer order.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &DMatrix<f64>) -> Result<NetworkGradients> {
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "trace covers {} layers, network has {}",
                trace.inputs.len(),
                self.layers.len()
            )));
        }
        if dlogits.shape() != trace.logits.shape() {
            return Err(Error::shape(format!(
                "logit gradient is {}x{}, logits are {}x{}",
                dlogits.nrows(),
                dlogits.ncols(),
                trace.logits.nrows(),
                trace.logits.ncols()
            )));
        }
        let mut per_layer = vec![LayerGradient::Relu; self.layers.len()];
        let mut dy = dlogits.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let (grad, dx) = layer.backward(&trace.inputs[k], &dy)?;
            per_layer[k] = grad;
            dy = dx;
        }
        Ok(NetworkGradients {
            layers: per_layer,
            input: dy,
        })
    }
}

/// Activations recorded by [`Network::forward_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    inputs: Vec<DMatrix<f64>>,
    logits: DMatrix<f64>,
}

impl ForwardTrace {
    /// Input that reached layer `k`.
    pub fn input(&self, k: usize) -> &DMatrix<f64> {
        &self.inputs[k]
    }

    pub fn logits(&self) -> &DMatrix<f64> {
        &self.logits
    }
}

/// Loss gradients for every layer of a [`Network`], plus the gradient
/// with respect to the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGradient>,
    pub input: DMatrix<f64>,
}

impl NetworkGradients {
    /// Gradient arrays in the order of [`Network::param_slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|g| g.param_slices()).collect()
    }
}

/// Mean softmax cross-entropy over a batch of logit columns, and its
/// gradient with respect to the logits.
///
/// The loss is `mean_b of -log softmax(logits[., b])[labels[b]]`, computed
/// with max-subtraction for stability; the gradient is
/// `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DMatrix<f64>)> {
    let (classes, batch) = logits.shape();
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 || classes == 0 {
        return Err(Error::invalid("empty logit matrix"));
    }
    let scale = 1.0 / batch as f64;
    let mut dlogits = DMatrix::zeros(classes, batch);
    let mut loss = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: classes,
            });
        }
        let col = logits.column(j);
        let max = col.max();
        let mut sum = 0.0;
        for i in 0..classes {
            sum += (col[i] - max).exp();
        }
        loss += (max + sum.ln() - col[label]) * scale;
        for i in 0..classes {
            let p = (col[i] - max).exp() / sum;
            dlogits[(i, j)] = (p - if i == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss, dlogits))
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax_column(col: nalgebra::DVectorView<'_, f64>) -> usize {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i] > col[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per sample, by logit argmax.
pub fn predict(net: &Network, inputs: &DMatrix<f64>) -> Result<Vec<usize>> {
    let total = inputs.ncols();
    let mut preds = Vec::with_capacity(total);
    let mut start = 0;
    while start < total {
        let width = EVAL_BATCH.min(total - start);
        let logits = net.forward(&inputs.columns(start, width).into_owned())?;
        for j in 0..width {
            preds.push(argmax_column(logits.column(j)));
        }
        start += width;
    }
    Ok(preds)
}

/// Fraction of samples whose predicted class differs from the label.
pub fn evaluate(net: &Network, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    if labels.len() != inputs.ncols() {
        return Err(Error::shape(format!(
            "{} labels for {} samples",
            labels.len(),
            inputs.ncols()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let preds = predict(net, inputs)?;
    let wrong = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| p != l)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` at the start of each listed epoch;
    /// factors compound.
    StepDecay { factor: f64, epochs: Vec<usize> },
}

/// SGD with momentum and L2 regularization.
///
/// Per parameter array `w` with gradient `grad`:
/// `g = grad + weight_decay * w`, `v = momentum * v - lr * g`,
/// `w = w + v`. The velocity buffers mirror every trainable array of the
/// network the state was created for.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentumState {
    base_rate: f64,
    schedule: LrSchedule,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentumState {
    pub fn new(net: &Network, base_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !base_rate.is_finite() || base_rate < 0.0 {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        if !weight_decay.is_finite() || weight_decay < 0.0 {
            return Err(Error::invalid("weight decay must be finite and non-negative"));
        }
        let velocity = net
            .param_slices()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Ok(SgdMomentumState {
            base_rate,
            schedule: LrSchedule::Constant,
            momentum,
            weight_decay,
            velocity,
        })
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Result<Self> {
        if let LrSchedule::StepDecay { factor, .. } = &schedule {
            if !factor.is_finite() || *factor <= 0.0 {
                return Err(Error::invalid("decay factor must be positive"));
            }
        }
        self.schedule = schedule;
        Ok(self)
    }

    /// Rebuilds a state from raw parts, e.g. when resuming from a saved
    /// run. Velocity buffers must later match the network they are
    /// stepped against.
    pub fn from_parts(
        base_rate: f64,
        schedule: LrSchedule,
        momentum: f64,
        weight_decay: f64,
        velocity: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !base_rate.is_finite() || base_rate < 0.0 {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        if !weight_decay.is_finite() || weight_decay < 0.0 {
            return Err(Error::invalid("weight decay must be finite and non-negative"));
        }
        SgdMomentumState {
            base_rate,
            schedule: LrSchedule::Constant,
            momentum,
            weight_decay,
            velocity,
        }
        .with_schedule(schedule)
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    /// Velocity buffers in parameter order.
    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Rate in effect for a given epoch under the schedule.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match &self.schedule {
            LrSchedule::Constant => self.base_rate,
            LrSchedule::StepDecay { factor, epochs } => {
                let hits = epochs.iter().filter(|&&e| e <= epoch).count();
                self.base_rate * factor.powi(hits as i32)
            }
        }
    }

    /// One update of every parameter array from matching gradients.
    pub fn step(&mut self, net: &mut Network, grads: &NetworkGradients, lr: f64) -> Result<()> {
        let mut params = net.param_slices_mut();
        let grad_slices = grads.param_slices();
        if params.len() != self.velocity.len() || grad_slices.len() != self.velocity.len() {
            return Err(Error::shape(format!(
                "{} parameter arrays, {} gradient arrays, {} velocity buffers",
                params.len(),
                grad_slices.len(),
                self.velocity.len()
            )));
        }
        for ((w, g), v) in params
            .iter_mut()
            .zip(&grad_slices)
            .zip(self.velocity.iter_mut())
        {
            if w.len() != g.len() || w.len() != v.len() {
                return Err(Error::shape(format!(
                    "parameter array of {} entries paired with gradient of {} and velocity of {}",
                    w.len(),
                    g.len(),
                    v.len()
                )));
            }
            for k in 0..w.len() {
                let adjusted = g[k] + self.weight_decay * w[k];
                v[k] = self.momentum * v[k] - lr * adjusted;
                w[k] += v[k];
            }
        }
        Ok(())
    }
}

/// Metrics from one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// Mean cross-entropy over all samples, measured before each update.
    pub loss: f64,
    /// Fraction of training samples misclassified, measured before each
    /// update.
    pub error_rate: f64,
    /// Wall-clock duration of the epoch.
    pub seconds: f64,
}

/// One pass over `inputs` (`features x samples`) in shuffled minibatches,
/// updating the network after every batch. The shuffle draws from `rng`,
/// so a seeded generator makes epochs reproducible. Fails if the loss
/// stops being finite.
pub fn train_epoch<R: Rng + ?Sized>(
    net: &mut Network,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    opt: &mut SgdMomentumState,
    epoch: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<EpochMetrics> {
    let samples = inputs.ncols();
    if labels.len() != samples {
        return Err(Error::shape(format!(
            "{} labels for {samples} samples",
            labels.len()
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let start = Instant::now();
    let lr = opt.learning_rate(epoch);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(rng);

    let mut loss_sum = 0.0;
    let mut wrong = 0usize;
    for chunk in order.chunks(batch_size) {
        let x = DMatrix::from_fn(inputs.nrows(), chunk.len(), |i, j| inputs[(i, chunk[j])]);
        let batch_labels: Vec<usize> = chunk.iter().map(|&s| labels[s]).collect();
        let trace = net.forward_trace(&x)?;
        let (loss, dlogits) = softmax_xent(trace.logits(), &batch_labels)?;
        if !loss.is_finite() {
            return Err(Error::Computation(format!(
                "training loss became non-finite ({loss}) during epoch {epoch}"
            )));
        }
        loss_sum += loss * chunk.len() as f64;
        for (j, &label) in batch_labels.iter().enumerate() {
            if argmax_column(trace.logits().column(j)) != label {
                wrong += 1;
            }
        }
        let grads = net.backward(&trace, &dlogits)?;
        opt.step(net, &grads, lr)?;
    }
    Ok(EpochMetrics {
        loss: loss_sum / samples as f64,
        error_rate: wrong as f64 / samples as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}
