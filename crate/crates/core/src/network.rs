//! Stage two: the stacked network with a softmax head, trained by
//! mini-batch SGD with early stopping.
//!
//! Hidden layers carry no bias (the evolved layers never had one); only the
//! softmax head has a bias vector.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fitness::{argmax, ccr};
use crate::genome::LayerPhenotype;

/// Hidden layers plus a `C x k` softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStack {
    pub layers: Vec<LayerPhenotype>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl NetworkStack {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head_weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(self.head_weights.ncols(), |l| l.input_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.input_dim() != width {
                return Err(Error::mismatch(format!("layer {i} input"), width, l.input_dim()));
            }
            width = l.units();
        }
        if self.head_weights.ncols() != width {
            return Err(Error::mismatch("head input", width, self.head_weights.ncols()));
        }
        if self.head_bias.len() != self.num_classes() {
            return Err(Error::mismatch("head bias", self.num_classes(), self.head_bias.len()));
        }
        let finite = self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .chain(self.head_weights.iter())
            .chain(self.head_bias.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("network has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Hidden-layer outputs for every layer, starting with the input itself.
    fn hidden_activations(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::mismatch("network input", self.input_dim(), x.ncols()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for l in &self.layers {
            let act = l.activation;
            let mut z = acts.last().expect("input pushed").dot(&l.weights.t());
            z.mapv_inplace(|v| act.apply(v));
            acts.push(z);
        }
        Ok(acts)
    }

    fn logits(&self, top: ArrayView2<'_, f64>) -> Array2<f64> {
        top.dot(&self.head_weights.t()) + &self.head_bias
    }
}

/// Uniform bound `4 sqrt(6) / sqrt(fan_in + fan_out)` used for the head.
pub fn head_init_bound(fan_in: usize, fan_out: usize) -> f64 {
    4.0 * 6f64.sqrt() / ((fan_in + fan_out) as f64).sqrt()
}

/// Copies the evolved layers and attaches a freshly initialized head
/// (uniform weights within [`head_init_bound`], zero bias).
pub fn assemble<R: Rng + ?Sized>(layers: &[LayerPhenotype], num_classes: usize, rng: &mut R) -> Result<NetworkStack> {
    if layers.is_empty() {
        return Err(Error::InvalidDimension {
            got: 0,
            reason: "a network needs at least one hidden layer",
        });
    }
    if num_classes < 2 {
        return Err(Error::InvalidDimension {
            got: num_classes,
            reason: "softmax head needs at least two classes",
        });
    }
    let k = layers.last().expect("non-empty").units();
    let bound = head_init_bound(k, num_classes);
    let head_weights = Array2::from_shape_simple_fn((num_classes, k), || rng.random_range(-bound..=bound));
    let stack = NetworkStack {
        layers: layers.to_vec(),
        head_weights,
        head_bias: Array1::zeros(num_classes),
    };
    stack.validate()?;
    Ok(stack)
}

/// A network with the same widths and activations as `layers` but
/// Glorot-uniform hidden weights (scaled by 4 for sigmoid layers).
pub fn random_like<R: Rng + ?Sized>(layers: &[LayerPhenotype], num_classes: usize, rng: &mut R) -> Result<NetworkStack> {
    let fresh: Vec<LayerPhenotype> = layers
        .iter()
        .map(|l| {
            let (k, n) = l.weights.dim();
            let gain = if l.activation == Activation::Sigmoid { 4.0 } else { 1.0 };
            let bound = gain * 6f64.sqrt() / ((n + k) as f64).sqrt();
            LayerPhenotype::new(Array2::from_shape_simple_fn((k, n), || rng.random_range(-bound..=bound)), l.activation)
        })
        .collect();
    assemble(&fresh, num_classes, rng)
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Class probabilities per row (max-subtracted softmax of the head logits).
pub fn softmax_forward(stack: &NetworkStack, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let acts = stack.hidden_activations(x)?;
    Ok(softmax_rows(stack.logits(acts.last().expect("input present").view())))
}

/// Mean negative log-probability of the true class, `log` clamped at 1e-12.
pub fn cross_entropy_loss(probs: ArrayView2<'_, f64>, y: &[usize]) -> Result<f64> {
    if probs.nrows() != y.len() {
        return Err(Error::mismatch("loss labels", probs.nrows(), y.len()));
    }
    if y.is_empty() {
        return Err(Error::DegenerateInput("loss of an empty batch".into()));
    }
    let c = probs.ncols();
    let mut total = 0.0;
    for (row, &label) in probs.axis_iter(Axis(0)).zip(y) {
        if label >= c {
            return Err(Error::IndexOutOfRange(format!("label {label} with {c} classes")));
        }
        total -= row[label].max(1e-12).ln();
    }
    Ok(total / y.len() as f64)
}

/// Gradients of the mean cross-entropy, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Array2<f64>>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

/// Exact back-propagated gradients of [`cross_entropy_loss`] for one batch.
pub fn backprop_gradients(stack: &NetworkStack, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<Gradients> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::mismatch("batch labels", x.nrows(), y.len()));
    }
    let c = stack.num_classes();
    if let Some(l) = y.iter().find(|&&l| l >= c) {
        return Err(Error::IndexOutOfRange(format!("label {l} with {c} classes")));
    }
    let acts = stack.hidden_activations(x)?;
    let top = acts.last().expect("input present");
    let mut delta = softmax_rows(stack.logits(top.view()));
    let scale = 1.0 / y.len() as f64;
    for (mut row, &label) in delta.axis_iter_mut(Axis(0)).zip(y) {
        row[label] -= 1.0;
        row *= scale;
    }
    let head_weights = delta.t().dot(top);
    let head_bias = delta.sum_axis(Axis(0));

    let mut back = delta.dot(&stack.head_weights);
    let mut layer_grads = vec![Array2::zeros((0, 0)); stack.depth()];
    for l in (0..stack.depth()).rev() {
        let layer = &stack.layers[l];
        let out = &acts[l + 1];
        ndarray::Zip::from(&mut back)
            .and(out)
            .for_each(|b, &o| *b *= layer.activation.derivative_from_output(o));
        layer_grads[l] = back.t().dot(&acts[l]);
        if l > 0 {
            back = back.dot(&layer.weights);
        }
    }
    Ok(Gradients {
        layers: layer_grads,
        head_weights,
        head_bias,
    })
}

/// Highest-probability class per row; ties go to the lowest index.
pub fn predict(stack: &NetworkStack, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let p = softmax_forward(stack, x)?;
    Ok(p.axis_iter(Axis(0)).map(|r| argmax(r.iter().copied())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// The tuning grid is {1e-4, 1e-3, 1e-2, 1e-1}; any positive rate is accepted.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping. 1 stops at the
    /// first non-improving epoch.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Train only the softmax head, keeping the evolved layers fixed.
    pub freeze_hidden: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 100,
            max_epochs: 50,
            patience: 3,
            validation_fraction: 0.1,
            seed: 0,
            freeze_hidden: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::Config {
                line: None,
                message: format!("training.{msg}"),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate: {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size: must be positive".into());
        }
        if self.patience == 0 {
            return bad("patience: must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction: {} not in (0, 1)", self.validation_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_ccr: f64,
    pub valid_ccr: f64,
    pub loss: f64,
}

/// Per-epoch metrics. Entry 0 is the network before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Rows of the input dataset held out for validation.
    pub validation_indices: Vec<usize>,
}

impl TrainHistory {
    /// `epoch,train_ccr,valid_ccr,loss` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_ccr,valid_ccr,loss")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{},{}", r.epoch, r.train_ccr, r.valid_ccr, r.loss)?;
        }
        Ok(())
    }

    pub fn max_valid_ccr(&self) -> f64 {
        self.epochs.iter().map(|r| r.valid_ccr).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn apply_step(stack: &mut NetworkStack, g: &Gradients, lr: f64, freeze_hidden: bool) {
    if !freeze_hidden {
        for (layer, gw) in stack.layers.iter_mut().zip(&g.layers) {
            layer.weights.scaled_add(-lr, gw);
        }
    }
    stack.head_weights.scaled_add(-lr, &g.head_weights);
    stack.head_bias.scaled_add(-lr, &g.head_bias);
}

fn epoch_metrics(stack: &NetworkStack, train: &Dataset, valid: &Dataset, epoch: usize) -> Result<EpochRecord> {
    let p = softmax_forward(stack, train.x.view())?;
    let loss = cross_entropy_loss(p.view(), &train.y)?;
    let train_pred: Vec<usize> = p.axis_iter(Axis(0)).map(|r| argmax(r.iter().copied())).collect();
    Ok(EpochRecord {
        epoch,
        train_ccr: ccr(&train_pred, &train.y)?,
        valid_ccr: ccr(&predict(stack, valid.x.view())?, &valid.y)?,
        loss,
    })
}

/// Mini-batch SGD with early stopping on a uniformly drawn validation split.
///
/// Training stops once `patience` consecutive epochs fail to beat the best
/// validation CCR, or after `max_epochs`; the parameters of the best epoch
/// (earliest on ties) are returned.
pub fn finetune<R: Rng + ?Sized>(
    stack: &NetworkStack,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(NetworkStack, TrainHistory)> {
    cfg.validate()?;
    stack.validate()?;
    if data.len() < cfg.batch_size {
        return Err(Error::Config {
            line: None,
            message: format!("training set of {} rows is smaller than batch_size {}", data.len(), cfg.batch_size),
        });
    }
    let n = data.len();
    let n_valid = ((cfg.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut validation_indices = order[..n_valid].to_vec();
    validation_indices.sort_unstable();
    let mut train_indices = order[n_valid..].to_vec();
    train_indices.sort_unstable();
    let valid = data.select(&validation_indices);
    let train = data.select(&train_indices);

    let mut current = stack.clone();
    let mut best = current.clone();
    let mut epochs = vec![epoch_metrics(&current, &train, &valid, 0)?];
    let mut best_epoch = 0;
    let mut best_valid = epochs[0].valid_ccr;
    let mut stale = 0;

    let mut batch_order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        batch_order.shuffle(rng);
        for chunk in batch_order.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.y[i]).collect();
            let g = backprop_gradients(&current, xb.view(), &yb)?;
            apply_step(&mut current, &g, cfg.learning_rate, cfg.freeze_hidden);
        }
        let rec = epoch_metrics(&current, &train, &valid, epoch)?;
        if !rec.loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {} at epoch {epoch}", rec.loss)));
        }
        let improved = rec.valid_ccr > best_valid;
        epochs.push(rec);
        if improved {
            best_valid = epochs[epoch].valid_ccr;
            best_epoch = epoch;
            best = current.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            validation_indices,
        },
    ))
}

/// Input found by activation maximization, with the unit's activation after
/// every step.
#[derive(Debug, Clone)]
pub struct ActivationMaximum {
    pub input: Array1<f64>,
    pub trace: Vec<f64>,
}

/// Projected gradient ascent on hidden unit `unit` of layer `depth`
/// (1-based) with respect to a unit-norm input.
pub fn activation_maximization<R: Rng + ?Sized>(
    stack: &NetworkStack,
    depth: usize,
    unit: usize,
    iters: usize,
    lr: f64,
    rng: &mut R,
) -> Result<ActivationMaximum> {
    if depth == 0 || depth > stack.depth() {
        return Err(Error::IndexOutOfRange(format!("depth {depth} of a {}-layer network", stack.depth())));
    }
    let width = stack.layers[depth - 1].units();
    if unit >= width {
        return Err(Error::IndexOutOfRange(format!("unit {unit} of a {width}-unit layer")));
    }
    let layers = &stack.layers[..depth];
    let n = stack.input_dim();
    let mut x = Array1::from_shape_simple_fn(n, || rng.sample::<f64, _>(StandardNormal));
    normalize(&mut x);

    let forward = |x: &Array1<f64>| -> Vec<Array1<f64>> {
        let mut outs = Vec::with_capacity(depth);
        let mut cur = x.clone();
        for l in layers {
            let act = l.activation;
            cur = l.weights.dot(&cur).mapv(|v| act.apply(v));
            outs.push(cur.clone());
        }
        outs
    };

    let mut trace = Vec::with_capacity(iters);
    let mut outs = forward(&x);
    for _ in 0..iters {
        let mut grad = Array1::zeros(width);
        grad[unit] = 1.0;
        for l in (0..depth).rev() {
            let layer = &layers[l];
            grad.zip_mut_with(&outs[l], |g, &o| *g *= layer.activation.derivative_from_output(o));
            grad = layer.weights.t().dot(&grad);
        }
        x.scaled_add(lr, &grad);
        normalize(&mut x);
        outs = forward(&x);
        trace.push(outs[depth - 1][unit]);
    }
    Ok(ActivationMaximum { input: x, trace })
}

fn normalize(x: &mut Array1<f64>) {
    let norm = x.dot(x).sqrt();
    if norm > 0.0 {
        *x /= norm;
    } else {
        x[0] = 1.0;
    }
}
