//! ReLU multilayer perceptrons with manual backpropagation, Adagrad and the
//! two task heads (squared error, logistic).

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemv_row, matmul_a_bt, matmul_at_b, multiversion, Matrix};

pub const DEFAULT_LEARNING_RATE: f64 = 5e-3;
pub const DEFAULT_L1: f64 = 5e-5;
pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_BATCH_SIZE: usize = 256;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

/// Pairs a task with its link function and loss. Classification models emit
/// logits (inverse-sigmoid link), regression models emit the prediction
/// directly (identity link).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskHead {
    pub task: Task,
}

impl TaskHead {
    pub fn regression() -> Self {
        Self { task: Task::Regression }
    }

    pub fn classification() -> Self {
        Self {
            task: Task::Classification,
        }
    }

    /// g(y): identity or logit.
    pub fn link(&self, y: f64) -> f64 {
        match self.task {
            Task::Regression => y,
            Task::Classification => (y / (1.0 - y)).ln(),
        }
    }

    /// g⁻¹(z): identity or sigmoid.
    pub fn inverse_link(&self, z: f64) -> f64 {
        match self.task {
            Task::Regression => z,
            Task::Classification => sigmoid(z),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// d loss / d prediction, one entry per sample.
    pub grad: Vec<f64>,
}

/// Mean squared error (regression) or mean binary cross-entropy from logits
/// (classification).
pub fn loss(head: TaskHead, preds: &[f64], targets: &[f64]) -> Result<LossOutput> {
    if preds.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::domain("loss of an empty batch"));
    }
    let n = preds.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(preds.len());
    match head.task {
        Task::Regression => {
            for (&p, &y) in preds.iter().zip(targets) {
                let r = p - y;
                value += r * r;
                grad.push(2.0 * r / n);
            }
        }
        Task::Classification => {
            for (&z, &y) in preds.iter().zip(targets) {
                // log(1 + e^z) - y z, written to avoid overflow
                value += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                grad.push((sigmoid(z) - y) / n);
            }
        }
    }
    Ok(LossOutput { value: value / n, grad })
}

pub fn l1_penalty<'a>(weights: impl IntoIterator<Item = &'a f64>, lambda: f64) -> f64 {
    lambda * weights.into_iter().map(|w| w.abs()).sum::<f64>()
}

/// `grads += λ · sign(params)`, with sign(0) = 0.
pub fn add_l1_subgradient(grads: &mut [f64], params: &[f64], lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for (g, &w) in grads.iter_mut().zip(params) {
        if w > 0.0 {
            *g += lambda;
        } else if w < 0.0 {
            *g -= lambda;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    accumulators: Vec<f64>,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl AdagradState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self::with_epsilon(len, learning_rate, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(len: usize, learning_rate: f64, epsilon: f64) -> Self {
        Self {
            accumulators: vec![0.0; len],
            learning_rate,
            epsilon,
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accumulators
    }

    pub fn len(&self) -> usize {
        self.accumulators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accumulators.is_empty()
    }

    /// `G ← G + g²; w ← w − lr · g / (√G + ε)` over the whole state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::shape(format!(
                "adagrad state has {} entries, got {} params and {} grads",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step_at(0, params, grads);
        Ok(())
    }

    /// Update the segment of the state starting at `offset`.
    pub(crate) fn step_at(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        let acc = &mut self.accumulators[offset..offset + params.len()];
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for ((w, &g), a) in params.iter_mut().zip(grads).zip(acc) {
            *a += g * g;
            let denom = a.sqrt() + eps;
            if denom > 0.0 {
                *w -= lr * g / denom;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Activations kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Layer inputs: the batch, then each post-ReLU hidden layer.
    activations: Vec<Matrix>,
    pub output: Vec<f64>,
}

/// A ReLU network with a single linear output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    generation: u64,
}

#[derive(Serialize, Deserialize)]
struct MlpDoc {
    widths: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;

    fn try_from(doc: MlpDoc) -> Result<Self> {
        let mlp = Mlp::from_parts(doc.weights, doc.biases)?;
        if mlp.widths != doc.widths {
            return Err(Error::format("stored widths disagree with weight shapes"));
        }
        Ok(mlp)
    }
}

impl From<Mlp> for MlpDoc {
    fn from(m: Mlp) -> Self {
        MlpDoc {
            widths: m.widths,
            weights: m.weights,
            biases: m.biases,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.widths == other.widths && self.weights == other.weights && self.biases == other.biases
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::validation("an MLP needs at least input and output widths"));
    }
    if widths.contains(&0) {
        return Err(Error::validation("layer widths must be positive"));
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::validation("output width must be 1"));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `widths` runs from the input
    /// width to the output width (which must be 1).
    pub fn new(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        check_widths(widths)?;
        let mut weights = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let data = (0..w[0] * w[1]).map(|_| rng.uniform(-limit, limit)).collect();
            weights.push(Matrix::from_vec(w[0], w[1], data)?);
        }
        let biases = widths[1..].iter().map(|&w| vec![0.0; w]).collect();
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            generation: fresh_generation(),
        })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect(),
            biases: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            generation: fresh_generation(),
        })
    }

    pub fn from_parts(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::validation("need one bias vector per weight matrix"));
        }
        let mut widths = vec![weights[0].rows()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != *widths.last().unwrap() {
                return Err(Error::shape(format!("layer {i} input width does not chain")));
            }
            if b.len() != w.cols() {
                return Err(Error::shape(format!(
                    "layer {i} bias length {} != {}",
                    b.len(),
                    w.cols()
                )));
            }
            widths.push(w.cols());
        }
        check_widths(&widths)?;
        Ok(Self {
            widths,
            weights,
            biases,
            generation: fresh_generation(),
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }

    /// Mutable access to layer `l`; invalidates outstanding caches.
    pub fn layer_mut(&mut self, l: usize) -> (&mut Matrix, &mut Vec<f64>) {
        self.generation = fresh_generation();
        (&mut self.weights[l], &mut self.biases[l])
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.data()).map(|v| v.abs()).sum()
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_width() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn layer(&self, l: usize, input: &Matrix) -> Matrix {
        let w = &self.weights[l];
        let b = &self.biases[l];
        let hidden = l + 1 < self.weights.len();
        let mut out = Matrix::zeros(input.rows(), w.cols());
        dense_layer(input.data(), input.cols(), w.data(), b, hidden, out.data_mut());
        out
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let mut h = self.layer(0, batch);
        for l in 1..self.depth() {
            h = self.layer(l, &h);
        }
        Ok(h.into_vec())
    }

    pub fn forward_cached(&self, batch: &Matrix) -> Result<ForwardCache> {
        self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.depth());
        activations.push(batch.clone());
        for l in 0..self.depth() - 1 {
            let next = self.layer(l, activations.last().unwrap());
            activations.push(next);
        }
        let output = self.layer(self.depth() - 1, activations.last().unwrap()).into_vec();
        Ok(ForwardCache {
            generation: self.generation,
            activations,
            output,
        })
    }

    /// Gradients of Σᵢ upstream[i] · output[i] with respect to every
    /// parameter. The ReLU derivative at exactly zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<MlpGrads> {
        if cache.generation != self.generation {
            return Err(Error::State("parameters changed since the forward pass".into()));
        }
        let n = cache.output.len();
        if upstream.len() != n {
            return Err(Error::shape(format!(
                "{} upstream gradients for a batch of {n}",
                upstream.len()
            )));
        }
        let depth = self.depth();
        let mut weights = vec![Matrix::zeros(0, 0); depth];
        let mut biases = vec![Vec::new(); depth];
        let mut delta = Matrix::from_vec(n, 1, upstream.to_vec())?;
        for l in (0..depth).rev() {
            let a = &cache.activations[l];
            weights[l] = matmul_at_b(a, &delta)?;
            let mut db = vec![0.0; delta.cols()];
            for r in 0..n {
                for (d, &v) in db.iter_mut().zip(delta.row(r)) {
                    *d += v;
                }
            }
            biases[l] = db;
            if l > 0 {
                let mut prev = matmul_a_bt(&delta, &self.weights[l])?;
                for (p, &act) in prev.data_mut().iter_mut().zip(a.data()) {
                    if act <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(MlpGrads { weights, biases })
    }

    /// Adagrad update, tensors visited as weights₀, biases₀, weights₁, ...
    pub fn apply_adagrad(&mut self, grads: &MlpGrads, state: &mut AdagradState) -> Result<()> {
        if state.len() != self.param_count() {
            return Err(Error::shape("optimizer state does not match network size"));
        }
        let mut offset = 0;
        for l in 0..self.depth() {
            if grads.weights[l].shape() != self.weights[l].shape() || grads.biases[l].len() != self.biases[l].len() {
                return Err(Error::shape(format!("gradient shape mismatch at layer {l}")));
            }
            let w = self.weights[l].data_mut();
            state.step_at(offset, w, grads.weights[l].data());
            offset += w.len();
            let b = &mut self.biases[l];
            state.step_at(offset, b, &grads.biases[l]);
            offset += b.len();
        }
        self.generation = fresh_generation();
        Ok(())
    }
}

multiversion! {
    /// `out = relu?(input · w + b)` row by row.
    fn dense_layer(input: &[f64], in_cols: usize, w: &[f64], b: &[f64], hidden: bool, out: &mut [f64]) {
        let cols = b.len();
        if cols == 0 {
            return;
        }
        for (x, o) in input.chunks_exact(in_cols.max(1)).zip(out.chunks_exact_mut(cols)) {
            gemv_row(x, w, cols, o);
            for (v, &bj) in o.iter_mut().zip(b) {
                *v += bj;
                if hidden && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub l1: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            epsilon: DEFAULT_EPSILON,
            l1: DEFAULT_L1,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 100,
            patience: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l1 >= 0.0) || !(self.epsilon >= 0.0) {
            return Err(Error::Config(
                "learning_rate must be positive, l1 and epsilon nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data loss over the epoch's mini-batches (without the L1 term).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// A (features, targets) pair borrowed for training.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
}

impl<'a> Samples<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub(crate) fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Train a standalone network (the reference model) with mini-batch Adagrad
/// and L1 on the weights. Returns the validation-best parameters when
/// validation data is given, otherwise the final ones.
pub fn train_mlp(
    net: &Mlp,
    head: TaskHead,
    train: Samples<'_>,
    val: Option<Samples<'_>>,
    cfg: &TrainConfig,
) -> Result<(Mlp, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    let mut net = net.clone();
    let mut state = AdagradState::with_epsilon(net.param_count(), cfg.learning_rate, cfg.epsilon);
    let mut rng = Rng::new(cfg.seed);
    let mut best = (f64::INFINITY, net.clone());
    let mut trace = Vec::with_capacity(cfg.max_epochs);
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let mut total = 0.0;
        for batch in minibatches(train.len(), cfg.batch_size, &mut rng) {
            let x = train.x.select_rows(&batch);
            let y: Vec<f64> = batch.iter().map(|&i| train.y[i]).collect();
            let cache = net.forward_cached(&x)?;
            let out = loss(head, &cache.output, &y)?;
            let mut grads = net.backward(&cache, &out.grad)?;
            for (g, w) in grads.weights.iter_mut().zip(net.weights()) {
                add_l1_subgradient(g.data_mut(), w.data(), cfg.l1);
            }
            net.apply_adagrad(&grads, &mut state)?;
            total += out.value * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let val_loss = match val {
            Some(v) => Some(loss(head, &net.forward(v.x)?, v.y)?.value),
            None => None,
        };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if score < best.0 {
            best = (score, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let out = if val.is_some() { best.1 } else { net };
    Ok((out, trace))
}
