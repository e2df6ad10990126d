//! Minimal feed-forward classifier: dense layers with relu hidden units and a
//! softmax output head, reverse-mode gradients, momentum SGD, and full-run
//! prediction recording.
//!
//! Probabilities fed to a logarithm are floored at [`LOG_FLOOR`]; the loss
//! definitions themselves assume exact arithmetic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, derive_seed_indexed, seeded_rng};
use crate::scalar::{compensated_sum, Scalar};

/// Floor applied to probabilities inside `log` so losses stay finite.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Architecture of the classifier: layer widths from input dimension through
/// hidden widths to the class count. The output is always a softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl NetworkSpec {
    /// Relu MLP with the given widths (`input dim, hidden..., class count`).
    pub fn mlp(layer_widths: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Domain(
                "network needs at least input and output layers".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Domain("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    fn layer_count(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// One dense layer: weights are `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

/// All trainable parameters of a network. The same structure doubles as
/// gradient and velocity storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub layers: Vec<Dense<F>>,
}

impl<F: Scalar> Params<F> {
    /// He-style uniform fan-in initialization, biases zero, seeded.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(spec.layer_count());
        for l in 0..spec.layer_count() {
            let fan_in = spec.layer_widths[l];
            let fan_out = spec.layer_widths[l + 1];
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut rng = seeded_rng(derive_seed_indexed(seed, "layer-init", l as u64));
            let mut weights = Matrix::zeros(fan_out, fan_in);
            for w in weights.data_mut() {
                *w = F::of(rng.random_range(-limit..limit));
            }
            layers.push(Dense {
                weights,
                bias: vec![F::zero(); fan_out],
            });
        }
        Self { layers }
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = (0..spec.layer_count())
            .map(|l| Dense {
                weights: Matrix::zeros(spec.layer_widths[l + 1], spec.layer_widths[l]),
                bias: vec![F::zero(); spec.layer_widths[l + 1]],
            })
            .collect();
        Self { layers }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|d| d.weights.all_finite() && d.bias.iter().all(|b| b.is_finite()))
    }

    fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.layer_count()
            && self.layers.iter().enumerate().all(|(l, d)| {
                d.weights.rows() == spec.layer_widths[l + 1]
                    && d.weights.cols() == spec.layer_widths[l]
                    && d.bias.len() == spec.layer_widths[l + 1]
            })
    }
}

/// Optimizer hyperparameters and epoch/batch bookkeeping.
///
/// `momentum` uses the classical velocity form
/// `v <- momentum*v + grad + weight_decay*param`, `param <- param - lr*v`,
/// with weight decay coupled into the velocity update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Optional single mid-run decay: from `at_epoch` on, lr is multiplied by `factor`.
    #[serde(default)]
    pub lr_decay: Option<LrDecay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub at_epoch: usize,
    pub factor: f64,
}

impl TrainConfig {
    /// Desk-scale defaults: momentum 0.5, no weight decay, shuffling on.
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            lr,
            momentum: 0.5,
            weight_decay: 0.0,
            seed,
            shuffle: true,
            lr_decay: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Domain("lr must be positive and finite".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain("momentum must be in [0, 1)".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Domain("weight_decay must be nonnegative".into()));
        }
        if let Some(d) = &self.lr_decay {
            if d.at_epoch == 0 || !(d.factor.is_finite() && d.factor > 0.0) {
                return Err(Error::Domain("lr_decay must have epoch >= 1, factor > 0".into()));
            }
        }
        Ok(())
    }

    /// Learning rate in effect at a 1-based epoch.
    pub fn effective_lr(&self, epoch: usize) -> f64 {
        match &self.lr_decay {
            Some(d) if epoch >= d.at_epoch => self.lr * d.factor,
            _ => self.lr,
        }
    }
}

/// Training targets: hard labels in `{1..c}` or soft rows on the simplex.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, F> {
    Hard(&'a [usize]),
    Soft(&'a Matrix<F>),
}

impl<F: Scalar> Targets<'_, F> {
    fn len(&self) -> usize {
        match self {
            Targets::Hard(l) => l.len(),
            Targets::Soft(m) => m.rows(),
        }
    }

    fn validate(&self, n: usize, c: usize) -> Result<()> {
        match self {
            Targets::Hard(labels) => {
                if labels.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} labels for {} rows",
                        labels.len(),
                        n
                    )));
                }
                for &y in *labels {
                    check_label(y, c)?;
                }
            }
            Targets::Soft(soft) => {
                if soft.rows() != n || soft.cols() != c {
                    return Err(Error::Dimension(format!(
                        "soft labels {}x{} for {} rows, {} classes",
                        soft.rows(),
                        soft.cols(),
                        n,
                        c
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_label(label: usize, c: usize) -> Result<()> {
    if label == 0 || label > c {
        return Err(Error::Domain(format!(
            "label {label} out of range 1..={c}"
        )));
    }
    Ok(())
}

/// Per-epoch softmax outputs on the full training set, `t = 1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace<F> {
    epochs: Vec<Matrix<F>>,
}

impl<F: Scalar> PredictionTrace<F> {
    pub fn new(epochs: Vec<Matrix<F>>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::Domain("trace needs at least one epoch".into()));
        }
        let (n, c) = (epochs[0].rows(), epochs[0].cols());
        if epochs.iter().any(|m| m.rows() != n || m.cols() != c) {
            return Err(Error::Dimension("trace epochs have mixed shapes".into()));
        }
        for (t, m) in epochs.iter().enumerate() {
            if max_row_sum_error(m) > F::of(1e-6) || m.data().iter().any(|&v| v < F::zero()) {
                return Err(Error::Domain(format!(
                    "trace epoch {} has rows off the probability simplex",
                    t + 1
                )));
            }
        }
        Ok(Self { epochs })
    }

    /// Number of recorded epochs (`T`).
    pub fn epoch_count(&self) -> usize {
        self.epochs.len()
    }

    /// Instance count (`n`).
    pub fn len(&self) -> usize {
        self.epochs[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_count(&self) -> usize {
        self.epochs[0].cols()
    }

    /// Outputs of epoch `t` (0-based; epoch `t+1` in 1-based terms).
    pub fn epoch(&self, t: usize) -> &Matrix<F> {
        &self.epochs[t]
    }

    /// Mean prediction over epochs: `sum_t S^t / T`.
    pub fn mean(&self) -> Matrix<F> {
        let (n, c) = (self.len(), self.class_count());
        let inv_t = F::one() / F::of_usize(self.epoch_count());
        let mut out = Matrix::zeros(n, c);
        for m in &self.epochs {
            for (o, &v) in out.data_mut().iter_mut().zip(m.data()) {
                *o += v;
            }
        }
        for o in out.data_mut() {
            *o *= inv_t;
        }
        out
    }
}

/// Passed to the per-epoch hook during training.
pub struct EpochSnapshot<'a, F> {
    /// 1-based epoch index.
    pub epoch: usize,
    pub params: &'a Params<F>,
    /// Full-dataset softmax outputs recorded for this epoch.
    pub probs: &'a Matrix<F>,
}

fn softmax_row<F: Scalar>(logits: &mut [F]) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

fn affine<F: Scalar>(input: &Matrix<F>, layer: &Dense<F>) -> Matrix<F> {
    let (n, out_dim, in_dim) = (input.rows(), layer.weights.rows(), layer.weights.cols());
    let mut out = Matrix::zeros(n, out_dim);
    for i in 0..n {
        let x = input.row(i);
        let row = out.row_mut(i);
        for (o, r) in row.iter_mut().enumerate() {
            let w = layer.weights.row(o);
            let mut acc = layer.bias[o];
            for k in 0..in_dim {
                acc += w[k] * x[k];
            }
            *r = acc;
        }
    }
    out
}

/// Activations after every layer: `[a_1, ..., a_L]` where the last entry is
/// the softmax output. The input itself is not stored.
fn forward_cached<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    features: &Matrix<F>,
) -> Result<Vec<Matrix<F>>> {
    spec.validate()?;
    if features.cols() != spec.input_dim() {
        return Err(Error::Dimension(format!(
            "features have {} columns, spec input width is {}",
            features.cols(),
            spec.input_dim()
        )));
    }
    if !params.matches(spec) {
        return Err(Error::Dimension("params do not match spec".into()));
    }
    let last = params.layers.len() - 1;
    let mut acts = Vec::with_capacity(params.layers.len());
    let mut current = features;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = affine(current, layer);
        if l == last {
            for i in 0..z.rows() {
                softmax_row(z.row_mut(i));
            }
        } else {
            for v in z.data_mut() {
                if *v < F::zero() {
                    *v = F::zero();
                }
            }
        }
        acts.push(z);
        current = acts.last().expect("just pushed");
    }
    Ok(acts)
}

/// Softmax outputs of the network, one probability row per input row.
pub fn forward<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    features: &Matrix<F>,
) -> Result<Matrix<F>> {
    Ok(forward_cached(params, spec, features)?
        .pop()
        .expect("at least one layer"))
}

fn clamped_ln<F: Scalar>(p: F) -> F {
    p.max(F::of(LOG_FLOOR)).ln()
}

/// Mean negative log-probability at the given hard labels.
pub fn ce_loss<F: Scalar>(probs: &Matrix<F>, labels: &[usize]) -> Result<F> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let c = probs.cols();
    let mut total = F::zero();
    for (i, &y) in labels.iter().enumerate() {
        check_label(y, c)?;
        total -= clamped_ln(probs.at(i, y - 1));
    }
    Ok(total / F::of_usize(labels.len()))
}

/// Mean cross-entropy against full soft-label rows; collapses to [`ce_loss`]
/// when the rows are one-hot.
pub fn soft_ce_loss<F: Scalar>(probs: &Matrix<F>, soft_labels: &Matrix<F>) -> Result<F> {
    if probs.rows() != soft_labels.rows() || probs.cols() != soft_labels.cols() {
        return Err(Error::Dimension(format!(
            "probs {}x{} vs soft labels {}x{}",
            probs.rows(),
            probs.cols(),
            soft_labels.rows(),
            soft_labels.cols()
        )));
    }
    let mut total = F::zero();
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let s = soft_labels.row(i);
        // Skip zero-weight entries so one-hot rows reproduce ce_loss exactly.
        for k in 0..p.len() {
            if s[k] != F::zero() {
                total -= s[k] * clamped_ln(p[k]);
            }
        }
    }
    Ok(total / F::of_usize(probs.rows()))
}

/// Loss and parameter gradients for one batch.
///
/// The softmax/cross-entropy pair differentiates to `(probs - targets) / |B|`
/// at the output, for hard and soft targets alike.
pub fn backward<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    features: &Matrix<F>,
    targets: Targets<'_, F>,
) -> Result<(F, Params<F>)> {
    if features.rows() == 0 {
        return Err(Error::Domain("batch must be nonempty".into()));
    }
    targets.validate(features.rows(), spec.class_count())?;
    let acts = forward_cached(params, spec, features)?;
    let probs = acts.last().expect("at least one layer");

    let loss = match targets {
        Targets::Hard(labels) => ce_loss(probs, labels)?,
        Targets::Soft(soft) => soft_ce_loss(probs, soft)?,
    };
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }

    let n = features.rows();
    let inv_n = F::one() / F::of_usize(n);
    let mut delta = probs.clone();
    match targets {
        Targets::Hard(labels) => {
            for (i, &y) in labels.iter().enumerate() {
                *delta.at_mut(i, y - 1) -= F::one();
            }
        }
        Targets::Soft(soft) => {
            for (d, &s) in delta.data_mut().iter_mut().zip(soft.data()) {
                *d -= s;
            }
        }
    }
    for d in delta.data_mut() {
        *d *= inv_n;
    }

    let mut grads = Params::zeros(spec);
    for l in (0..params.layers.len()).rev() {
        let input: &Matrix<F> = if l == 0 { features } else { &acts[l - 1] };
        let g = &mut grads.layers[l];
        for i in 0..n {
            let d = delta.row(i);
            let x = input.row(i);
            for (o, &dv) in d.iter().enumerate() {
                g.bias[o] += dv;
                let row = g.weights.row_mut(o);
                for (k, &xv) in x.iter().enumerate() {
                    row[k] += dv * xv;
                }
            }
        }
        if l > 0 {
            // delta_prev = (delta W_l) masked by relu'(a_{l-1}).
            let layer = &params.layers[l];
            let prev = &acts[l - 1];
            let mut next = Matrix::zeros(n, layer.weights.cols());
            for i in 0..n {
                let d = delta.row(i);
                let out = next.row_mut(i);
                for (o, &dv) in d.iter().enumerate() {
                    let w = layer.weights.row(o);
                    for (k, ov) in out.iter_mut().enumerate() {
                        *ov += dv * w[k];
                    }
                }
                for (k, ov) in out.iter_mut().enumerate() {
                    if prev.at(i, k) <= F::zero() {
                        *ov = F::zero();
                    }
                }
            }
            delta = next;
        }
    }
    Ok((loss, grads))
}

/// Gradient of the cross-entropy loss at `target_class` with respect to one
/// input row. Drives the signed-gradient boundary probe.
pub fn input_gradient<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    input: &[F],
    target_class: usize,
) -> Result<Vec<F>> {
    check_label(target_class, spec.class_count())?;
    let features = Matrix::from_vec(1, input.len(), input.to_vec())?;
    let acts = forward_cached(params, spec, &features)?;
    let probs = acts.last().expect("at least one layer");
    let mut delta: Vec<F> = probs.row(0).to_vec();
    delta[target_class - 1] -= F::one();
    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let mut next = vec![F::zero(); layer.weights.cols()];
        for (o, &dv) in delta.iter().enumerate() {
            let w = layer.weights.row(o);
            for (k, nv) in next.iter_mut().enumerate() {
                *nv += dv * w[k];
            }
        }
        if l > 0 {
            let prev = acts[l - 1].row(0);
            for (k, nv) in next.iter_mut().enumerate() {
                if prev[k] <= F::zero() {
                    *nv = F::zero();
                }
            }
        }
        delta = next;
    }
    Ok(delta)
}

/// One momentum-SGD update in place. `epoch` is 1-based and only selects the
/// effective learning rate.
pub fn sgd_step<F: Scalar>(
    params: &mut Params<F>,
    grads: &Params<F>,
    velocity: &mut Params<F>,
    config: &TrainConfig,
    epoch: usize,
) {
    let lr = F::of(config.effective_lr(epoch));
    let momentum = F::of(config.momentum);
    let wd = F::of(config.weight_decay);
    for ((p, g), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut velocity.layers)
    {
        for ((pw, &gw), vw) in p
            .weights
            .data_mut()
            .iter_mut()
            .zip(g.weights.data())
            .zip(v.weights.data_mut())
        {
            *vw = momentum * *vw + gw + wd * *pw;
            *pw -= lr * *vw;
        }
        for ((pb, &gb), vb) in p.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
            *vb = momentum * *vb + gb + wd * *pb;
            *pb -= lr * *vb;
        }
    }
}

/// Mini-batch SGD for `config.epochs` epochs from a fresh seeded
/// initialization, recording full-dataset outputs after every epoch.
pub fn train_epochs<F: Scalar>(
    features: &Matrix<F>,
    targets: Targets<'_, F>,
    spec: &NetworkSpec,
    config: &TrainConfig,
    hook: impl FnMut(&EpochSnapshot<'_, F>),
) -> Result<(Params<F>, PredictionTrace<F>)> {
    let params = Params::init(spec, derive_seed(config.seed, "nn-init"));
    train_epochs_from(params, features, targets, spec, config, hook)
}

/// As [`train_epochs`], but continuing from the given parameters (warm start).
pub fn train_epochs_from<F: Scalar>(
    mut params: Params<F>,
    features: &Matrix<F>,
    targets: Targets<'_, F>,
    spec: &NetworkSpec,
    config: &TrainConfig,
    mut hook: impl FnMut(&EpochSnapshot<'_, F>),
) -> Result<(Params<F>, PredictionTrace<F>)> {
    spec.validate()?;
    config.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(Error::Domain("dataset must be nonempty".into()));
    }
    if targets.len() != n {
        return Err(Error::Dimension("targets do not match dataset".into()));
    }
    targets.validate(n, spec.class_count())?;
    if config.batch_size > n {
        return Err(Error::Domain(format!(
            "batch_size {} exceeds dataset size {n}",
            config.batch_size
        )));
    }
    if !params.matches(spec) {
        return Err(Error::Dimension("initial params do not match spec".into()));
    }

    let mut velocity = Params::zeros(spec);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            let mut rng = seeded_rng(derive_seed_indexed(config.seed, "epoch-shuffle", epoch as u64));
            indices.shuffle(&mut rng);
        }
        for (b, batch) in indices.chunks(config.batch_size).enumerate() {
            let bx = features.select_rows(batch);
            let owned_labels;
            let owned_soft;
            let batch_targets = match targets {
                Targets::Hard(labels) => {
                    owned_labels = batch.iter().map(|&i| labels[i]).collect::<Vec<_>>();
                    Targets::Hard(owned_labels.as_slice())
                }
                Targets::Soft(soft) => {
                    owned_soft = soft.select_rows(batch);
                    Targets::Soft(&owned_soft)
                }
            };
            let (_, grads) =
                backward(&params, spec, &bx, batch_targets).map_err(|e| match e {
                    Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch, batch: b },
                    other => other,
                })?;
            sgd_step(&mut params, &grads, &mut velocity, config, epoch);
        }
        // Post-epoch recording on the full set, evaluation mode.
        let probs = forward(&params, spec, features)?;
        hook(&EpochSnapshot {
            epoch,
            params: &params,
            probs: &probs,
        });
        trace.push(probs);
    }

    let trace = PredictionTrace::new(trace)?;
    Ok((params, trace))
}

/// Mean simplex deviation of a probability matrix, for tests and validation.
pub fn max_row_sum_error<F: Scalar>(probs: &Matrix<F>) -> F {
    probs
        .iter_rows()
        .map(|r| (compensated_sum(r.iter().copied()) - F::one()).abs())
        .fold(F::zero(), F::max)
}
