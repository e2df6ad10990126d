//! SEAL: retrain on soft labels obtained by averaging a network's softmax
//! outputs over a whole training run, iterated so labels self-correct.
//! Includes the per-instance correction metrics and a sampling oracle for the
//! oscillation approximation the averaging argument rests on.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::analysis::accuracy_from_probs;
use crate::data::{LabeledDataset, NoisyDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, NetworkSpec, Params, PredictionTrace, Targets, TrainConfig};
use crate::rng::{derive_seed_indexed, seeded_rng};
use crate::scalar::{compensated_sum, Scalar};

const SIMPLEX_TOL: f64 = 1e-6;

/// `n x c` soft targets; every row is a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels<F> {
    rows: Matrix<F>,
}

impl<F: Scalar> SoftLabels<F> {
    pub fn new(rows: Matrix<F>) -> Result<Self> {
        for (i, row) in rows.iter_rows().enumerate() {
            if row.iter().any(|&v| v < F::zero()) {
                return Err(Error::Domain(format!("soft label row {i} has negative mass")));
            }
            let sum = compensated_sum(row.iter().copied());
            if (sum - F::one()).abs() > F::of(SIMPLEX_TOL) {
                return Err(Error::Domain(format!(
                    "soft label row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    /// One-hot rows at the observed noisy labels (SEAL's iteration-0 state).
    pub fn from_noisy_onehot(noisy: &NoisyDataset<F>) -> Self {
        let mut rows = Matrix::zeros(noisy.len(), noisy.class_count());
        for (i, &y) in noisy.noisy_labels().iter().enumerate() {
            *rows.at_mut(i, y - 1) = F::one();
        }
        Self { rows }
    }

    /// Epoch average of a trace; rows stay on the simplex by convexity.
    pub fn from_trace_mean(trace: &PredictionTrace<F>) -> Result<Self> {
        Self::new(trace.mean())
    }

    pub fn rows(&self) -> &Matrix<F> {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_count(&self) -> usize {
        self.rows.cols()
    }

    /// CSV with 9 significant digits per cell, `c` columns, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.8e}", v.as_f64())).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Result<Vec<F>> = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map(F::of)
                        .map_err(|_| Error::Parse(format!("bad soft label `{f}`")))
                })
                .collect();
            rows.push(row?);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty soft label CSV".into()));
        }
        Self::new(Matrix::from_rows(&rows)?)
    }
}

/// Normalized L1 distance from a soft row to the clean one-hot label, anchored
/// so the noisy one-hot sits at 1. Only defined for flipped instances.
pub fn label_distance<F: Scalar>(soft_row: &[F], clean: usize, noisy: usize) -> Result<F> {
    let c = soft_row.len();
    for (name, y) in [("clean", clean), ("noisy", noisy)] {
        if y == 0 || y > c {
            return Err(Error::Domain(format!("{name} label {y} out of range 1..={c}")));
        }
    }
    if clean == noisy {
        return Err(Error::Domain(
            "label distance is undefined when the noisy label equals the clean label".into(),
        ));
    }
    let l1 = soft_row
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let target = if k + 1 == clean { F::one() } else { F::zero() };
            (v - target).abs()
        })
        .fold(F::zero(), |a, b| a + b);
    Ok(l1 / F::of(2.0))
}

/// Confidence that a label needs correction: the largest off-label mass and
/// its class, ties to the lowest index.
pub fn correction_confidence<F: Scalar>(soft_row: &[F], noisy: usize) -> Result<(F, usize)> {
    let c = soft_row.len();
    if noisy == 0 || noisy > c {
        return Err(Error::Domain(format!("noisy label {noisy} out of range 1..={c}")));
    }
    let mut best = usize::MAX;
    let mut best_v = F::neg_infinity();
    for (k, &v) in soft_row.iter().enumerate() {
        if k + 1 != noisy && v > best_v {
            best = k;
            best_v = v;
        }
    }
    Ok((best_v, best + 1))
}

/// Iteration schedule for a SEAL run.
#[derive(Debug, Clone, PartialEq)]
pub struct SealConfig {
    pub iterations: usize,
    /// When true, each iteration continues from the previous parameters
    /// instead of a fresh initialization.
    pub warm_start: bool,
}

impl SealConfig {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            warm_start: false,
        }
    }
}

/// Per-iteration record kept in [`SealState::history`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics<F> {
    pub iteration: usize,
    /// Mean label distance over flipped instances; needs clean labels.
    pub mean_distance: Option<F>,
    /// Final-epoch accuracy against the noisy training labels.
    pub train_acc: Option<F>,
    /// Highest per-epoch training accuracy seen in this iteration.
    pub peak_train_acc: Option<F>,
    /// Accuracy on the clean test set, when one is supplied.
    pub test_acc: Option<F>,
}

/// State after a SEAL run: the latest soft labels, the last trained model,
/// and the metric history including the iteration-0 baseline.
#[derive(Debug, Clone)]
pub struct SealState<F> {
    pub iteration: usize,
    pub soft_labels: SoftLabels<F>,
    pub params: Params<F>,
    pub history: Vec<IterationMetrics<F>>,
}

impl<F: Scalar> SealState<F> {
    /// Iterations whose final training accuracy fell below `ratio` of their
    /// running peak; a nonempty result suggests the epoch budget or learning
    /// rate should be revisited.
    pub fn convergence_warnings(&self, ratio: f64) -> Vec<usize> {
        self.history
            .iter()
            .filter_map(|m| match (m.train_acc, m.peak_train_acc) {
                (Some(a), Some(p)) if a.as_f64() < ratio * p.as_f64() => Some(m.iteration),
                _ => None,
            })
            .collect()
    }
}

/// One SEAL iteration: train a freshly initialized network against the
/// current soft labels (one-hot noisy labels when no prior is given) and
/// return the trained parameters with the epoch-averaged outputs.
pub fn seal_iteration<F: Scalar>(
    noisy: &NoisyDataset<F>,
    prior: Option<&SoftLabels<F>>,
    spec: &NetworkSpec,
    config: &TrainConfig,
) -> Result<(Params<F>, SoftLabels<F>)> {
    let (params, soft, _) = iterate(noisy, prior, None, spec, config)?;
    Ok((params, soft))
}

fn iterate<F: Scalar>(
    noisy: &NoisyDataset<F>,
    prior: Option<&SoftLabels<F>>,
    init: Option<Params<F>>,
    spec: &NetworkSpec,
    config: &TrainConfig,
) -> Result<(Params<F>, SoftLabels<F>, Vec<F>)> {
    let targets = match prior {
        Some(soft) => {
            if soft.len() != noisy.len() || soft.class_count() != noisy.class_count() {
                return Err(Error::Dimension(format!(
                    "prior soft labels {}x{} do not match dataset {}x{}",
                    soft.len(),
                    soft.class_count(),
                    noisy.len(),
                    noisy.class_count()
                )));
            }
            soft.rows().clone()
        }
        None => SoftLabels::from_noisy_onehot(noisy).rows().clone(),
    };
    let mut epoch_acc: Vec<F> = Vec::with_capacity(config.epochs);
    let noisy_labels = noisy.noisy_labels();
    let hook = |snap: &nn::EpochSnapshot<'_, F>| {
        if let Ok(acc) = accuracy_from_probs(snap.probs, noisy_labels) {
            epoch_acc.push(acc);
        }
    };
    let (params, trace) = match init {
        Some(p) => nn::train_epochs_from(
            p,
            noisy.features(),
            Targets::Soft(&targets),
            spec,
            config,
            hook,
        )?,
        None => nn::train_epochs(noisy.features(), Targets::Soft(&targets), spec, config, hook)?,
    };
    let soft = SoftLabels::from_trace_mean(&trace)?;
    Ok((params, soft, epoch_acc))
}

/// Mean label distance over flipped instances, when the dataset knows them.
pub fn mean_flipped_distance<F: Scalar>(
    soft: &SoftLabels<F>,
    noisy: &NoisyDataset<F>,
) -> Result<Option<F>> {
    let (Some(clean), Some(mask)) = (noisy.clean_labels(), noisy.flip_mask()) else {
        return Ok(None);
    };
    let mut total = F::zero();
    let mut count = 0usize;
    for i in 0..noisy.len() {
        if mask[i] {
            total += label_distance(soft.rows().row(i), clean[i], noisy.noisy_labels()[i])?;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(total / F::of_usize(count)))
}

/// Chains SEAL iterations, retraining from scratch each time (or warm
/// starting when configured), recording per-iteration metrics. The same
/// training configuration, seed included, is reused every iteration so the
/// label evolution is the only difference between rounds.
pub fn run_seal<F: Scalar>(
    noisy: &NoisyDataset<F>,
    seal: &SealConfig,
    spec: &NetworkSpec,
    config: &TrainConfig,
    test: Option<&LabeledDataset<F>>,
) -> Result<SealState<F>> {
    if seal.iterations == 0 {
        return Err(Error::Domain("SEAL needs at least one iteration".into()));
    }
    let mut soft = SoftLabels::from_noisy_onehot(noisy);
    let mut history = vec![IterationMetrics {
        iteration: 0,
        mean_distance: mean_flipped_distance(&soft, noisy)?,
        train_acc: None,
        peak_train_acc: None,
        test_acc: None,
    }];
    let mut params: Option<Params<F>> = None;
    for m in 1..=seal.iterations {
        let init = if seal.warm_start { params.take() } else { None };
        let (trained, next_soft, epoch_acc) = iterate(noisy, Some(&soft), init, spec, config)?;
        let test_acc = match test {
            Some(t) => {
                let probs = nn::forward(&trained, spec, t.features())?;
                Some(accuracy_from_probs(&probs, t.labels())?)
            }
            None => None,
        };
        history.push(IterationMetrics {
            iteration: m,
            mean_distance: mean_flipped_distance(&next_soft, noisy)?,
            train_acc: epoch_acc.last().copied(),
            peak_train_acc: epoch_acc.iter().copied().reduce(F::max),
            test_acc,
        });
        soft = next_soft;
        params = Some(trained);
    }
    Ok(SealState {
        iteration: seal.iterations,
        soft_labels: soft,
        params: params.expect("at least one iteration ran"),
        history,
    })
}

/// Metrics CSV: `iteration,mean_distance,train_acc,test_acc`, empty cells for
/// metrics that were not available.
pub fn metrics_to_csv<F: Scalar>(history: &[IterationMetrics<F>]) -> String {
    let mut out = String::from("iteration,mean_distance,train_acc,test_acc\n");
    for m in history {
        let cell = |v: Option<F>| v.map(|x| format!("{x}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.iteration,
            cell(m.mean_distance),
            cell(m.train_acc),
            cell(m.test_acc)
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Simulation oracle for the output approximation
// ---------------------------------------------------------------------------

/// Parameters of the single-instance output model
/// `f^t = alpha_t * omega_t + (1 - alpha_t) * e_noisy`, where the `omega_t`
/// are i.i.d. simplex draws with mean `optimal`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig<F> {
    /// Latent optimal label distribution `S*`.
    pub optimal: Vec<F>,
    /// Mixing coefficient per epoch; its length is the epoch count `T`.
    pub alpha: Vec<F>,
    /// Observed noisy label, 1-based.
    pub noisy_label: usize,
    /// Dirichlet concentration for the `omega` draws.
    pub concentration: f64,
    pub seed: u64,
}

impl<F: Scalar> SimulationConfig<F> {
    pub fn new(optimal: Vec<F>, alpha: Vec<F>, noisy_label: usize, seed: u64) -> Self {
        Self {
            optimal,
            alpha,
            noisy_label,
            concentration: 10.0,
            seed,
        }
    }

    pub fn class_count(&self) -> usize {
        self.optimal.len()
    }

    pub fn epochs(&self) -> usize {
        self.alpha.len()
    }

    fn validate(&self) -> Result<()> {
        if self.optimal.len() < 2 {
            return Err(Error::Domain("need at least two classes".into()));
        }
        if self.optimal.iter().any(|&v| v < F::zero()) {
            return Err(Error::Domain("optimal label has negative mass".into()));
        }
        let sum = compensated_sum(self.optimal.iter().copied());
        if (sum - F::one()).abs() > F::of(SIMPLEX_TOL) {
            return Err(Error::Domain(format!("optimal label sums to {sum}, not 1")));
        }
        if self.alpha.is_empty() {
            return Err(Error::Domain("alpha schedule must cover at least one epoch".into()));
        }
        if self.alpha.iter().any(|&a| a < F::zero() || a > F::one()) {
            return Err(Error::Domain("alpha values must lie in [0,1]".into()));
        }
        if self.noisy_label == 0 || self.noisy_label > self.optimal.len() {
            return Err(Error::Domain(format!(
                "noisy label {} out of range 1..={}",
                self.noisy_label,
                self.optimal.len()
            )));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::Domain("concentration must be positive".into()));
        }
        Ok(())
    }
}

/// Draws one trace from the output model. Zeros in `S*` are handled by mixing
/// in a `1e-6` uniform floor before parameterizing the Dirichlet.
pub fn simulate_trace<F: Scalar>(cfg: &SimulationConfig<F>) -> Result<PredictionTrace<F>> {
    cfg.validate()?;
    let c = cfg.class_count();
    let floor = 1e-6;
    let mixed: Vec<f64> = cfg
        .optimal
        .iter()
        .map(|&v| (1.0 - floor) * v.as_f64() + floor / c as f64)
        .collect();
    let gammas: Vec<Gamma<f64>> = mixed
        .iter()
        .map(|&m| Gamma::new(cfg.concentration * m, 1.0).expect("positive shape"))
        .collect();
    let mut rng = seeded_rng(cfg.seed);
    let mut epochs = Vec::with_capacity(cfg.epochs());
    let mut omega = vec![0.0f64; c];
    for &alpha in &cfg.alpha {
        // Dirichlet draw via normalized gammas.
        let mut total = 0.0;
        for (o, g) in omega.iter_mut().zip(&gammas) {
            *o = g.sample(&mut rng);
            total += *o;
        }
        let mut row = Matrix::zeros(1, c);
        let a = alpha.as_f64();
        for (k, cell) in row.row_mut(0).iter_mut().enumerate() {
            let noisy = if k + 1 == cfg.noisy_label { 1.0 } else { 0.0 };
            *cell = F::of(a * omega[k] / total + (1.0 - a) * noisy);
        }
        epochs.push(row);
    }
    PredictionTrace::new(epochs)
}

/// Empirical check of the averaging properties on the simulation model.
#[derive(Debug, Clone)]
pub struct SealPropertyReport<F> {
    /// `|| mean(S_bar) - S* ||_1` over all trials.
    pub bias_lhs: F,
    /// `|| e_noisy - S* ||_1`.
    pub bias_rhs: F,
    pub bias_ok: bool,
    /// Per-coordinate variance of the epoch-averaged label.
    pub var_averaged: Vec<F>,
    /// Per-coordinate variance of a uniformly random single epoch.
    pub var_single: Vec<F>,
    pub var_ok: bool,
    /// Mean of `var_averaged / var_single` over coordinates with nonzero
    /// single-epoch variance; `None` when the trace is deterministic.
    pub variance_ratio: Option<F>,
    pub trials: usize,
}

impl<F: Scalar> SealPropertyReport<F> {
    pub fn ok(&self) -> bool {
        self.bias_ok && self.var_ok
    }
}

const BIAS_SLACK: f64 = 0.01;
const VAR_SLACK: f64 = 1e-3;

/// Monte Carlo over fresh traces: checks that averaging does not move the
/// expected label away from `S*` compared to the noisy one-hot (within 0.01)
/// and that the averaged label's per-coordinate variance does not exceed a
/// random single epoch's (within 0.001).
pub fn check_seal_properties<F: Scalar>(
    cfg: &SimulationConfig<F>,
    trials: usize,
) -> Result<SealPropertyReport<F>> {
    cfg.validate()?;
    if trials < 1000 {
        return Err(Error::Domain("need at least 1000 trials".into()));
    }
    let c = cfg.class_count();
    let t_count = cfg.epochs();
    let mut epoch_rng = seeded_rng(derive_seed_indexed(cfg.seed, "epoch-pick", 0));
    let mut averaged: Vec<Vec<F>> = Vec::with_capacity(trials);
    let mut singles: Vec<Vec<F>> = Vec::with_capacity(trials);
    for j in 0..trials {
        let trial_cfg = SimulationConfig {
            seed: derive_seed_indexed(cfg.seed, "trial", j as u64),
            ..cfg.clone()
        };
        let trace = simulate_trace(&trial_cfg)?;
        averaged.push(trace.mean().row(0).to_vec());
        let tau = epoch_rng.random_range(0..t_count);
        singles.push(trace.epoch(tau).row(0).to_vec());
    }

    let mean_of = |rows: &[Vec<F>]| -> Vec<F> {
        let mut m = vec![F::zero(); c];
        for row in rows {
            for (a, &v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let inv = F::one() / F::of_usize(rows.len());
        m.iter().map(|&v| v * inv).collect()
    };
    let var_of = |rows: &[Vec<F>], mean: &[F]| -> Vec<F> {
        let mut v = vec![F::zero(); c];
        for row in rows {
            for ((acc, &x), &mu) in v.iter_mut().zip(row).zip(mean) {
                let d = x - mu;
                *acc += d * d;
            }
        }
        let inv = F::one() / F::of_usize(rows.len() - 1);
        v.iter().map(|&x| x * inv).collect()
    };

    let mean_avg = mean_of(&averaged);
    let var_avg = var_of(&averaged, &mean_avg);
    let mean_single = mean_of(&singles);
    let var_single = var_of(&singles, &mean_single);

    let l1 = |a: &[F], b: &[F]| {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs())
            .fold(F::zero(), |p, q| p + q)
    };
    let noisy_onehot: Vec<F> = (0..c)
        .map(|k| if k + 1 == cfg.noisy_label { F::one() } else { F::zero() })
        .collect();
    let bias_lhs = l1(&mean_avg, &cfg.optimal);
    let bias_rhs = l1(&noisy_onehot, &cfg.optimal);
    let bias_ok = bias_lhs <= bias_rhs + F::of(BIAS_SLACK);

    let var_ok = var_avg
        .iter()
        .zip(&var_single)
        .all(|(&a, &s)| a <= s + F::of(VAR_SLACK));
    let mut ratios = Vec::new();
    for (&a, &s) in var_avg.iter().zip(&var_single) {
        if s > F::of(1e-12) {
            ratios.push(a / s);
        }
    }
    let variance_ratio = if ratios.is_empty() {
        None
    } else {
        Some(compensated_sum(ratios.iter().copied()) / F::of_usize(ratios.len()))
    };

    Ok(SealPropertyReport {
        bias_lhs,
        bias_rhs,
        bias_ok,
        var_averaged: var_avg,
        var_single,
        var_ok,
        variance_ratio,
        trials,
    })
}
