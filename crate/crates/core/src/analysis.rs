//! Characterization tooling: accuracy curves, critical-sample ratio probing,
//! instance-level memorization trajectories, and label-distance histograms.

use crate::data::{LabeledDataset, NoisyDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, NetworkSpec, Params, PredictionTrace};
use crate::rng::{derive_seed_indexed, seeded_rng};
use crate::scalar::{argmax, Scalar};
use crate::seal::{label_distance, SoftLabels};

use rand::Rng;

/// Which labels of a noisy dataset an accuracy is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Clean,
    Noisy,
}

/// Fraction of probability rows whose argmax (ties to the lowest class) hits
/// the label.
pub fn accuracy_from_probs<F: Scalar>(probs: &Matrix<F>, labels: &[usize]) -> Result<F> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::Domain("empty prediction set".into()));
    }
    let hits = probs
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) + 1 == y)
        .count();
    Ok(F::of_usize(hits) / F::of_usize(labels.len()))
}

/// 0-1 accuracy of a model on a noisy dataset, against clean or noisy labels.
pub fn accuracy<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    dataset: &NoisyDataset<F>,
    against: LabelSource,
) -> Result<F> {
    let labels = match against {
        LabelSource::Noisy => dataset.noisy_labels(),
        LabelSource::Clean => dataset
            .clean_labels()
            .ok_or_else(|| Error::MissingData("dataset carries no clean labels".into()))?,
    };
    let probs = nn::forward(params, spec, dataset.features())?;
    accuracy_from_probs(&probs, labels)
}

/// 0-1 accuracy of a model on a clean dataset.
pub fn accuracy_labeled<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    dataset: &LabeledDataset<F>,
) -> Result<F> {
    let probs = nn::forward(params, spec, dataset.features())?;
    accuracy_from_probs(&probs, dataset.labels())
}

/// Per-sample witnesses of a decision-boundary crossing inside the L-inf ball
/// of the given radius: `budget` uniform draws plus one signed-gradient probe
/// at the full radius. `None` means no flip was found. Each sample uses its
/// own derived sub-seed, so results are order-independent.
pub fn critical_sample_witnesses<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    samples: &Matrix<F>,
    radius: f64,
    budget: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<F>>>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain("radius must be positive".into()));
    }
    if budget == 0 {
        return Err(Error::Domain("budget must be >= 1".into()));
    }
    let base = nn::forward(params, spec, samples)?;
    let mut witnesses = Vec::with_capacity(samples.rows());
    let mut probe = Matrix::zeros(1, samples.cols());
    for i in 0..samples.rows() {
        let x = samples.row(i);
        let predicted = argmax(base.row(i)) + 1;
        let mut rng = seeded_rng(derive_seed_indexed(seed, "csr-sample", i as u64));
        let mut found = None;
        for _ in 0..budget {
            for (p, &v) in probe.row_mut(0).iter_mut().zip(x) {
                *p = v + F::of(rng.random_range(-radius..=radius));
            }
            let out = nn::forward(params, spec, &probe)?;
            if argmax(out.row(0)) + 1 != predicted {
                found = Some(probe.row(0).to_vec());
                break;
            }
        }
        if found.is_none() {
            // Ascend the loss of the predicted class to the corner of the ball.
            let grad = nn::input_gradient(params, spec, x, predicted)?;
            for ((p, &v), &g) in probe.row_mut(0).iter_mut().zip(x).zip(&grad) {
                *p = v + F::of(radius) * F::of(g.as_f64().signum());
            }
            let out = nn::forward(params, spec, &probe)?;
            if argmax(out.row(0)) + 1 != predicted {
                found = Some(probe.row(0).to_vec());
            }
        }
        witnesses.push(found);
    }
    Ok(witnesses)
}

/// Fraction of samples with a boundary crossing inside their L-inf ball.
/// Probing can only under-count, so values are lower bounds of the true ratio.
pub fn critical_sample_ratio<F: Scalar>(
    params: &Params<F>,
    spec: &NetworkSpec,
    samples: &Matrix<F>,
    radius: f64,
    budget: usize,
    seed: u64,
) -> Result<F> {
    let witnesses = critical_sample_witnesses(params, spec, samples, radius, budget, seed)?;
    let critical = witnesses.iter().filter(|w| w.is_some()).count();
    Ok(F::of_usize(critical) / F::of_usize(samples.rows().max(1)))
}

/// Per-epoch output probabilities at the noisy and latent true label of one
/// instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    pub p_noisy: Vec<F>,
    pub p_true: Vec<F>,
}

impl<F: Scalar> Trajectory<F> {
    pub fn epochs(&self) -> usize {
        self.p_noisy.len()
    }

    /// CSV: `epoch,p_noisy,p_true`, epochs 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,p_noisy,p_true\n");
        for (t, (pn, pt)) in self.p_noisy.iter().zip(&self.p_true).enumerate() {
            out.push_str(&format!("{},{pn},{pt}\n", t + 1));
        }
        out
    }
}

/// Extracts the two per-epoch series for one instance from a trace.
pub fn instance_trajectory<F: Scalar>(
    trace: &PredictionTrace<F>,
    index: usize,
    clean_label: usize,
    noisy_label: usize,
) -> Result<Trajectory<F>> {
    if index >= trace.len() {
        return Err(Error::Domain(format!(
            "index {index} out of range for trace of {}",
            trace.len()
        )));
    }
    let c = trace.class_count();
    for (name, y) in [("clean", clean_label), ("noisy", noisy_label)] {
        if y == 0 || y > c {
            return Err(Error::Domain(format!("{name} label {y} out of range 1..={c}")));
        }
    }
    let mut p_noisy = Vec::with_capacity(trace.epoch_count());
    let mut p_true = Vec::with_capacity(trace.epoch_count());
    for t in 0..trace.epoch_count() {
        let row = trace.epoch(t).row(index);
        p_noisy.push(row[noisy_label - 1]);
        p_true.push(row[clean_label - 1]);
    }
    Ok(Trajectory { p_noisy, p_true })
}

/// Equal-width histogram over `[0, 1]` of the label distances of all flipped
/// instances. Counts sum to the flip count.
pub fn distance_histogram<F: Scalar>(
    soft: &SoftLabels<F>,
    noisy: &NoisyDataset<F>,
    bins: usize,
) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::Domain("need at least one bin".into()));
    }
    let clean = noisy
        .clean_labels()
        .ok_or_else(|| Error::MissingData("histogram needs clean labels".into()))?;
    let mask = noisy
        .flip_mask()
        .ok_or_else(|| Error::MissingData("histogram needs the flip mask".into()))?;
    if soft.len() != noisy.len() {
        return Err(Error::Dimension(format!(
            "{} soft rows for {} instances",
            soft.len(),
            noisy.len()
        )));
    }
    let mut counts = vec![0usize; bins];
    for i in 0..noisy.len() {
        if mask[i] {
            let d = label_distance(soft.rows().row(i), clean[i], noisy.noisy_labels()[i])?;
            let slot = ((d.as_f64() * bins as f64) as usize).min(bins - 1);
            counts[slot] += 1;
        }
    }
    Ok(counts)
}

/// Histogram CSV: `bin_low,bin_high,count`.
pub fn histogram_to_csv(counts: &[usize]) -> String {
    let bins = counts.len();
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, &c) in counts.iter().enumerate() {
        let low = i as f64 / bins as f64;
        let high = (i + 1) as f64 / bins as f64;
        out.push_str(&format!("{low},{high},{c}\n"));
    }
    out
}

/// Per-epoch training and testing accuracy, with an optional CSR series.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord<F> {
    pub train_acc: Vec<F>,
    pub test_acc: Vec<F>,
    pub csr: Option<Vec<F>>,
}

impl<F: Scalar> CurveRecord<F> {
    pub fn new(train_acc: Vec<F>, test_acc: Vec<F>, csr: Option<Vec<F>>) -> Result<Self> {
        if train_acc.is_empty() || train_acc.len() != test_acc.len() {
            return Err(Error::Dimension(
                "curve series must be nonempty and equally long".into(),
            ));
        }
        if let Some(csr) = &csr {
            if csr.len() != train_acc.len() {
                return Err(Error::Dimension("csr series length mismatch".into()));
            }
        }
        let in_unit = |v: &F| *v >= F::zero() && *v <= F::one();
        if !train_acc.iter().all(in_unit) || !test_acc.iter().all(in_unit) {
            return Err(Error::Domain("accuracies must lie in [0,1]".into()));
        }
        Ok(Self {
            train_acc,
            test_acc,
            csr,
        })
    }

    pub fn epochs(&self) -> usize {
        self.train_acc.len()
    }

    /// CSV: `epoch,train_acc,test_acc[,csr]`, epochs 1-based.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.csr.is_some() {
            out.push_str("epoch,train_acc,test_acc,csr\n");
        } else {
            out.push_str("epoch,train_acc,test_acc\n");
        }
        for t in 0..self.epochs() {
            match &self.csr {
                Some(csr) => out.push_str(&format!(
                    "{},{},{},{}\n",
                    t + 1,
                    self.train_acc[t],
                    self.test_acc[t],
                    csr[t]
                )),
                None => out.push_str(&format!(
                    "{},{},{}\n",
                    t + 1,
                    self.train_acc[t],
                    self.test_acc[t]
                )),
            }
        }
        out
    }
}

/// Peak/final test-accuracy summary of a training curve. Ties in the peak
/// break to the earliest epoch; epochs are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorizationSummary<F> {
    pub peak_test_acc: F,
    pub peak_epoch: usize,
    pub final_test_acc: F,
    pub peak_minus_final: F,
    pub final_train_acc: F,
}

pub fn memorization_summary<F: Scalar>(curve: &CurveRecord<F>) -> MemorizationSummary<F> {
    let mut peak = curve.test_acc[0];
    let mut peak_epoch = 1;
    for (t, &v) in curve.test_acc.iter().enumerate() {
        if v > peak {
            peak = v;
            peak_epoch = t + 1;
        }
    }
    let final_test_acc = *curve.test_acc.last().expect("nonempty curve");
    let final_train_acc = *curve.train_acc.last().expect("nonempty curve");
    MemorizationSummary {
        peak_test_acc: peak,
        peak_epoch,
        final_test_acc,
        peak_minus_final: peak - final_test_acc,
        final_train_acc,
    }
}
