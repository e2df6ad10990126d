//! Testing the class-conditional-noise assumption: a trained classifier's
//! holdout error on noisy labels is compared against the CCN-implied lower
//! bound, and the one-sided tail probability is reported in log10 domain so
//! astronomically small values survive.

use serde::Serialize;

use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::nn::{self, NetworkSpec, Targets, TrainConfig};
use crate::noise::TransitionMatrix;
use crate::rng::derive_seed;
use crate::scalar::{argmax, compensated_sum, Scalar};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Lower bound on the noisy-distribution 0-1 error under CCN:
/// `1 - sum_p w_p * max_q M_{p,q}`.
///
/// The reduction is compensated, so the result is exact to the last ulp and
/// invariant under simultaneous class permutations of `w` and `M`.
pub fn ccn_bound<F: Scalar>(weights: &[F], matrix: &TransitionMatrix<F>) -> Result<F> {
    if weights.len() != matrix.class_count() {
        return Err(Error::Dimension(format!(
            "{} weights for {} classes",
            weights.len(),
            matrix.class_count()
        )));
    }
    if weights.iter().any(|&w| w < F::zero()) {
        return Err(Error::Domain("class weights must be nonnegative".into()));
    }
    let total = compensated_sum(weights.iter().copied());
    if (total - F::one()).abs() > F::of(WEIGHT_SUM_TOL) {
        return Err(Error::Domain(format!(
            "class weights sum to {total}, not 1"
        )));
    }
    let maxima = matrix.row_maxima();
    let dot = compensated_sum(weights.iter().zip(&maxima).map(|(&w, &m)| w * m));
    Ok(F::one() - dot)
}

/// `log10` of the Hoeffding tail bound `exp(-2 m eps^2)`; zero when the
/// deviation is nonpositive (the bound is vacuous). Never exponentiated.
pub fn hoeffding_log10_pvalue<F: Scalar>(epsilon: F, m: usize) -> F {
    if epsilon <= F::zero() {
        return F::zero();
    }
    let two = F::of(2.0);
    -(two * F::of_usize(m) * epsilon * epsilon) / F::of(std::f64::consts::LN_10)
}

/// Outcome of one CCN hypothesis test.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport<F> {
    /// Holdout size the error was estimated on.
    pub m: usize,
    pub observed_error: F,
    pub ccn_bound: F,
    pub epsilon: F,
    pub log10_pvalue: F,
    pub rejected: bool,
    pub significance: f64,
    pub seed: u64,
    pub class_weights: Vec<F>,
    /// Where the matrix/weights estimates came from.
    pub matrix_source: String,
}

impl<F: Scalar> HypothesisReport<F> {
    /// Assembles a report from an already-known bound and observed error
    /// (the offline path: no training involved).
    pub fn from_parts(
        ccn_bound: F,
        observed_error: F,
        m: usize,
        significance: f64,
        seed: u64,
        class_weights: Vec<F>,
        matrix_source: String,
    ) -> Self {
        let epsilon = ccn_bound - observed_error;
        let log10_pvalue = hoeffding_log10_pvalue(epsilon, m);
        let rejected = epsilon > F::zero() && log10_pvalue < F::of(significance.log10());
        Self {
            m,
            observed_error,
            ccn_bound,
            epsilon,
            log10_pvalue,
            rejected,
            significance,
            seed,
            class_weights,
            matrix_source,
        }
    }
}

/// Splits the noisy dataset, trains a fresh classifier on the training half
/// against the noisy labels, scores the 0-1 error on the holdout noisy
/// labels, and assembles the report for the hypothesized `(M, w)`.
///
/// The holdout rows never touch the training loop, so the error estimate is
/// independent of the fit. An epsilon at or below zero yields an inconclusive
/// report (`rejected = false`, `log10_pvalue = 0`), not an error.
pub fn run_ccn_test<F: Scalar>(
    noisy: &NoisyDataset<F>,
    holdout: usize,
    spec: &NetworkSpec,
    config: &TrainConfig,
    matrix: &TransitionMatrix<F>,
    weights: &[F],
    significance: f64,
) -> Result<HypothesisReport<F>> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Domain(format!(
            "significance {significance} outside (0,1)"
        )));
    }
    if matrix.class_count() != noisy.class_count() {
        return Err(Error::Dimension(format!(
            "matrix has {} classes, dataset has {}",
            matrix.class_count(),
            noisy.class_count()
        )));
    }
    let bound = ccn_bound(weights, matrix)?;
    let (train, held) = noisy.split(holdout, derive_seed(config.seed, "ccn-test-split"))?;
    // A large holdout can leave fewer training rows than the configured batch.
    let mut config = config.clone();
    config.batch_size = config.batch_size.min(train.len());
    let (params, _) = nn::train_epochs(
        train.features(),
        Targets::Hard(train.noisy_labels()),
        spec,
        &config,
        |_| {},
    )?;
    let probs = nn::forward(&params, spec, held.features())?;
    let mistakes = probs
        .iter_rows()
        .zip(held.noisy_labels())
        .filter(|(row, &y)| argmax(row) + 1 != y)
        .count();
    let observed_error = F::of_usize(mistakes) / F::of_usize(holdout);
    Ok(HypothesisReport::from_parts(
        bound,
        observed_error,
        holdout,
        significance,
        config.seed,
        weights.to_vec(),
        "caller-supplied".into(),
    ))
}

/// Parses a one-row CSV of class weights.
pub fn weights_from_csv<F: Scalar>(text: &str) -> Result<Vec<F>> {
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse("empty weights CSV".into()))?;
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map(F::of)
                .map_err(|_| Error::Parse(format!("bad weight `{f}`")))
        })
        .collect()
}

/// Writes class weights as a one-row CSV.
pub fn weights_to_csv<F: Scalar>(weights: &[F]) -> String {
    let cells: Vec<String> = weights.iter().map(|w| format!("{w}")).collect();
    let mut s = cells.join(",");
    s.push('\n');
    s
}
