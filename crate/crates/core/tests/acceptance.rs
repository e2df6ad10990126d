//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N PASS` line with the measured quantities (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! The statistical criteria run on the desk-scale recipe: a 4-class
//! Gaussian mixture in 8 dimensions (axis centers, radius 4, sigma 1.4)
//! under a [8, 64, 64, 4] relu MLP trained 60 epochs with momentum SGD.

mod common;

use std::time::Instant;

use common::{max_relative_error, numeric_gradient, random_case};
use labelnoise::analysis::{
    accuracy_from_probs, critical_sample_ratio, memorization_summary, CurveRecord,
};
use labelnoise::data::{self, axis_centers, gen_gaussian_mixture, LabeledDataset, NoisyDataset};
use labelnoise::hypothesis::{ccn_bound, hoeffding_log10_pvalue, run_ccn_test};
use labelnoise::matrix::Matrix;
use labelnoise::nn::{self, NetworkSpec, Params, Targets, TrainConfig};
use labelnoise::noise::{apply_ccn, flip_count, generate_idn, uniform_matrix, TransitionMatrix};
use labelnoise::rng::seeded_rng;
use labelnoise::scalar::argmax;
use labelnoise::seal::{run_seal, SealConfig, SimulationConfig};
use rand::seq::SliceRandom;
use rand::Rng;

const CLASSES: usize = 4;
const DIM: usize = 8;
const RADIUS: f64 = 4.0;
const SIGMA: f64 = 1.4;

fn mixture(per_class: usize, seed: u64) -> LabeledDataset<f64> {
    let centers = axis_centers(CLASSES, DIM, RADIUS).unwrap();
    gen_gaussian_mixture(CLASSES, per_class, &centers, SIGMA, seed)
        .unwrap()
        .dataset
}

fn desk_spec() -> NetworkSpec {
    NetworkSpec::mlp(vec![DIM, 64, 64, CLASSES]).unwrap()
}

fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig::new(60, 32, 0.1, seed)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn criterion_01_hoeffding_headline_number() {
    let started = Instant::now();
    let v: f64 = hoeffding_log10_pvalue(0.2212, 500_000);
    let elapsed = started.elapsed();
    assert!(
        (-21300.0..=-21200.0).contains(&v),
        "log10 p-value {v} outside [-21300, -21200]"
    );
    assert!(elapsed.as_micros() < 1000, "took {elapsed:?}, budget 1 ms");
    println!("criterion 1 PASS: log10 p-value {v:.1} in [-21300, -21200], {elapsed:?}");
}

#[test]
fn criterion_02_ccn_bound_exactness_and_permutation_invariance() {
    let started = Instant::now();
    let balanced = vec![0.1f64; 10];
    let bound = ccn_bound(&balanced, &uniform_matrix(10, 0.4).unwrap()).unwrap();
    assert_eq!(bound, 0.4, "bound {bound} is not exactly 0.4");

    // Invariance under simultaneous class permutations, on a ragged random
    // matrix and weights so the permutation actually moves mass around.
    let c = 10;
    let mut rng = seeded_rng(42);
    let mut rows = Vec::with_capacity(c);
    for _ in 0..c {
        let mut row: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = row.iter().sum();
        for v in &mut row {
            *v /= total;
        }
        rows.push(row);
    }
    let mut weights: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let matrix = TransitionMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
    let reference = ccn_bound(&weights, &matrix).unwrap();
    let mut perm: Vec<usize> = (0..c).collect();
    for trial in 0..100 {
        perm.shuffle(&mut rng);
        let pw: Vec<f64> = perm.iter().map(|&p| weights[p]).collect();
        let prows: Vec<Vec<f64>> = perm
            .iter()
            .map(|&p| perm.iter().map(|&q| rows[p][q]).collect())
            .collect();
        let pm = TransitionMatrix::new(Matrix::from_rows(&prows).unwrap()).unwrap();
        let permuted = ccn_bound(&pw, &pm).unwrap();
        assert_eq!(permuted, reference, "trial {trial}: {permuted} != {reference}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!("criterion 2 PASS: bound exactly 0.4; 100 permutations bit-identical, {elapsed:?}");
}

#[test]
fn criterion_03_hypothesis_test_directions() {
    let started = Instant::now();
    let spec = desk_spec();
    let matrix = uniform_matrix::<f64>(CLASSES, 0.4).unwrap();
    let weights = vec![0.25f64; CLASSES];
    let holdout = 1000;
    let mut ccn_not_rejected = 0;
    let mut idn_rejected = 0;
    for seed in 1..=3u64 {
        let ds = mixture(1000, 100 + seed);
        let ccn = apply_ccn(&ds, &matrix, 200 + seed).unwrap();
        let test_cfg = desk_config(300 + seed);
        let report = run_ccn_test(&ccn, holdout, &spec, &test_cfg, &matrix, &weights, 0.01).unwrap();
        if !report.rejected {
            ccn_not_rejected += 1;
        }
        println!(
            "  ccn seed {seed}: error {:.4}, epsilon {:.4}, rejected {}",
            report.observed_error, report.epsilon, report.rejected
        );

        let idn = generate_idn(&ds, 0.4, &spec, &desk_config(400 + seed)).unwrap();
        let report =
            run_ccn_test(&idn.noisy, holdout, &spec, &test_cfg, &matrix, &weights, 0.01).unwrap();
        if report.rejected {
            idn_rejected += 1;
        }
        println!(
            "  idn seed {seed}: error {:.4}, epsilon {:.4}, log10 p {:.2}, rejected {}",
            report.observed_error, report.epsilon, report.log10_pvalue, report.rejected
        );
    }
    let elapsed = started.elapsed();
    assert!(ccn_not_rejected >= 2, "CCN wrongly rejected in {} of 3 seeds", 3 - ccn_not_rejected);
    assert_eq!(idn_rejected, 3, "IDN rejected in only {idn_rejected} of 3 seeds");
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}, budget 10 min");
    println!(
        "criterion 3 PASS: CCN not rejected {ccn_not_rejected}/3, IDN rejected {idn_rejected}/3, {elapsed:?}"
    );
}

#[test]
fn criterion_04_idn_generator_contract() {
    let started = Instant::now();
    let spec = desk_spec();
    for (i, p) in [0.1f64, 0.2, 0.3, 0.4].into_iter().enumerate() {
        let ds = mixture(500, 700 + i as u64);
        let cfg = TrainConfig::new(20, 32, 0.1, 800 + i as u64);
        let out = generate_idn(&ds, p, &spec, &cfg).unwrap();
        let expected_flips = flip_count(p, ds.len());
        assert_eq!(expected_flips, (p * 2000.0).round() as usize);
        assert_eq!(out.noisy.flip_count(), Some(expected_flips), "fraction {p}");

        // Independent pass over the saved trace: re-average the epochs by
        // hand, then re-derive candidate labels and the top-N index set.
        let t = out.trace.epoch_count() as f64;
        let n = ds.len();
        let c = CLASSES;
        let mut mean = vec![vec![0.0f64; c]; n];
        for e in 0..out.trace.epoch_count() {
            let m = out.trace.epoch(e);
            for (i, acc) in mean.iter_mut().enumerate() {
                for (k, cell) in acc.iter_mut().enumerate() {
                    *cell += m.at(i, k);
                }
            }
        }
        for row in &mut mean {
            for v in row.iter_mut() {
                *v /= t;
            }
        }
        let mut scores = vec![0.0f64; n];
        let mut candidates = vec![0usize; n];
        for i in 0..n {
            let y = ds.labels()[i];
            let mut best = usize::MAX;
            let mut best_v = f64::NEG_INFINITY;
            for (k, &v) in mean[i].iter().enumerate() {
                if k + 1 != y && v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            scores[i] = best_v;
            candidates[i] = best + 1;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let expected_set: std::collections::BTreeSet<usize> =
            order[..expected_flips].iter().copied().collect();
        let mask = out.noisy.flip_mask().unwrap();
        let actual_set: std::collections::BTreeSet<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        assert_eq!(expected_set, actual_set, "fraction {p}: flipped set mismatch");
        for i in &actual_set {
            assert_eq!(out.noisy.noisy_labels()[*i], candidates[*i], "fraction {p}");
            assert_ne!(out.noisy.noisy_labels()[*i], ds.labels()[*i], "fraction {p}");
        }
    }
    let elapsed = started.elapsed();
    println!("criterion 4 PASS: exact flip counts, argmax labels, and top-N sets for p in 0.1..0.4, {elapsed:?}");
}

fn noisy_curves(
    noisy: &NoisyDataset<f64>,
    test: &LabeledDataset<f64>,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> CurveRecord<f64> {
    let mut train_acc = Vec::with_capacity(cfg.epochs);
    let mut test_acc = Vec::with_capacity(cfg.epochs);
    nn::train_epochs(
        noisy.features(),
        Targets::Hard(noisy.noisy_labels()),
        spec,
        cfg,
        |snap| {
            train_acc.push(accuracy_from_probs(snap.probs, noisy.noisy_labels()).unwrap());
            let probs = nn::forward(snap.params, spec, test.features()).unwrap();
            test_acc.push(accuracy_from_probs(&probs, test.labels()).unwrap());
        },
    )
    .unwrap();
    CurveRecord::new(train_acc, test_acc, None).unwrap()
}

#[test]
fn criterion_05_memorization_orderings() {
    let started = Instant::now();
    let spec = desk_spec();
    let test = mixture(250, 990_001);
    let fraction = 0.4;
    let matrix = uniform_matrix::<f64>(CLASSES, fraction).unwrap();
    let mid = 30 - 1; // epoch at 50% of T, 0-based

    let (mut idn_mid, mut ccn_mid) = (vec![], vec![]);
    let (mut idn_peak, mut ccn_peak) = (vec![], vec![]);
    let (mut idn_gap, mut ccn_gap) = (vec![], vec![]);
    for seed in 1..=3u64 {
        let ds = mixture(500, 10_000 + seed);
        let train_cfg = desk_config(30_000 + seed);

        let idn = generate_idn(&ds, fraction, &spec, &desk_config(20_000 + seed)).unwrap();
        let curve = noisy_curves(&idn.noisy, &test, &spec, &train_cfg);
        let summary = memorization_summary(&curve);
        idn_mid.push(curve.train_acc[mid]);
        idn_peak.push(summary.peak_test_acc);
        idn_gap.push(summary.peak_minus_final);

        let ccn = apply_ccn(&ds, &matrix, 40_000 + seed).unwrap();
        let curve = noisy_curves(&ccn, &test, &spec, &train_cfg);
        let summary = memorization_summary(&curve);
        ccn_mid.push(curve.train_acc[mid]);
        ccn_peak.push(summary.peak_test_acc);
        ccn_gap.push(summary.peak_minus_final);
    }
    let (idn_mid, ccn_mid) = (mean(&idn_mid), mean(&ccn_mid));
    let (idn_peak, ccn_peak) = (mean(&idn_peak), mean(&ccn_peak));
    let (idn_gap, ccn_gap) = (mean(&idn_gap), mean(&ccn_gap));
    let elapsed = started.elapsed();
    assert!(
        idn_mid >= ccn_mid - 0.01,
        "mid-training train accuracy: idn {idn_mid:.3} < ccn {ccn_mid:.3} - 0.01"
    );
    assert!(
        idn_peak <= ccn_peak + 0.01,
        "peak test accuracy: idn {idn_peak:.3} > ccn {ccn_peak:.3} + 0.01"
    );
    assert!(
        idn_gap <= ccn_gap + 0.01,
        "peak-minus-final gap: idn {idn_gap:.3} > ccn {ccn_gap:.3} + 0.01"
    );
    assert!(elapsed.as_secs() < 900, "took {elapsed:?}, budget 15 min");
    println!(
        "criterion 5 PASS: mid-train idn {idn_mid:.3} vs ccn {ccn_mid:.3}; peak idn {idn_peak:.3} vs ccn {ccn_peak:.3}; gap idn {idn_gap:.3} vs ccn {ccn_gap:.3}, {elapsed:?}"
    );
}

#[test]
fn criterion_06_seal_label_correction() {
    let started = Instant::now();
    let spec = desk_spec();
    for (i, fraction) in [0.1f64, 0.2, 0.3, 0.4].into_iter().enumerate() {
        let mut per_iter = vec![vec![]; 4];
        for seed in 1..=3u64 {
            let offset = 1000 * i as u64 + seed;
            let ds = mixture(500, 50_000 + offset);
            let idn = generate_idn(&ds, fraction, &spec, &desk_config(60_000 + offset)).unwrap();
            let state = run_seal(
                &idn.noisy,
                &SealConfig::new(3),
                &spec,
                &desk_config(70_000 + offset),
                None,
            )
            .unwrap();
            for (k, metrics) in state.history.iter().enumerate() {
                per_iter[k].push(metrics.mean_distance.unwrap());
            }
        }
        let averaged: Vec<f64> = per_iter.iter().map(|v| mean(v)).collect();
        assert_eq!(averaged[0], 1.0, "fraction {fraction}: iteration 0 not exactly 1.0");
        assert!(
            averaged[1] < 0.95,
            "fraction {fraction}: iteration 1 distance {:.4} not below 0.95",
            averaged[1]
        );
        assert!(
            averaged[2] <= averaged[1] + 0.02 && averaged[3] <= averaged[2] + 0.02,
            "fraction {fraction}: distances increased beyond tolerance: {averaged:?}"
        );
        println!(
            "  fraction {fraction}: distances {:?}",
            averaged.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1200, "took {elapsed:?}, budget 20 min");
    println!("criterion 6 PASS: distance 1.0 -> <0.95 -> non-increasing through iteration 3, {elapsed:?}");
}

#[test]
fn criterion_07_seal_generalization_direction() {
    let started = Instant::now();
    let spec = desk_spec();
    let test = mixture(250, 991_001);
    for fraction in [0.3f64, 0.4] {
        let mut ce = vec![];
        let mut seal = vec![];
        for seed in 1..=3u64 {
            let ds = mixture(500, 80_000 + seed);
            let idn = generate_idn(&ds, fraction, &spec, &desk_config(81_000 + seed)).unwrap();
            let cfg = desk_config(82_000 + seed);
            let (params, _) = nn::train_epochs(
                idn.noisy.features(),
                Targets::Hard(idn.noisy.noisy_labels()),
                &spec,
                &cfg,
                |_| {},
            )
            .unwrap();
            let probs = nn::forward(&params, &spec, test.features()).unwrap();
            ce.push(accuracy_from_probs(&probs, test.labels()).unwrap());
            let state = run_seal(&idn.noisy, &SealConfig::new(3), &spec, &cfg, Some(&test)).unwrap();
            seal.push(state.history.last().unwrap().test_acc.unwrap());
        }
        let (ce, seal) = (mean(&ce), mean(&seal));
        assert!(
            seal - ce >= 0.02,
            "fraction {fraction}: SEAL {seal:.4} - CE {ce:.4} = {:.4} < 2 points",
            seal - ce
        );
        println!("  fraction {fraction}: CE {ce:.4}, SEAL {seal:.4} (+{:.4})", seal - ce);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1200, "took {elapsed:?}, budget 20 min");
    println!("criterion 7 PASS: SEAL beats CE by >= 2 points at 30% and 40% IDN, {elapsed:?}");
}

/// Extended check on an MNIST-format IDX subset. Needs the four standard
/// files under `$MNIST_IDX_DIR`; run with
/// `MNIST_IDX_DIR=... cargo test --test acceptance -- --ignored`.
#[test]
#[ignore]
fn criterion_07_extended_mnist_subset() {
    let dir = match std::env::var("MNIST_IDX_DIR") {
        Ok(d) => std::path::PathBuf::from(d),
        Err(_) => {
            eprintln!("MNIST_IDX_DIR not set; extended check skipped");
            return;
        }
    };
    let started = Instant::now();
    let images = std::fs::read(dir.join("train-images-idx3-ubyte")).unwrap();
    let labels = std::fs::read(dir.join("train-labels-idx1-ubyte")).unwrap();
    let full = data::idx_dataset::<f64>(&images, &labels).unwrap();
    let subset: Vec<usize> = (0..10_000.min(full.len())).collect();
    let train = full.subset(&subset).unwrap();
    let t_images = std::fs::read(dir.join("t10k-images-idx3-ubyte")).unwrap();
    let t_labels = std::fs::read(dir.join("t10k-labels-idx1-ubyte")).unwrap();
    let test = data::idx_dataset::<f64>(&t_images, &t_labels).unwrap();

    let spec = NetworkSpec::mlp(vec![train.dim(), 128, train.class_count()]).unwrap();
    let cfg = TrainConfig::new(30, 64, 0.1, 5);
    let idn = generate_idn(&train, 0.2, &spec, &cfg).unwrap();
    let (params, _) = nn::train_epochs(
        idn.noisy.features(),
        Targets::Hard(idn.noisy.noisy_labels()),
        &spec,
        &cfg,
        |_| {},
    )
    .unwrap();
    let probs = nn::forward(&params, &spec, test.features()).unwrap();
    let ce = accuracy_from_probs(&probs, test.labels()).unwrap();
    let state = run_seal(&idn.noisy, &SealConfig::new(3), &spec, &cfg, Some(&test)).unwrap();
    let seal = state.history.last().unwrap().test_acc.unwrap();
    let elapsed = started.elapsed();
    assert!(
        seal - ce >= 0.03,
        "MNIST subset: SEAL {seal:.4} - CE {ce:.4} < 3 points"
    );
    assert!(elapsed.as_secs() < 3600, "took {elapsed:?}, budget 60 min");
    println!("criterion 7 (extended) PASS: CE {ce:.4}, SEAL {seal:.4}, {elapsed:?}");
}

#[test]
fn criterion_08_simulation_oracle_properties() {
    let started = Instant::now();
    let t = 50;
    let cfg = SimulationConfig::new(vec![0.6f64, 0.3, 0.1], vec![0.5; t], 2, 9);
    let report = labelnoise::seal::check_seal_properties(&cfg, 5000).unwrap();
    assert!(report.bias_ok && report.bias_lhs < report.bias_rhs, "no strict bias slack");
    assert!(report.var_ok, "variance inequality violated");
    let ratio = report.variance_ratio.unwrap();
    let (lo, hi) = (0.5 / t as f64, 2.0 / t as f64);
    assert!(
        (lo..=hi).contains(&ratio),
        "variance ratio {ratio:.5} outside [{lo:.4}, {hi:.4}]"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 8 PASS: bias {:.4} < {:.4}, variance ratio {ratio:.5} in [{lo:.4}, {hi:.4}], {elapsed:?}",
        report.bias_lhs, report.bias_rhs
    );
}

#[test]
fn criterion_09_numerical_core() {
    let started = Instant::now();
    // 50 random cases, both losses, against central finite differences.
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let case = random_case(seed);
        for targets in [Targets::Hard(&case.labels), Targets::Soft(&case.soft)] {
            let (_, analytic) =
                nn::backward(&case.params, &case.spec, &case.features, targets).unwrap();
            let numeric =
                numeric_gradient(&case.params, &case.spec, &case.features, targets, 1e-4);
            worst = worst.max(max_relative_error(&analytic, &numeric));
        }
    }
    assert!(worst < 1e-4, "gradient max relative error {worst:.3e}");

    // IDX round trip, byte-exact.
    let dims = [3usize, 4, 2];
    let payload: Vec<u8> = (0..24u8).map(|b| b.wrapping_mul(37)).collect();
    let bytes = data::serialize_idx(&dims, &payload).unwrap();
    let parsed = data::parse_idx(&bytes).unwrap();
    assert_eq!(parsed.dims, dims);
    assert_eq!(parsed.data, payload);
    assert_eq!(data::serialize_idx(&parsed.dims, &parsed.data).unwrap(), bytes);

    // Determinism: identical runs produce bitwise-identical artifacts.
    let ds = mixture(50, 77);
    let spec = NetworkSpec::mlp(vec![DIM, 16, CLASSES]).unwrap();
    let cfg = TrainConfig::new(10, 16, 0.1, 78);
    let a = generate_idn(&ds, 0.3, &spec, &cfg).unwrap();
    let b = generate_idn(&ds, 0.3, &spec, &cfg).unwrap();
    assert_eq!(
        data::noisy_to_csv(&a.noisy).unwrap(),
        data::noisy_to_csv(&b.noisy).unwrap()
    );
    let s1 = run_seal(&a.noisy, &SealConfig::new(2), &spec, &cfg, None).unwrap();
    let s2 = run_seal(&b.noisy, &SealConfig::new(2), &spec, &cfg, None).unwrap();
    assert_eq!(s1.soft_labels.to_csv(), s2.soft_labels.to_csv());
    assert_eq!(s1.params, s2.params);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 1 min");
    println!(
        "criterion 9 PASS: gradient max rel err {worst:.3e}, IDX byte-exact, bitwise-identical reruns, {elapsed:?}"
    );
}

#[test]
fn criterion_10_csr_probe_matches_grid_oracle() {
    let started = Instant::now();
    // 1-D threshold model: predicted class flips at x = 0.
    let spec = NetworkSpec::mlp(vec![1, 2]).unwrap();
    let mut params = Params::<f64>::zeros(&spec);
    *params.layers[0].weights.at_mut(0, 0) = -1.0;
    *params.layers[0].weights.at_mut(1, 0) = 1.0;
    let samples = Matrix::from_rows(&[vec![-0.5], vec![0.5]]).unwrap();

    // Exhaustive grid over the interval, fine enough to catch any crossing.
    let grid_csr = |radius: f64| -> f64 {
        let steps = 4000;
        let mut critical = 0;
        for i in 0..samples.rows() {
            let x = samples.at(i, 0);
            let base = nn::forward(&params, &spec, &samples).unwrap();
            let base_class = argmax(base.row(i));
            let mut found = false;
            for s in 0..=steps {
                let probe = x - radius + 2.0 * radius * s as f64 / steps as f64;
                let m = Matrix::from_rows(&[vec![probe]]).unwrap();
                let out = nn::forward(&params, &spec, &m).unwrap();
                if argmax(out.row(0)) != base_class {
                    found = true;
                    break;
                }
            }
            if found {
                critical += 1;
            }
        }
        critical as f64 / samples.rows() as f64
    };

    for radius in [0.1f64, 0.6] {
        let probed: f64 =
            critical_sample_ratio(&params, &spec, &samples, radius, 1000, 11).unwrap();
        let grid = grid_csr(radius);
        assert_eq!(probed, grid, "radius {radius}: probe {probed} vs grid {grid}");
        println!("  radius {radius}: probed {probed}, grid {grid}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!("criterion 10 PASS: probing equals exhaustive grid search at r = 0.1 and 0.6, {elapsed:?}");
}
