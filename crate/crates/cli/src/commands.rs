//! Subcommand implementations. Every artifact embeds the run seed or config
//! hash and no wall-clock data, so identical configs produce identical bytes.

use std::fs;
use std::path::PathBuf;

use labelnoise::analysis::{
    accuracy_from_probs, critical_sample_ratio, distance_histogram, histogram_to_csv,
    instance_trajectory, memorization_summary, CurveRecord,
};
use labelnoise::data::{
    self, axis_centers, gen_gaussian_mixture, LabeledDataset, NoisyDataset,
};
use labelnoise::hypothesis::{self, HypothesisReport};
use labelnoise::matrix::Matrix;
use labelnoise::nn::{self, NetworkSpec, Params, PredictionTrace, Targets, TrainConfig};
use labelnoise::noise::{
    self, apply_ccn, generate_idn, NoiseSidecar, ScoreSummary, TransitionMatrix,
};
use labelnoise::rng::derive_seed;
use labelnoise::seal::{run_seal, SealConfig};
use serde::{Deserialize, Serialize};

use crate::config::{
    DatasetSection, ExperimentConfig, MatrixSpec, NamedMatrix, NoiseKind, TrainSection,
};

/// Errors mapped to process exit codes: validation problems exit 2, numeric
/// failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<labelnoise::Error> for CliError {
    fn from(e: labelnoise::Error) -> Self {
        match e {
            labelnoise::Error::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let out = out
            .or_else(|| config.output_dir.clone())
            .ok_or_else(|| validation("output directory required: set --out or output_dir"))?;
        fs::create_dir_all(&out)
            .map_err(|e| validation(format!("cannot create {}: {e}", out.display())))?;
        let seed = seed.unwrap_or(config.seed);
        Ok(Self { config, out, seed })
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require_artifact(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.artifact(name);
        if !path.is_file() {
            return Err(validation(format!(
                "missing upstream artifact: {} (run the producing command first)",
                path.display()
            )));
        }
        Ok(path)
    }

    fn write(&self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.artifact(name);
        fs::write(&path, content)
            .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    fn build_dataset(&self, section: &DatasetSection, component: &str) -> Result<LabeledDataset<f64>, CliError> {
        match section {
            DatasetSection::GaussianMixture {
                class_count,
                per_class,
                dim,
                radius,
                sigma,
            } => {
                let centers = axis_centers::<f64>(*class_count, *dim, *radius)?;
                let mix = gen_gaussian_mixture(
                    *class_count,
                    *per_class,
                    &centers,
                    *sigma,
                    derive_seed(self.seed, component),
                )?;
                if let Some(w) = mix.warning {
                    eprintln!("warning: {w}");
                }
                Ok(mix.dataset)
            }
            DatasetSection::Csv { path } => {
                let text = fs::read_to_string(path)
                    .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
                Ok(data::labeled_from_csv(&text)?)
            }
            DatasetSection::Idx { images, labels } => {
                let images = fs::read(images)
                    .map_err(|e| validation(format!("cannot read {}: {e}", images.display())))?;
                let labels = fs::read(labels)
                    .map_err(|e| validation(format!("cannot read {}: {e}", labels.display())))?;
                Ok(data::idx_dataset(&images, &labels)?)
            }
        }
    }

    /// Test set for accuracy curves: the configured section, or a fresh
    /// mixture drawn with the `test-dataset` sub-seed when the training data
    /// is itself a generated mixture.
    fn build_test_dataset(&self) -> Result<LabeledDataset<f64>, CliError> {
        if let Some(section) = &self.config.test_dataset {
            return self.build_dataset(section, "test-dataset");
        }
        match &self.config.dataset {
            DatasetSection::GaussianMixture { .. } => {
                self.build_dataset(&self.config.dataset, "test-dataset")
            }
            _ => Err(validation(
                "test_dataset: required when dataset is loaded from files",
            )),
        }
    }

    fn network_spec(&self, input_dim: usize, class_count: usize) -> Result<NetworkSpec, CliError> {
        let mut widths = vec![input_dim];
        widths.extend(&self.config.network.hidden);
        widths.push(class_count);
        Ok(NetworkSpec::mlp(widths)?)
    }

    fn train_config(&self, component: &str) -> TrainConfig {
        let t: &TrainSection = &self.config.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            seed: derive_seed(self.seed, component),
            shuffle: t.shuffle,
            lr_decay: t.lr_decay.clone(),
        }
    }

    fn build_matrix(
        &self,
        spec: Option<&MatrixSpec>,
        fraction: Option<f64>,
        class_count: usize,
    ) -> Result<(TransitionMatrix<f64>, String), CliError> {
        match spec {
            Some(MatrixSpec::Csv { csv }) => {
                let text = fs::read_to_string(csv)
                    .map_err(|e| validation(format!("cannot read {}: {e}", csv.display())))?;
                let m = TransitionMatrix::from_csv(&text)?;
                if m.class_count() != class_count {
                    return Err(validation(format!(
                        "matrix {} has {} classes, dataset has {class_count}",
                        csv.display(),
                        m.class_count()
                    )));
                }
                Ok((m, format!("csv:{}", csv.display())))
            }
            other => {
                let named = match other {
                    Some(MatrixSpec::Named(n)) => *n,
                    _ => NamedMatrix::Uniform,
                };
                let p = fraction
                    .ok_or_else(|| validation("noise.fraction: required for a named matrix"))?;
                let m = match named {
                    NamedMatrix::Uniform => noise::uniform_matrix(class_count, p)?,
                    NamedMatrix::Pair => noise::pair_matrix(class_count, p)?,
                };
                let name = match named {
                    NamedMatrix::Uniform => format!("uniform({p})"),
                    NamedMatrix::Pair => format!("pair({p})"),
                };
                Ok((m, name))
            }
        }
    }
}

fn write_json<T: Serialize>(ctx: &Context, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| validation(format!("cannot encode {name}: {e}")))?;
    text.push('\n');
    ctx.write(name, &text)
}

pub fn gen_noise(ctx: &Context) -> Result<(), CliError> {
    let noise_cfg = ctx
        .config
        .noise
        .as_ref()
        .ok_or_else(|| validation("noise: section required for gen-noise"))?;
    let dataset = ctx.build_dataset(&ctx.config.dataset, "dataset")?;
    let (noisy, summary) = match noise_cfg.kind {
        NoiseKind::Ccn => {
            let (matrix, _) = ctx.build_matrix(
                noise_cfg.matrix.as_ref(),
                noise_cfg.fraction,
                dataset.class_count(),
            )?;
            let noisy = apply_ccn(&dataset, &matrix, derive_seed(ctx.seed, "ccn"))?;
            (noisy, None)
        }
        NoiseKind::Idn => {
            let fraction = noise_cfg
                .fraction
                .ok_or_else(|| validation("noise.fraction: required for idn"))?;
            let spec = ctx.network_spec(dataset.dim(), dataset.class_count())?;
            let outcome = generate_idn(&dataset, fraction, &spec, &ctx.train_config("idn-generator"))?;
            let summary = ScoreSummary::from_scores(&outcome.scores);
            (outcome.noisy, Some(summary))
        }
    };
    let flips = noisy.flip_count().unwrap_or(0);
    let sidecar = NoiseSidecar {
        noise_fraction: noise_cfg
            .fraction
            .unwrap_or(flips as f64 / noisy.len() as f64),
        flip_count: flips,
        seed: ctx.seed,
        score_summary: summary,
    };
    ctx.write("noisy.csv", &data::noisy_to_csv(&noisy)?)?;
    write_json(ctx, "noise_meta.json", &sidecar)?;
    println!(
        "wrote {} ({} instances, {flips} flips)",
        ctx.artifact("noisy.csv").display(),
        noisy.len()
    );
    if let Some(s) = &sidecar.score_summary {
        println!(
            "mislabeling scores: min {:.4}, mean {:.4}, max {:.4}",
            s.min, s.mean, s.max
        );
    }
    Ok(())
}

pub fn ccn_test(ctx: &Context, offline: bool) -> Result<(), CliError> {
    let hyp = ctx
        .config
        .hypothesis
        .as_ref()
        .ok_or_else(|| validation("hypothesis: section required for ccn-test"))?;
    let report: HypothesisReport<f64> = if offline {
        let off = hyp.offline.as_ref().ok_or_else(|| {
            validation("hypothesis.offline: section required with --offline")
        })?;
        HypothesisReport::from_parts(
            off.ccn_bound,
            off.observed_error,
            off.m,
            hyp.significance,
            ctx.seed,
            Vec::new(),
            "offline".into(),
        )
    } else {
        let path = ctx.require_artifact("noisy.csv")?;
        let text = fs::read_to_string(&path)
            .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
        let noisy = data::noisy_from_csv::<f64>(&text)?;
        let c = noisy.class_count();
        let matrix_spec = hyp
            .matrix
            .as_ref()
            .or_else(|| ctx.config.noise.as_ref().and_then(|n| n.matrix.as_ref()));
        let fraction = ctx.config.noise.as_ref().and_then(|n| n.fraction);
        let (matrix, source) = ctx.build_matrix(matrix_spec, fraction, c)?;
        let weights = match &hyp.weights_csv {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
                hypothesis::weights_from_csv::<f64>(&text)?
            }
            None => vec![1.0 / c as f64; c],
        };
        let spec = ctx.network_spec(noisy.dim(), c)?;
        let mut report = hypothesis::run_ccn_test(
            &noisy,
            hyp.holdout,
            &spec,
            &ctx.train_config("ccn-test"),
            &matrix,
            &weights,
            hyp.significance,
        )?;
        report.matrix_source = source;
        report.seed = ctx.seed;
        report
    };
    write_json(ctx, "report.json", &report)?;
    println!(
        "ccn bound {:.4}, observed error {:.4}, epsilon {:.4}, log10 p-value {:.4}",
        report.ccn_bound, report.observed_error, report.epsilon, report.log10_pvalue
    );
    if report.rejected {
        println!(
            "CCN hypothesis REJECTED at significance {}",
            report.significance
        );
    } else {
        println!("CCN hypothesis not rejected (inconclusive one-sided test)");
    }
    Ok(())
}

/// On-disk model: widths plus flattened layer parameters.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    layer_widths: Vec<usize>,
    layers: Vec<ModelLayer>,
    seed: u64,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ModelLayer {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn save_model(ctx: &Context, spec: &NetworkSpec, params: &Params<f64>) -> Result<(), CliError> {
    let file = ModelFile {
        layer_widths: spec.layer_widths.clone(),
        layers: params
            .layers
            .iter()
            .map(|l| ModelLayer {
                weights: l.weights.data().to_vec(),
                bias: l.bias.clone(),
            })
            .collect(),
        seed: ctx.seed,
        config_hash: ctx.config.hash(),
    };
    write_json(ctx, "model.json", &file)
}

fn load_model(ctx: &Context) -> Result<(NetworkSpec, Params<f64>), CliError> {
    let path = ctx.require_artifact("model.json")?;
    let text = fs::read_to_string(&path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    let spec = NetworkSpec::mlp(file.layer_widths.clone())?;
    let mut params = Params::<f64>::zeros(&spec);
    if file.layers.len() != params.layers.len() {
        return Err(validation(format!(
            "{}: expected {} layers, found {}",
            path.display(),
            params.layers.len(),
            file.layers.len()
        )));
    }
    for (target, source) in params.layers.iter_mut().zip(&file.layers) {
        let (rows, cols) = (target.weights.rows(), target.weights.cols());
        target.weights = Matrix::from_vec(rows, cols, source.weights.clone())?;
        if source.bias.len() != target.bias.len() {
            return Err(validation(format!("{}: bias length mismatch", path.display())));
        }
        target.bias = source.bias.clone();
    }
    Ok((spec, params))
}

fn trace_to_csv(trace: &PredictionTrace<f64>) -> String {
    let c = trace.class_count();
    let mut header = String::from("epoch,index");
    for k in 1..=c {
        header.push_str(&format!(",p{k}"));
    }
    header.push('\n');
    let mut out = header;
    for t in 0..trace.epoch_count() {
        let m = trace.epoch(t);
        for i in 0..m.rows() {
            out.push_str(&format!("{},{}", t + 1, i));
            for &v in m.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

fn trace_from_csv(text: &str) -> Result<PredictionTrace<f64>, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| validation("trace.csv: empty"))?;
    let c = header.split(',').count() - 2;
    if c == 0 {
        return Err(validation("trace.csv: no probability columns"));
    }
    let mut epochs: Vec<Vec<Vec<f64>>> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != c + 2 {
            return Err(validation(format!("trace.csv row {}: bad field count", ln + 2)));
        }
        let epoch: usize = fields[0]
            .parse()
            .map_err(|_| validation(format!("trace.csv row {}: bad epoch", ln + 2)))?;
        if epoch == 0 {
            return Err(validation("trace.csv: epochs are 1-based"));
        }
        if epochs.len() < epoch {
            epochs.resize(epoch, Vec::new());
        }
        let row: Result<Vec<f64>, CliError> = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| validation(format!("trace.csv row {}: bad value", ln + 2)))
            })
            .collect();
        epochs[epoch - 1].push(row?);
    }
    let matrices: Result<Vec<Matrix<f64>>, labelnoise::Error> =
        epochs.iter().map(|rows| Matrix::from_rows(rows)).collect();
    Ok(PredictionTrace::new(matrices?)?)
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    // Prefer the noisy artifact when one was generated; otherwise train on
    // the clean configured dataset.
    let noisy_path = ctx.artifact("noisy.csv");
    let (features, targets_owned, noisy_for_trace): (Matrix<f64>, Vec<usize>, Option<NoisyDataset<f64>>) =
        if noisy_path.is_file() {
            let text = fs::read_to_string(&noisy_path)
                .map_err(|e| validation(format!("cannot read {}: {e}", noisy_path.display())))?;
            let noisy = data::noisy_from_csv::<f64>(&text)?;
            (
                noisy.features().clone(),
                noisy.noisy_labels().to_vec(),
                Some(noisy),
            )
        } else {
            let ds = ctx.build_dataset(&ctx.config.dataset, "dataset")?;
            (ds.features().clone(), ds.labels().to_vec(), None)
        };
    let class_count = noisy_for_trace
        .as_ref()
        .map(|n| n.class_count())
        .unwrap_or_else(|| *targets_owned.iter().max().unwrap_or(&2));
    let test = ctx.build_test_dataset()?;
    let spec = ctx.network_spec(features.cols(), class_count)?;
    let cfg = ctx.train_config("train");

    let mut train_acc = Vec::with_capacity(cfg.epochs);
    let mut test_acc = Vec::with_capacity(cfg.epochs);
    let (params, trace) = nn::train_epochs(
        &features,
        Targets::Hard(&targets_owned),
        &spec,
        &cfg,
        |snap| {
            train_acc.push(accuracy_from_probs(snap.probs, &targets_owned).unwrap());
            let probs = nn::forward(snap.params, &spec, test.features()).unwrap();
            test_acc.push(accuracy_from_probs(&probs, test.labels()).unwrap());
        },
    )?;
    let curve = CurveRecord::new(train_acc, test_acc, None)?;
    ctx.write("curve.csv", &curve.to_csv())?;
    save_model(ctx, &spec, &params)?;
    if ctx.config.analysis.as_ref().is_some_and(|a| a.save_trace) {
        ctx.write("trace.csv", &trace_to_csv(&trace))?;
    }
    let summary = memorization_summary(&curve);
    println!(
        "trained {} epochs: final train acc {:.4}, peak test acc {:.4} (epoch {}), final test acc {:.4}",
        cfg.epochs, summary.final_train_acc, summary.peak_test_acc, summary.peak_epoch, summary.final_test_acc
    );
    Ok(())
}

#[derive(Serialize)]
struct SoftLabelMeta {
    iteration: usize,
    seed: u64,
    config_hash: String,
}

pub fn seal(ctx: &Context) -> Result<(), CliError> {
    let seal_cfg = ctx
        .config
        .seal
        .as_ref()
        .ok_or_else(|| validation("seal: section required for seal"))?;
    let path = ctx.require_artifact("noisy.csv")?;
    let text = fs::read_to_string(&path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let noisy = data::noisy_from_csv::<f64>(&text)?;
    let test = ctx.build_test_dataset()?;
    let spec = ctx.network_spec(noisy.dim(), noisy.class_count())?;
    let cfg = ctx.train_config("seal");
    let state = run_seal(
        &noisy,
        &SealConfig {
            iterations: seal_cfg.iterations,
            warm_start: seal_cfg.warm_start,
        },
        &spec,
        &cfg,
        Some(&test),
    )?;
    ctx.write("soft_labels.csv", &state.soft_labels.to_csv())?;
    write_json(
        ctx,
        "soft_labels_meta.json",
        &SoftLabelMeta {
            iteration: state.iteration,
            seed: ctx.seed,
            config_hash: ctx.config.hash(),
        },
    )?;
    // One CSV row per completed iteration; the iteration-0 baseline distance
    // is 1.0 by construction.
    ctx.write("seal_metrics.csv", &labelnoise::seal::metrics_to_csv(&state.history[1..]))?;
    save_model(ctx, &spec, &state.params)?;
    let last = state.history.last().expect("at least iteration 0");
    println!(
        "seal finished after {} iterations: train acc {:.4}, test acc {:.4}{}",
        state.iteration,
        last.train_acc.unwrap_or(f64::NAN),
        last.test_acc.unwrap_or(f64::NAN),
        last.mean_distance
            .map(|d| format!(", mean flipped distance {d:.4}"))
            .unwrap_or_default()
    );
    for it in state.convergence_warnings(0.95) {
        eprintln!(
            "warning: iteration {it} ended below 95% of its peak training accuracy; consider more epochs or a lower lr"
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport {
    seed: u64,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    csr: Option<CsrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    memorization: Option<MemorizationReport>,
}

#[derive(Serialize)]
struct CsrReport {
    radius: f64,
    budget: usize,
    value: f64,
}

#[derive(Serialize)]
struct MemorizationReport {
    peak_test_acc: f64,
    peak_epoch: usize,
    final_test_acc: f64,
    peak_minus_final: f64,
    final_train_acc: f64,
}

fn curve_from_csv(text: &str) -> Result<CurveRecord<f64>, CliError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(validation(format!("curve.csv row {}: bad field count", ln + 1)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| validation(format!("curve.csv row {}: bad value", ln + 1)))
        };
        train.push(parse(fields[1])?);
        test.push(parse(fields[2])?);
    }
    Ok(CurveRecord::new(train, test, None)?)
}

pub fn analyze(ctx: &Context) -> Result<(), CliError> {
    let analysis = ctx.config.analysis.clone().unwrap_or(crate::config::AnalysisSection {
        csr_radius: None,
        csr_budget: 200,
        histogram_bins: 20,
        trajectories: 0,
        save_trace: false,
    });
    let noisy_path = ctx.require_artifact("noisy.csv")?;
    let text = fs::read_to_string(&noisy_path)
        .map_err(|e| validation(format!("cannot read {}: {e}", noisy_path.display())))?;
    let noisy = data::noisy_from_csv::<f64>(&text)?;

    // Label-distance histogram from the latest soft labels.
    if ctx.artifact("soft_labels.csv").is_file() {
        let text = fs::read_to_string(ctx.artifact("soft_labels.csv"))
            .map_err(|e| validation(format!("cannot read soft_labels.csv: {e}")))?;
        let soft = labelnoise::seal::SoftLabels::<f64>::from_csv(&text)?;
        let counts = distance_histogram(&soft, &noisy, analysis.histogram_bins)?;
        ctx.write("histogram.csv", &histogram_to_csv(&counts))?;
        println!(
            "histogram over {} flipped instances written to histogram.csv",
            counts.iter().sum::<usize>()
        );
    }

    // Per-instance memorization trajectories for the first flipped indices.
    if analysis.trajectories > 0 {
        let trace_path = ctx.require_artifact("trace.csv")?;
        let text = fs::read_to_string(&trace_path)
            .map_err(|e| validation(format!("cannot read {}: {e}", trace_path.display())))?;
        let trace = trace_from_csv(&text)?;
        let mask = noisy
            .flip_mask()
            .ok_or_else(|| validation("noisy.csv carries no clean labels for trajectories"))?;
        let clean = noisy.clean_labels().expect("mask implies clean labels");
        let mut written = 0;
        for i in 0..noisy.len() {
            if written == analysis.trajectories {
                break;
            }
            if mask[i] {
                let t = instance_trajectory(&trace, i, clean[i], noisy.noisy_labels()[i])?;
                ctx.write(&format!("trajectory_{i}.csv"), &t.to_csv())?;
                written += 1;
            }
        }
        println!("wrote {written} trajectory files");
    }

    // Critical-sample ratio of the saved model over the dataset.
    let csr = match analysis.csr_radius {
        Some(radius) => {
            let (spec, params) = load_model(ctx)?;
            let value = critical_sample_ratio(
                &params,
                &spec,
                noisy.features(),
                radius,
                analysis.csr_budget,
                derive_seed(ctx.seed, "csr"),
            )?;
            println!("critical sample ratio at radius {radius}: {value:.4}");
            Some(CsrReport {
                radius,
                budget: analysis.csr_budget,
                value,
            })
        }
        None => None,
    };

    let memorization = if ctx.artifact("curve.csv").is_file() {
        let text = fs::read_to_string(ctx.artifact("curve.csv"))
            .map_err(|e| validation(format!("cannot read curve.csv: {e}")))?;
        let curve = curve_from_csv(&text)?;
        let s = memorization_summary(&curve);
        Some(MemorizationReport {
            peak_test_acc: s.peak_test_acc,
            peak_epoch: s.peak_epoch,
            final_test_acc: s.final_test_acc,
            peak_minus_final: s.peak_minus_final,
            final_train_acc: s.final_train_acc,
        })
    } else {
        None
    };

    write_json(
        ctx,
        "analysis.json",
        &AnalysisReport {
            seed: ctx.seed,
            config_hash: ctx.config.hash(),
            csr,
            memorization,
        },
    )?;
    Ok(())
}
