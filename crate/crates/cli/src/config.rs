//! Experiment configuration: a single JSON tree validated up front, every
//! violation reported with the offending field path.

use std::path::{Path, PathBuf};

use labelnoise::nn::LrDecay;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub test_dataset: Option<DatasetSection>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    pub network: NetworkSection,
    pub train: TrainSection,
    #[serde(default)]
    pub seal: Option<SealSection>,
    #[serde(default)]
    pub analysis: Option<AnalysisSection>,
    #[serde(default)]
    pub hypothesis: Option<HypothesisSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    GaussianMixture {
        class_count: usize,
        per_class: usize,
        dim: usize,
        radius: f64,
        sigma: f64,
    },
    Csv {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Ccn,
    Idn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub matrix: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum MatrixSpec {
    Named(NamedMatrix),
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMatrix {
    Uniform,
    Pair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    #[serde(default)]
    pub lr_decay: Option<LrDecay>,
}

fn default_momentum() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SealSection {
    pub iterations: usize,
    #[serde(default)]
    pub warm_start: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub csr_radius: Option<f64>,
    #[serde(default = "default_budget")]
    pub csr_budget: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// How many flipped instances get a trajectory CSV.
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default)]
    pub save_trace: bool,
}

fn default_budget() -> usize {
    200
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSection {
    pub holdout: usize,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default)]
    pub matrix: Option<MatrixSpec>,
    #[serde(default)]
    pub weights_csv: Option<PathBuf>,
    #[serde(default)]
    pub offline: Option<OfflineHypothesis>,
}

fn default_significance() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineHypothesis {
    pub ccn_bound: f64,
    pub observed_error: f64,
    pub m: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("config: cannot read {}: {e}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| format!("config: {e}"))?;
        let problems = config.validate();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(problems.join("; "))
        }
    }

    /// Hash of the canonical JSON encoding, embedded in metadata files.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        validate_dataset(&self.dataset, "dataset", &mut problems);
        if let Some(test) = &self.test_dataset {
            validate_dataset(test, "test_dataset", &mut problems);
        }
        if let Some(noise) = &self.noise {
            match noise.fraction {
                Some(f) if !(0.0..=1.0).contains(&f) => {
                    problems.push(format!("noise.fraction: {f} outside [0, 1]"));
                }
                None => {
                    let needs_fraction = noise.kind == NoiseKind::Idn
                        || !matches!(noise.matrix, Some(MatrixSpec::Csv { .. }));
                    if needs_fraction {
                        problems.push("noise.fraction: required unless a CSV matrix is given".into());
                    }
                }
                _ => {}
            }
            if let Some(MatrixSpec::Csv { csv }) = &noise.matrix {
                check_file(csv, "noise.matrix.csv", &mut problems);
            }
        }
        if self.network.hidden.contains(&0) {
            problems.push("network.hidden: widths must be positive".into());
        }
        let t = &self.train;
        if t.epochs == 0 {
            problems.push("train.epochs: must be >= 1".into());
        }
        if t.batch_size == 0 {
            problems.push("train.batch_size: must be >= 1".into());
        }
        if !(t.lr.is_finite() && t.lr > 0.0) {
            problems.push(format!("train.lr: {} must be positive", t.lr));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            problems.push(format!("train.momentum: {} outside [0, 1)", t.momentum));
        }
        if !(t.weight_decay.is_finite() && t.weight_decay >= 0.0) {
            problems.push(format!("train.weight_decay: {} must be nonnegative", t.weight_decay));
        }
        if let Some(d) = &t.lr_decay {
            if d.at_epoch == 0 || !(d.factor.is_finite() && d.factor > 0.0) {
                problems.push("train.lr_decay: at_epoch >= 1 and factor > 0 required".into());
            }
        }
        if let Some(seal) = &self.seal {
            if seal.iterations == 0 {
                problems.push("seal.iterations: must be >= 1".into());
            }
        }
        if let Some(a) = &self.analysis {
            if let Some(r) = a.csr_radius {
                if !(r.is_finite() && r > 0.0) {
                    problems.push(format!("analysis.csr_radius: {r} must be positive"));
                }
            }
            if a.csr_budget == 0 {
                problems.push("analysis.csr_budget: must be >= 1".into());
            }
            if a.histogram_bins == 0 {
                problems.push("analysis.histogram_bins: must be >= 1".into());
            }
        }
        if let Some(h) = &self.hypothesis {
            if h.holdout == 0 {
                problems.push("hypothesis.holdout: must be >= 1".into());
            }
            if !(h.significance > 0.0 && h.significance < 1.0) {
                problems.push(format!(
                    "hypothesis.significance: {} outside (0, 1)",
                    h.significance
                ));
            }
            if let Some(MatrixSpec::Csv { csv }) = &h.matrix {
                check_file(csv, "hypothesis.matrix.csv", &mut problems);
            }
            if let Some(w) = &h.weights_csv {
                check_file(w, "hypothesis.weights_csv", &mut problems);
            }
            if let Some(o) = &h.offline {
                if !(0.0..=1.0).contains(&o.ccn_bound) {
                    problems.push(format!("hypothesis.offline.ccn_bound: {} outside [0, 1]", o.ccn_bound));
                }
                if !(0.0..=1.0).contains(&o.observed_error) {
                    problems.push(format!(
                        "hypothesis.offline.observed_error: {} outside [0, 1]",
                        o.observed_error
                    ));
                }
                if o.m == 0 {
                    problems.push("hypothesis.offline.m: must be >= 1".into());
                }
            }
        }
        problems
    }
}

fn validate_dataset(section: &DatasetSection, path: &str, problems: &mut Vec<String>) {
    match section {
        DatasetSection::GaussianMixture {
            class_count,
            per_class,
            dim,
            radius,
            sigma,
        } => {
            if *class_count < 2 {
                problems.push(format!("{path}.class_count: must be >= 2"));
            }
            if *per_class == 0 {
                problems.push(format!("{path}.per_class: must be >= 1"));
            }
            if *dim < *class_count {
                problems.push(format!(
                    "{path}.dim: must be >= class_count for axis centers"
                ));
            }
            if !(radius.is_finite() && *radius > 0.0) {
                problems.push(format!("{path}.radius: {radius} must be positive"));
            }
            if !(sigma.is_finite() && *sigma > 0.0) {
                problems.push(format!("{path}.sigma: {sigma} must be positive"));
            }
        }
        DatasetSection::Csv { path: file } => check_file(file, &format!("{path}.path"), problems),
        DatasetSection::Idx { images, labels } => {
            check_file(images, &format!("{path}.images"), problems);
            check_file(labels, &format!("{path}.labels"), problems);
        }
    }
}

fn check_file(file: &Path, field: &str, problems: &mut Vec<String>) {
    if !file.is_file() {
        problems.push(format!("{field}: file not found: {}", file.display()));
    }
}
