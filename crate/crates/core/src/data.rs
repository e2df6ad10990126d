//! Dataset construction: synthetic Gaussian mixtures, IDX-format binary files,
//! seeded splits, and the CSV interchange format.
//!
//! Labels are 1-based throughout the API (`{1..c}`); IDX label files, which
//! store 0-based digits, are shifted on load.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;
use crate::scalar::Scalar;

/// Feature rows with clean labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<F> {
    features: Matrix<F>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<F: Scalar> LabeledDataset<F> {
    pub fn new(features: Matrix<F>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Domain("dataset must have at least one row".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Domain("features must be finite".into()));
        }
        for &y in &labels {
            if y == 0 || y > class_count {
                return Err(Error::Domain(format!(
                    "label {y} out of range 1..={class_count}"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Matrix<F> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    /// Disjoint seeded partition into `(train, holdout)` with `m` holdout rows.
    pub fn split(&self, holdout_count: usize, seed: u64) -> Result<(Self, Self)> {
        let (train_idx, holdout_idx) = split_indices(self.len(), holdout_count, seed)?;
        Ok((self.subset(&train_idx)?, self.subset(&holdout_idx)?))
    }
}

/// Feature rows with observed noisy labels; clean labels and the flip mask are
/// carried along when the corruption is synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset<F> {
    features: Matrix<F>,
    noisy_labels: Vec<usize>,
    clean_labels: Option<Vec<usize>>,
    flip_mask: Option<Vec<bool>>,
    class_count: usize,
}

impl<F: Scalar> NoisyDataset<F> {
    pub fn new(
        features: Matrix<F>,
        noisy_labels: Vec<usize>,
        clean_labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Domain("dataset must have at least one row".into()));
        }
        if noisy_labels.len() != n {
            return Err(Error::Dimension(format!(
                "{n} feature rows but {} noisy labels",
                noisy_labels.len()
            )));
        }
        for &y in &noisy_labels {
            if y == 0 || y > class_count {
                return Err(Error::Domain(format!(
                    "noisy label {y} out of range 1..={class_count}"
                )));
            }
        }
        let flip_mask = match &clean_labels {
            Some(clean) => {
                if clean.len() != n {
                    return Err(Error::Dimension(format!(
                        "{n} feature rows but {} clean labels",
                        clean.len()
                    )));
                }
                for &y in clean {
                    if y == 0 || y > class_count {
                        return Err(Error::Domain(format!(
                            "clean label {y} out of range 1..={class_count}"
                        )));
                    }
                }
                Some(
                    clean
                        .iter()
                        .zip(&noisy_labels)
                        .map(|(&y, &yb)| y != yb)
                        .collect(),
                )
            }
            None => None,
        };
        Ok(Self {
            features,
            noisy_labels,
            clean_labels,
            flip_mask,
            class_count,
        })
    }

    /// Wraps a clean dataset with its labels unchanged (zero flips).
    pub fn from_clean(dataset: &LabeledDataset<F>) -> Self {
        Self::new(
            dataset.features().clone(),
            dataset.labels().to_vec(),
            Some(dataset.labels().to_vec()),
            dataset.class_count(),
        )
        .expect("clean dataset is always consistent")
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &Matrix<F> {
        &self.features
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    pub fn flip_mask(&self) -> Option<&[bool]> {
        self.flip_mask.as_deref()
    }

    pub fn flip_count(&self) -> Option<usize> {
        self.flip_mask
            .as_ref()
            .map(|m| m.iter().filter(|&&f| f).count())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.noisy_labels[i]).collect(),
            self.clean_labels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            self.class_count,
        )
    }

    pub fn split(&self, holdout_count: usize, seed: u64) -> Result<(Self, Self)> {
        let (train_idx, holdout_idx) = split_indices(self.len(), holdout_count, seed)?;
        Ok((self.subset(&train_idx)?, self.subset(&holdout_idx)?))
    }
}

fn split_indices(n: usize, holdout: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if holdout == 0 || holdout >= n {
        return Err(Error::Domain(format!(
            "holdout count {holdout} must satisfy 1 <= m < n = {n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(seed);
    indices.shuffle(&mut rng);
    let holdout_idx = indices.split_off(n - holdout);
    Ok((indices, holdout_idx))
}

/// A generated mixture plus a warning for degenerate (duplicate) centers.
#[derive(Debug, Clone)]
pub struct GaussianMixture<F> {
    pub dataset: LabeledDataset<F>,
    pub warning: Option<String>,
}

/// Isotropic Gaussian mixture: `per_class` draws at each of the `c` centers.
/// Rows are grouped by class (class 1 first); seeded and pure.
pub fn gen_gaussian_mixture<F: Scalar>(
    class_count: usize,
    per_class: usize,
    centers: &Matrix<F>,
    sigma: f64,
    seed: u64,
) -> Result<GaussianMixture<F>> {
    if class_count < 2 {
        return Err(Error::Domain("need at least two classes".into()));
    }
    if per_class == 0 {
        return Err(Error::Domain("per_class must be >= 1".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    if centers.rows() != class_count {
        return Err(Error::Dimension(format!(
            "{} centers for {class_count} classes",
            centers.rows()
        )));
    }

    let mut warning = None;
    'outer: for a in 0..class_count {
        for b in a + 1..class_count {
            if centers.row(a) == centers.row(b) {
                warning = Some(format!("duplicate centers for classes {} and {}", a + 1, b + 1));
                break 'outer;
            }
        }
    }

    let dim = centers.cols();
    let n = class_count * per_class;
    let normal = Normal::new(0.0f64, sigma).expect("sigma validated");
    let mut rng = seeded_rng(seed);
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..class_count {
        let center = centers.row(class);
        for i in 0..per_class {
            let row = features.row_mut(class * per_class + i);
            for (j, r) in row.iter_mut().enumerate() {
                *r = center[j] + F::of(normal.sample(&mut rng));
            }
            labels.push(class + 1);
        }
    }
    Ok(GaussianMixture {
        dataset: LabeledDataset::new(features, labels, class_count)?,
        warning,
    })
}

/// Centers at `radius * e_k` for `k = 1..c`; equidistant class pairs.
pub fn axis_centers<F: Scalar>(class_count: usize, dim: usize, radius: f64) -> Result<Matrix<F>> {
    if dim < class_count {
        return Err(Error::Domain(format!(
            "axis centers need dim >= class count ({dim} < {class_count})"
        )));
    }
    let mut centers = Matrix::zeros(class_count, dim);
    for k in 0..class_count {
        *centers.at_mut(k, k) = F::of(radius);
    }
    Ok(centers)
}

/// One-hot simplex vector for a 1-based label.
pub fn one_hot<F: Scalar>(label: usize, class_count: usize) -> Result<Vec<F>> {
    if label == 0 || label > class_count {
        return Err(Error::Domain(format!(
            "label {label} out of range 1..={class_count}"
        )));
    }
    let mut v = vec![F::zero(); class_count];
    v[label - 1] = F::one();
    Ok(v)
}

// ---------------------------------------------------------------------------
// IDX binary format
// ---------------------------------------------------------------------------

const IDX_UNSIGNED_BYTE: u8 = 0x08;

/// Parsed IDX tensor: big-endian dims header plus a row-major `u8` payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Payload scaled into `[0, 1]` (value / 255), flattened row-major.
    pub fn to_unit_scaled<F: Scalar>(&self) -> Vec<F> {
        self.data
            .iter()
            .map(|&b| F::of(f64::from(b) / 255.0))
            .collect()
    }

    /// Row count (first dim) and flattened per-row width.
    pub fn row_shape(&self) -> (usize, usize) {
        let rows = self.dims.first().copied().unwrap_or(0);
        let width: usize = self.dims.iter().skip(1).product();
        (rows, width)
    }
}

/// Parses an IDX byte stream (unsigned-byte element type only).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::IdxFormat("header shorter than 4 bytes".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::IdxFormat(format!(
            "magic must start with two zero bytes, found {:02x} {:02x}",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != IDX_UNSIGNED_BYTE {
        return Err(Error::IdxUnsupportedType(bytes[2]));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::IdxFormat("rank must be at least 1".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::IdxFormat(format!(
            "truncated dims: rank {rank} needs {header} header bytes, found {}",
            bytes.len()
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for d in 0..rank {
        let off = 4 + 4 * d;
        let dim = u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
        dims.push(dim as usize);
    }
    let expected: usize = dims.iter().product();
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::IdxLength { expected, actual });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Serializes dims and payload back to IDX bytes (inverse of [`parse_idx`]).
pub fn serialize_idx(dims: &[usize], data: &[u8]) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 255 {
        return Err(Error::Domain("rank must be in 1..=255".into()));
    }
    let expected: usize = dims.iter().product();
    if expected != data.len() {
        return Err(Error::Dimension(format!(
            "dims promise {expected} bytes, payload has {}",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&[0, 0, IDX_UNSIGNED_BYTE, dims.len() as u8]);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Domain(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    Ok(out)
}

/// Builds a dataset from MNIST-style image and label IDX files. Pixel values
/// are scaled to `[0, 1]`; 0-based stored labels become `1..=c`.
pub fn idx_dataset<F: Scalar>(images: &[u8], labels: &[u8]) -> Result<LabeledDataset<F>> {
    let images = parse_idx(images)?;
    let labels = parse_idx(labels)?;
    let (n, width) = images.row_shape();
    if labels.dims.len() != 1 || labels.dims[0] != n {
        return Err(Error::Dimension(format!(
            "{n} images but label dims {:?}",
            labels.dims
        )));
    }
    let class_count = labels.data.iter().copied().max().unwrap_or(0) as usize + 1;
    let features = Matrix::from_vec(n, width, images.to_unit_scaled())?;
    let shifted = labels.data.iter().map(|&y| y as usize + 1).collect();
    LabeledDataset::new(features, shifted, class_count.max(2))
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

fn format_value<F: Scalar>(v: F) -> String {
    // `{}` on floats prints the shortest representation that round-trips.
    format!("{v}")
}

fn csv_header(dim: usize, noisy: bool) -> String {
    let mut cols: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
    cols.push("label".into());
    if noisy {
        cols.push("noisy_label".into());
    }
    cols.join(",")
}

/// Writes `f0,...,f{d-1},label` rows.
pub fn labeled_to_csv<F: Scalar>(dataset: &LabeledDataset<F>) -> String {
    let mut out = String::new();
    out.push_str(&csv_header(dataset.dim(), false));
    out.push('\n');
    for (row, &y) in dataset.features().iter_rows().zip(dataset.labels()) {
        for v in row {
            out.push_str(&format_value(*v));
            out.push(',');
        }
        out.push_str(&y.to_string());
        out.push('\n');
    }
    out
}

/// Writes `f0,...,f{d-1},label,noisy_label` rows; the `label` column is the
/// clean label and must be present.
pub fn noisy_to_csv<F: Scalar>(dataset: &NoisyDataset<F>) -> Result<String> {
    let clean = dataset
        .clean_labels()
        .ok_or_else(|| Error::MissingData("noisy CSV needs clean labels".into()))?;
    let mut out = String::new();
    out.push_str(&csv_header(dataset.dim(), true));
    out.push('\n');
    for (i, row) in dataset.features().iter_rows().enumerate() {
        for v in row {
            out.push_str(&format_value(*v));
            out.push(',');
        }
        out.push_str(&clean[i].to_string());
        out.push(',');
        out.push_str(&dataset.noisy_labels()[i].to_string());
        out.push('\n');
    }
    Ok(out)
}

struct CsvBody<F> {
    features: Vec<Vec<F>>,
    trailing: Vec<Vec<usize>>,
    label_cols: usize,
}

fn parse_csv_body<F: Scalar>(text: &str) -> Result<CsvBody<F>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let label_cols = match (
        cols.iter().position(|&c| c == "label"),
        cols.iter().position(|&c| c == "noisy_label"),
    ) {
        (Some(p), Some(q)) if p + 1 == q && q + 1 == cols.len() => 2,
        (Some(p), None) if p + 1 == cols.len() => 1,
        _ => {
            return Err(Error::Parse(
                "header must end in `label` or `label,noisy_label`".into(),
            ))
        }
    };
    let dim = cols.len() - label_cols;
    let mut features = Vec::new();
    let mut trailing = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields, found {}",
                lineno + 2,
                cols.len(),
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number `{f}`", lineno + 2)))?;
            row.push(F::of(v));
        }
        let mut labels = Vec::with_capacity(label_cols);
        for f in &fields[dim..] {
            let y: usize = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad label `{f}`", lineno + 2)))?;
            labels.push(y);
        }
        features.push(row);
        trailing.push(labels);
    }
    if features.is_empty() {
        return Err(Error::Parse("CSV has a header but no rows".into()));
    }
    Ok(CsvBody {
        features,
        trailing,
        label_cols,
    })
}

/// Parses a `label`-only CSV into a dataset; `c` is inferred from the labels.
pub fn labeled_from_csv<F: Scalar>(text: &str) -> Result<LabeledDataset<F>> {
    let body = parse_csv_body::<F>(text)?;
    if body.label_cols != 1 {
        return Err(Error::Parse("expected a clean dataset CSV".into()));
    }
    let labels: Vec<usize> = body.trailing.iter().map(|t| t[0]).collect();
    let class_count = labels.iter().copied().max().unwrap_or(1);
    LabeledDataset::new(Matrix::from_rows(&body.features)?, labels, class_count)
}

/// Parses a `label,noisy_label` CSV into a noisy dataset with clean labels.
pub fn noisy_from_csv<F: Scalar>(text: &str) -> Result<NoisyDataset<F>> {
    let body = parse_csv_body::<F>(text)?;
    if body.label_cols != 2 {
        return Err(Error::Parse("expected a noisy dataset CSV".into()));
    }
    let clean: Vec<usize> = body.trailing.iter().map(|t| t[0]).collect();
    let noisy: Vec<usize> = body.trailing.iter().map(|t| t[1]).collect();
    let class_count = clean.iter().chain(&noisy).copied().max().unwrap_or(1);
    NoisyDataset::new(
        Matrix::from_rows(&body.features)?,
        noisy,
        Some(clean),
        class_count,
    )
}
