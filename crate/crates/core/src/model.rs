//! Domain types shared by the detectors, metrics, aggregation and storage layers.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("field `{0}` must not be empty")]
    Empty(&'static str),
    #[error("unknown detector `{0}`")]
    UnknownDetector(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("duplicate OOD dataset `{0}`")]
    DuplicateOodSet(String),
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// The seven supported OOD detection approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    MaxSoftmax,
    Odin,
    Mahalanobis,
    Entropy,
    Margin,
    McDropout,
    MutualInformation,
}

impl DetectorId {
    pub const ALL: [DetectorId; 7] = [
        DetectorId::MaxSoftmax,
        DetectorId::Odin,
        DetectorId::Mahalanobis,
        DetectorId::Entropy,
        DetectorId::Margin,
        DetectorId::McDropout,
        DetectorId::MutualInformation,
    ];

    /// Stable lowercase identifier used in file names and CSV cells.
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::MaxSoftmax => "max-softmax",
            DetectorId::Odin => "odin",
            DetectorId::Mahalanobis => "md",
            DetectorId::Entropy => "entropy",
            DetectorId::Margin => "margin",
            DetectorId::McDropout => "mc-d",
            DetectorId::MutualInformation => "mi",
        }
    }

    /// Human-facing label used in rendered reports.
    pub fn label(self) -> &'static str {
        match self {
            DetectorId::MaxSoftmax => "max-softmax",
            DetectorId::Odin => "ODIN",
            DetectorId::Mahalanobis => "MD",
            DetectorId::Entropy => "Entropy",
            DetectorId::Margin => "Margin",
            DetectorId::McDropout => "MC-D",
            DetectorId::MutualInformation => "MI",
        }
    }

    pub fn needs_mc_passes(self) -> bool {
        matches!(self, DetectorId::McDropout | DetectorId::MutualInformation)
    }

    pub fn needs_train_data(self) -> bool {
        self == DetectorId::Mahalanobis
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let id = match lower.as_str() {
            "max-softmax" | "msp" | "maxsoftmax" | "max_softmax" => DetectorId::MaxSoftmax,
            "odin" => DetectorId::Odin,
            "md" | "mahalanobis" => DetectorId::Mahalanobis,
            "entropy" => DetectorId::Entropy,
            "margin" => DetectorId::Margin,
            "mc-d" | "mcd" | "mc-dropout" | "mc_dropout" => DetectorId::McDropout,
            "mi" | "mutual-information" | "mutual_information" => DetectorId::MutualInformation,
            _ => return Err(ModelError::UnknownDetector(s.to_string())),
        };
        Ok(id)
    }
}

/// Whether a smaller or a larger metric value indicates a better detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LowerBetter => "lower-better",
            Orientation::HigherBetter => "higher-better",
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Orientation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "lower-better" => Ok(Orientation::LowerBetter),
            "higher-better" => Ok(Orientation::HigherBetter),
            other => Err(ModelError::Invalid {
                field: "orientation",
                reason: format!("`{other}` is neither lower-better nor higher-better"),
            }),
        }
    }
}

/// The five OOD detection metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricId {
    FprAt95Tpr,
    DetectionError,
    Auroc,
    AuprIn,
    AuprOut,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::FprAt95Tpr,
        MetricId::DetectionError,
        MetricId::Auroc,
        MetricId::AuprIn,
        MetricId::AuprOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::FprAt95Tpr => "fpr_at_95tpr",
            MetricId::DetectionError => "detection_error",
            MetricId::Auroc => "auroc",
            MetricId::AuprIn => "aupr_in",
            MetricId::AuprOut => "aupr_out",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricId::FprAt95Tpr => "FPR@95%TPR",
            MetricId::DetectionError => "Detection error",
            MetricId::Auroc => "AUROC",
            MetricId::AuprIn => "AUPR-In",
            MetricId::AuprOut => "AUPR-Out",
        }
    }

    pub fn default_orientation(self) -> Orientation {
        match self {
            MetricId::FprAt95Tpr | MetricId::DetectionError => Orientation::LowerBetter,
            MetricId::Auroc | MetricId::AuprIn | MetricId::AuprOut => Orientation::HigherBetter,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let id = match lower.as_str() {
            "fpr_at_95tpr" | "fpr" | "fpr@95%tpr" | "fpr95" => MetricId::FprAt95Tpr,
            "detection_error" | "detection error" | "det_err" => MetricId::DetectionError,
            "auroc" => MetricId::Auroc,
            "aupr_in" | "aupr-in" => MetricId::AuprIn,
            "aupr_out" | "aupr-out" => MetricId::AuprOut,
            _ => return Err(ModelError::UnknownMetric(s.to_string())),
        };
        Ok(id)
    }
}

fn non_empty(field: &'static str, value: impl Into<String>) -> Result<String, ModelError> {
    let value = value.into();
    if value.trim().is_empty() {
        Err(ModelError::Empty(field))
    } else {
        Ok(value)
    }
}

/// Aggregation condition over optimizers: (ID dataset, OOD dataset, detector).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionKeyZeta {
    pub id_dataset: String,
    pub ood_dataset: String,
    pub detector: DetectorId,
}

impl ConditionKeyZeta {
    pub fn new(
        id_dataset: impl Into<String>,
        ood_dataset: impl Into<String>,
        detector: DetectorId,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            id_dataset: non_empty("id_dataset", id_dataset)?,
            ood_dataset: non_empty("ood_dataset", ood_dataset)?,
            detector,
        })
    }
}

impl fmt::Display for ConditionKeyZeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.id_dataset, self.ood_dataset, self.detector
        )
    }
}

/// Aggregation condition over OOD sets: (ID dataset, detector, optimizer).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionKeyXi {
    pub id_dataset: String,
    pub detector: DetectorId,
    pub optimizer: String,
}

impl ConditionKeyXi {
    pub fn new(
        id_dataset: impl Into<String>,
        detector: DetectorId,
        optimizer: impl Into<String>,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            id_dataset: non_empty("id_dataset", id_dataset)?,
            detector,
            optimizer: non_empty("optimizer", optimizer)?,
        })
    }
}

impl fmt::Display for ConditionKeyXi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.id_dataset, self.detector, self.optimizer
        )
    }
}

/// The OOD datasets evaluated against one ID dataset, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OodSetRegistry {
    id_dataset: String,
    ood_datasets: Vec<String>,
}

impl OodSetRegistry {
    pub fn new(
        id_dataset: impl Into<String>,
        ood_datasets: Vec<String>,
    ) -> Result<Self, ModelError> {
        let id_dataset = non_empty("id_dataset", id_dataset)?;
        if ood_datasets.is_empty() {
            return Err(ModelError::Empty("ood_datasets"));
        }
        for (i, name) in ood_datasets.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(ModelError::Empty("ood_datasets"));
            }
            if ood_datasets[..i].contains(name) {
                return Err(ModelError::DuplicateOodSet(name.clone()));
            }
        }
        Ok(Self {
            id_dataset,
            ood_datasets,
        })
    }

    pub fn id_dataset(&self) -> &str {
        &self.id_dataset
    }

    pub fn ood_datasets(&self) -> &[String] {
        &self.ood_datasets
    }
}

/// Dense row-major matrix; one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, ModelError> {
        if rows * cols != data.len() {
            return Err(ModelError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(ModelError::Shape {
                    rows: rows.len(),
                    cols,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }
}

/// Identifies one trained model: ID dataset, optimizer and 1-based seed index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub id_dataset: String,
    pub optimizer: String,
    pub seed: u32,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.id_dataset, self.optimizer, self.seed)
    }
}

/// Every serialized output of one trained model.
///
/// Training logits/labels are optional so that trees exported without them can
/// still be scored by the detectors that do not fit a Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T> {
    pub key: RunKey,
    pub num_classes: usize,
    pub id_test_logits: Matrix<T>,
    pub id_test_labels: Option<Vec<usize>>,
    pub train_logits: Option<Matrix<T>>,
    pub train_labels: Option<Vec<usize>>,
    pub ood_logits: BTreeMap<String, Matrix<T>>,
    /// Population name (`id` or an OOD set) to its stochastic forward passes.
    pub mc_passes: BTreeMap<String, Vec<Matrix<T>>>,
}

/// Population name used for the ID test set in score trees and MC pass directories.
pub const ID_POPULATION: &str = "id";

/// One broken invariant of a [`RunRecord`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn check_matrix<T: Scalar>(
    out: &mut Vec<Violation>,
    field: &str,
    matrix: &Matrix<T>,
    num_classes: usize,
) {
    if matrix.cols() != num_classes {
        out.push(Violation {
            field: field.to_string(),
            rule: format!("expected {num_classes} columns, found {}", matrix.cols()),
        });
    }
    if let Some(pos) = matrix.as_slice().iter().position(|v| !v.is_finite()) {
        let cols = matrix.cols().max(1);
        out.push(Violation {
            field: field.to_string(),
            rule: format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            ),
        });
    }
}

fn check_labels(out: &mut Vec<Violation>, field: &str, labels: &[usize], num_classes: usize) {
    if let Some((row, label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        out.push(Violation {
            field: field.to_string(),
            rule: format!("label {label} at row {row} outside [0, {num_classes})"),
        });
    }
}

/// Checks the structural invariants of a run record. An empty result means valid.
pub fn validate_run<T: Scalar>(record: &RunRecord<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = record.num_classes;
    if k == 0 {
        out.push(Violation {
            field: "num_classes".into(),
            rule: "must be positive".into(),
        });
    }
    if record.key.id_dataset.trim().is_empty() {
        out.push(Violation {
            field: "key.id_dataset".into(),
            rule: "must not be empty".into(),
        });
    }
    if record.key.optimizer.trim().is_empty() {
        out.push(Violation {
            field: "key.optimizer".into(),
            rule: "must not be empty".into(),
        });
    }
    if record.key.seed == 0 {
        out.push(Violation {
            field: "key.seed".into(),
            rule: "seed index starts at 1".into(),
        });
    }

    check_matrix(&mut out, "id_test_logits", &record.id_test_logits, k);
    if let Some(labels) = &record.id_test_labels {
        if labels.len() != record.id_test_logits.rows() {
            out.push(Violation {
                field: "id_test_labels".into(),
                rule: format!(
                    "{} labels for {} logit rows",
                    labels.len(),
                    record.id_test_logits.rows()
                ),
            });
        }
        check_labels(&mut out, "id_test_labels", labels, k);
    }

    match (&record.train_logits, &record.train_labels) {
        (Some(logits), Some(labels)) => {
            check_matrix(&mut out, "train_logits", logits, k);
            if labels.len() != logits.rows() {
                out.push(Violation {
                    field: "train_labels".into(),
                    rule: format!("{} labels for {} logit rows", labels.len(), logits.rows()),
                });
            }
            check_labels(&mut out, "train_labels", labels, k);
        }
        (Some(logits), None) => check_matrix(&mut out, "train_logits", logits, k),
        (None, Some(_)) => out.push(Violation {
            field: "train_logits".into(),
            rule: "train labels present without train logits".into(),
        }),
        (None, None) => {}
    }

    for (name, matrix) in &record.ood_logits {
        check_matrix(&mut out, &format!("ood_logits[{name}]"), matrix, k);
    }

    for (population, passes) in &record.mc_passes {
        let expected_rows = if population == ID_POPULATION {
            Some(record.id_test_logits.rows())
        } else {
            record.ood_logits.get(population).map(Matrix::rows)
        };
        if expected_rows.is_none() {
            out.push(Violation {
                field: format!("mc_passes[{population}]"),
                rule: "population is neither the ID test set nor a declared OOD set".into(),
            });
        }
        let first_rows = passes.first().map(Matrix::rows);
        for (s, pass) in passes.iter().enumerate() {
            let field = format!("mc_passes[{population}][{s}]");
            check_matrix(&mut out, &field, pass, k);
            if Some(pass.rows()) != first_rows || expected_rows.is_some_and(|n| n != pass.rows()) {
                out.push(Violation {
                    field,
                    rule: format!(
                        "pass has {} rows; every pass must match the population's {} rows",
                        pass.rows(),
                        expected_rows.or(first_rows).unwrap_or(0)
                    ),
                });
            }
        }
    }
    out
}

/// Additional checks needed before running the given detectors on a record.
pub fn validate_run_for_detectors<T: Scalar>(
    record: &RunRecord<T>,
    detectors: &[DetectorId],
) -> Vec<Violation> {
    let mut out = validate_run(record);
    if detectors.contains(&DetectorId::Mahalanobis) {
        match &record.train_labels {
            None => out.push(Violation {
                field: "train_labels".into(),
                rule: "required by the md detector".into(),
            }),
            Some(labels) => {
                let mut counts = vec![0usize; record.num_classes];
                for &l in labels.iter().filter(|&&l| l < record.num_classes) {
                    counts[l] += 1;
                }
                for (class, &c) in counts.iter().enumerate() {
                    if c < 2 {
                        out.push(Violation {
                            field: "train_labels".into(),
                            rule: format!(
                                "class {class} has {c} training rows; md needs at least 2"
                            ),
                        });
                    }
                }
            }
        }
        if record.train_logits.is_none() {
            out.push(Violation {
                field: "train_logits".into(),
                rule: "required by the md detector".into(),
            });
        }
    }
    if detectors.iter().any(|d| d.needs_mc_passes()) {
        for (population, passes) in &record.mc_passes {
            if passes.len() < 2 {
                out.push(Violation {
                    field: format!("mc_passes[{population}]"),
                    rule: format!("{} passes; MC detectors need at least 2", passes.len()),
                });
            }
        }
    }
    out
}

/// The five metric values for one (run, OOD set, detector) triple, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector<T> {
    pub fpr_at_95tpr: T,
    pub detection_error: T,
    pub auroc: T,
    pub aupr_in: T,
    pub aupr_out: T,
}

impl<T: Scalar> MetricVector<T> {
    pub fn from_fn(mut f: impl FnMut(MetricId) -> T) -> Self {
        Self {
            fpr_at_95tpr: f(MetricId::FprAt95Tpr),
            detection_error: f(MetricId::DetectionError),
            auroc: f(MetricId::Auroc),
            aupr_in: f(MetricId::AuprIn),
            aupr_out: f(MetricId::AuprOut),
        }
    }

    pub fn get(&self, metric: MetricId) -> T {
        match metric {
            MetricId::FprAt95Tpr => self.fpr_at_95tpr,
            MetricId::DetectionError => self.detection_error,
            MetricId::Auroc => self.auroc,
            MetricId::AuprIn => self.aupr_in,
            MetricId::AuprOut => self.aupr_out,
        }
    }

    /// Returns the first metric outside `[0, 100]`, if any.
    pub fn out_of_range(&self) -> Option<(MetricId, T)> {
        let hundred = T::lit(100.0);
        MetricId::ALL
            .into_iter()
            .map(|m| (m, self.get(m)))
            .find(|&(_, v)| !(v >= T::zero() && v <= hundred))
    }
}

/// Mean and (population) variance of a metric under some conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Scalar> MomentPair<T> {
    pub fn new(mean: T, variance: T) -> Result<Self, ModelError> {
        if !mean.is_finite() {
            return Err(ModelError::Invalid {
                field: "mean",
                reason: format!("{mean} is not finite"),
            });
        }
        if !(variance >= T::zero()) || !variance.is_finite() {
            return Err(ModelError::Invalid {
                field: "variance",
                reason: format!("{variance} is not a finite non-negative number"),
            });
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }
}

/// Settings for the mixture aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig<T> {
    /// Added to each standard deviation before inverting it.
    pub epsilon: T,
    pub orientation: BTreeMap<MetricId, Orientation>,
}

impl<T: Scalar> Default for AggregationConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-12),
            orientation: MetricId::ALL
                .into_iter()
                .map(|m| (m, m.default_orientation()))
                .collect(),
        }
    }
}

impl<T: Scalar> AggregationConfig<T> {
    pub fn with_epsilon(epsilon: T) -> Result<Self, ModelError> {
        let config = Self {
            epsilon,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.epsilon > T::zero()) || !self.epsilon.is_finite() {
            return Err(ModelError::Invalid {
                field: "epsilon",
                reason: format!("{} must be a finite positive number", self.epsilon),
            });
        }
        if let Some(missing) = MetricId::ALL
            .into_iter()
            .find(|m| !self.orientation.contains_key(m))
        {
            return Err(ModelError::Invalid {
                field: "orientation",
                reason: format!("no orientation for metric `{missing}`"),
            });
        }
        Ok(())
    }

    pub fn orientation_of(&self, metric: MetricId) -> Orientation {
        self.orientation
            .get(&metric)
            .copied()
            .unwrap_or_else(|| metric.default_orientation())
    }
}

/// Normalized mixture weights, one per mixture member, in member order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    /// Wraps weights that are non-negative and sum to one within `1e-9`.
    pub fn new(weights: Vec<T>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::Empty("weights"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || *w > T::one()) {
            return Err(ModelError::Invalid {
                field: "weights",
                reason: "every weight must lie in [0, 1]".into(),
            });
        }
        let sum: T = weights.iter().copied().sum();
        let tolerance = T::lit(1e-9).max(T::epsilon() * T::count(weights.len()) * T::lit(4.0));
        if (sum - T::one()).abs() > tolerance {
            return Err(ModelError::Invalid {
                field: "weights",
                reason: format!("weights sum to {sum}, not 1"),
            });
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> RunRecord<f64> {
        let logits = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let mut ood = BTreeMap::new();
        ood.insert(
            "noise".to_string(),
            Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap(),
        );
        RunRecord {
            key: RunKey {
                id_dataset: "toy".into(),
                optimizer: "sgd".into(),
                seed: 1,
            },
            num_classes: 2,
            id_test_logits: logits.clone(),
            id_test_labels: Some(vec![0, 1, 0]),
            train_logits: Some(logits),
            train_labels: Some(vec![0, 1, 1]),
            ood_logits: ood,
            mc_passes: BTreeMap::new(),
        }
    }

    #[test]
    fn well_formed_record_has_no_violations() {
        assert!(validate_run(&record()).is_empty());
    }

    #[test]
    fn narrow_ood_matrix_is_reported() {
        let mut r = record();
        r.ood_logits.insert(
            "narrow".into(),
            Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
        );
        let v = validate_run(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "ood_logits[narrow]");
    }

    #[test]
    fn label_equal_to_k_is_reported() {
        let mut r = record();
        r.train_labels = Some(vec![0, 1, 2]);
        let v = validate_run(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "train_labels");
        assert!(v[0].rule.contains("outside [0, 2)"));
    }

    #[test]
    fn md_requires_two_rows_per_class() {
        let r = record();
        let v = validate_run_for_detectors(&r, &[DetectorId::Mahalanobis]);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].rule.contains("class 0 has 1"));
    }

    #[test]
    fn mismatched_mc_pass_rows_are_reported() {
        let mut r = record();
        r.mc_passes.insert(
            ID_POPULATION.into(),
            vec![
                r.id_test_logits.clone(),
                Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            ],
        );
        let v = validate_run(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "mc_passes[id][1]");
    }

    #[test]
    fn identifiers_round_trip() {
        for d in DetectorId::ALL {
            assert_eq!(d.as_str().parse::<DetectorId>().unwrap(), d);
            assert_eq!(d.label().parse::<DetectorId>().unwrap(), d);
        }
        for m in MetricId::ALL {
            assert_eq!(m.as_str().parse::<MetricId>().unwrap(), m);
        }
        assert!("nope".parse::<DetectorId>().is_err());
    }

    #[test]
    fn registry_rejects_duplicates_and_empty() {
        assert!(OodSetRegistry::new("MNIST", vec![]).is_err());
        assert_eq!(
            OodSetRegistry::new("MNIST", vec!["a".into(), "a".into()]),
            Err(ModelError::DuplicateOodSet("a".into()))
        );
        assert!(ConditionKeyZeta::new("", "x", DetectorId::Odin).is_err());
    }

    #[test]
    fn weight_vector_checks_sum() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn default_config_covers_all_metrics() {
        let c = AggregationConfig::<f64>::default();
        c.validate().unwrap();
        assert_eq!(
            c.orientation_of(MetricId::FprAt95Tpr),
            Orientation::LowerBetter
        );
        assert_eq!(
            c.orientation_of(MetricId::AuprOut),
            Orientation::HigherBetter
        );
        assert!(AggregationConfig::with_epsilon(0.0f64).is_err());
    }
}
