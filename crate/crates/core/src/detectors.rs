//! Post-hoc OOD detectors operating on logits and MC-dropout passes.
//!
//! Every detector returns scores oriented so that a larger value means "more
//! in-distribution". Scores are never thresholded here.

use crate::model::{DetectorId, Matrix};
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("class {0} has no training rows")]
    MissingClass(usize),
    #[error("class {class} has {count} training rows; at least 2 are required")]
    InsufficientClassRows { class: usize, count: usize },
    #[error("covariance plus ridge is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("MC detectors need at least 2 passes, got {0}")]
    TooFewPasses(usize),
    #[error("detector `{detector}` needs {what}")]
    MissingInput {
        detector: DetectorId,
        what: &'static str,
    },
}

/// Oriented detector scores for one population (ID test set or one OOD set).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<T> {
    pub detector: DetectorId,
    pub population: String,
    pub scores: Vec<T>,
}

impl<T: Scalar> ScoreSet<T> {
    pub fn new(
        detector: DetectorId,
        population: impl Into<String>,
        scores: Vec<T>,
    ) -> Result<Self, DetectorError> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(DetectorError::InvalidInput(format!(
                "score {i} is not finite"
            )));
        }
        Ok(Self {
            detector,
            population: population.into(),
            scores,
        })
    }
}

/// Temperature-scaled softmax, shifted by the row maximum before exponentiation.
pub fn softmax<T: Scalar>(logits: &[T], temperature: T) -> Result<Vec<T>, DetectorError> {
    if !(temperature > T::zero()) || !temperature.is_finite() {
        return Err(DetectorError::InvalidInput(format!(
            "temperature {temperature} must be finite and positive"
        )));
    }
    if logits.is_empty() {
        return Err(DetectorError::InvalidInput("empty logit row".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::InvalidInput("non-finite logit".into()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut probs: Vec<T> = logits
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .collect();
    let total: T = probs.iter().copied().sum();
    for p in &mut probs {
        *p = *p / total;
    }
    Ok(probs)
}

fn entropy<T: Scalar>(probs: &[T]) -> T {
    -probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>()
}

fn require_classes<T: Scalar>(logits: &Matrix<T>) -> Result<(), DetectorError> {
    if logits.cols() < 2 {
        return Err(DetectorError::Shape {
            expected: "at least 2 classes".into(),
            found: format!("{} columns", logits.cols()),
        });
    }
    Ok(())
}

fn map_rows<T: Scalar>(
    logits: &Matrix<T>,
    temperature: T,
    f: impl Fn(&[T]) -> T,
) -> Result<Vec<T>, DetectorError> {
    require_classes(logits)?;
    logits
        .row_iter()
        .map(|row| softmax(row, temperature).map(|p| f(&p)))
        .collect()
}

fn max_of<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Maximum softmax probability per row.
pub fn max_softmax_score<T: Scalar>(logits: &Matrix<T>) -> Result<Vec<T>, DetectorError> {
    map_rows(logits, T::one(), max_of)
}

/// Maximum temperature-scaled softmax probability per row (no input perturbation).
pub fn odin_score<T: Scalar>(logits: &Matrix<T>, temperature: T) -> Result<Vec<T>, DetectorError> {
    map_rows(logits, temperature, max_of)
}

/// Negative predictive entropy (natural log) per row.
pub fn entropy_score<T: Scalar>(logits: &Matrix<T>) -> Result<Vec<T>, DetectorError> {
    map_rows(logits, T::one(), |p| -entropy(p))
}

/// Gap between the two largest softmax probabilities per row.
pub fn margin_score<T: Scalar>(logits: &Matrix<T>) -> Result<Vec<T>, DetectorError> {
    map_rows(logits, T::one(), |p| {
        let (mut first, mut second) = (T::neg_infinity(), T::neg_infinity());
        for &v in p {
            if v > first {
                second = first;
                first = v;
            } else if v > second {
                second = v;
            }
        }
        first - second
    })
}

/// Class-conditional Gaussian with a shared covariance, fitted on logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel<T> {
    class_means: Vec<Vec<T>>,
    covariance: Matrix<T>,
    /// Lower Cholesky factor of `covariance + ridge * I`.
    cholesky: Matrix<T>,
    ridge: T,
}

impl<T: Scalar> GaussianModel<T> {
    pub fn class_means(&self) -> &[Vec<T>] {
        &self.class_means
    }

    /// Tied covariance before the ridge is added.
    pub fn covariance(&self) -> &Matrix<T> {
        &self.covariance
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.covariance.cols()
    }

    /// Squared Mahalanobis distance of `x` to the mean of `class`.
    pub fn squared_distance(&self, x: &[T], class: usize) -> T {
        let dim = self.dim();
        let mean = &self.class_means[class];
        // Forward substitution: solve L y = (x - mean); distance is |y|^2.
        let mut y = vec![T::zero(); dim];
        for i in 0..dim {
            let mut acc = x[i] - mean[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                acc = acc - self.cholesky.get(i, j) * *yj;
            }
            y[i] = acc / self.cholesky.get(i, i);
        }
        y.iter().map(|&v| v * v).sum()
    }
}

fn cholesky<T: Scalar>(a: &[T], dim: usize) -> Result<Vec<T>, DetectorError> {
    let mut l = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum = sum - l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if !(sum > T::zero()) || !sum.is_finite() {
                    return Err(DetectorError::NotPositiveDefinite {
                        index: i,
                        pivot: sum.to_f64().unwrap_or(f64::NAN),
                    });
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Fits class means and a tied covariance, adding `1e-6 * trace / K` to the diagonal.
///
/// When the covariance is exactly zero the ridge falls back to machine epsilon so
/// the factorization still exists.
pub fn fit_gaussian<T: Scalar>(
    train_logits: &Matrix<T>,
    train_labels: &[usize],
    num_classes: usize,
) -> Result<GaussianModel<T>, DetectorError> {
    fit_gaussian_impl(train_logits, train_labels, num_classes, None)
}

/// Like [`fit_gaussian`] but with an explicit absolute ridge, which may be zero.
pub fn fit_gaussian_with_ridge<T: Scalar>(
    train_logits: &Matrix<T>,
    train_labels: &[usize],
    num_classes: usize,
    ridge: T,
) -> Result<GaussianModel<T>, DetectorError> {
    if !(ridge >= T::zero()) {
        return Err(DetectorError::InvalidInput(format!(
            "ridge {ridge} must be non-negative"
        )));
    }
    fit_gaussian_impl(train_logits, train_labels, num_classes, Some(ridge))
}

fn fit_gaussian_impl<T: Scalar>(
    train_logits: &Matrix<T>,
    train_labels: &[usize],
    num_classes: usize,
    ridge: Option<T>,
) -> Result<GaussianModel<T>, DetectorError> {
    let dim = train_logits.cols();
    if dim == 0 || num_classes == 0 {
        return Err(DetectorError::InvalidInput("empty feature space".into()));
    }
    if train_labels.len() != train_logits.rows() {
        return Err(DetectorError::Shape {
            expected: format!("{} labels", train_logits.rows()),
            found: format!("{} labels", train_labels.len()),
        });
    }
    if train_logits.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::InvalidInput(
            "non-finite training logit".into(),
        ));
    }

    let mut counts = vec![0usize; num_classes];
    let mut sums = vec![vec![T::zero(); dim]; num_classes];
    for (row, &label) in train_logits.row_iter().zip(train_labels) {
        if label >= num_classes {
            return Err(DetectorError::InvalidInput(format!(
                "label {label} outside [0, {num_classes})"
            )));
        }
        counts[label] += 1;
        for (s, &v) in sums[label].iter_mut().zip(row) {
            *s = *s + v;
        }
    }
    for (class, &count) in counts.iter().enumerate() {
        match count {
            0 => return Err(DetectorError::MissingClass(class)),
            1 => return Err(DetectorError::InsufficientClassRows { class, count }),
            _ => {}
        }
    }
    let class_means: Vec<Vec<T>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / T::count(c)).collect())
        .collect();

    let mut cov = vec![T::zero(); dim * dim];
    let mut centered = vec![T::zero(); dim];
    for (row, &label) in train_logits.row_iter().zip(train_labels) {
        for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&class_means[label]) {
            *c = v - m;
        }
        for i in 0..dim {
            for j in 0..=i {
                cov[i * dim + j] = cov[i * dim + j] + centered[i] * centered[j];
            }
        }
    }
    let m = T::count(train_logits.rows());
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[i * dim + j] / m;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }

    let ridge = ridge.unwrap_or_else(|| {
        let trace: T = (0..dim).map(|i| cov[i * dim + i]).sum();
        let relative = T::lit(1e-6) * trace / T::count(num_classes);
        if relative > T::zero() {
            relative
        } else {
            T::epsilon()
        }
    });
    let mut regularized = cov.clone();
    for i in 0..dim {
        regularized[i * dim + i] = regularized[i * dim + i] + ridge;
    }
    let factor = cholesky(&regularized, dim)?;

    Ok(GaussianModel {
        class_means,
        covariance: Matrix::from_vec(dim, dim, cov).expect("square covariance"),
        cholesky: Matrix::from_vec(dim, dim, factor).expect("square factor"),
        ridge,
    })
}

/// Negative minimum squared Mahalanobis distance to any class mean.
pub fn mahalanobis_score<T: Scalar>(
    model: &GaussianModel<T>,
    logits: &Matrix<T>,
) -> Result<Vec<T>, DetectorError> {
    if logits.cols() != model.dim() {
        return Err(DetectorError::Shape {
            expected: format!("{} columns", model.dim()),
            found: format!("{} columns", logits.cols()),
        });
    }
    if logits.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DetectorError::InvalidInput("non-finite logit".into()));
    }
    Ok(logits
        .row_iter()
        .map(|row| {
            let nearest = (0..model.class_means.len())
                .map(|k| model.squared_distance(row, k))
                .fold(T::infinity(), T::min);
            T::zero() - nearest
        })
        .collect())
}

fn check_passes<T: Scalar>(passes: &[Matrix<T>]) -> Result<(usize, usize), DetectorError> {
    if passes.len() < 2 {
        return Err(DetectorError::TooFewPasses(passes.len()));
    }
    let (rows, cols) = (passes[0].rows(), passes[0].cols());
    if let Some(bad) = passes.iter().find(|p| p.rows() != rows || p.cols() != cols) {
        return Err(DetectorError::Shape {
            expected: format!("{rows}x{cols} per pass"),
            found: format!("{}x{}", bad.rows(), bad.cols()),
        });
    }
    if cols < 2 {
        return Err(DetectorError::Shape {
            expected: "at least 2 classes".into(),
            found: format!("{cols} columns"),
        });
    }
    Ok((rows, cols))
}

/// Per row: the pass-averaged softmax and the mean of per-pass entropies.
fn mc_row_statistics<T: Scalar>(
    passes: &[Matrix<T>],
    row: usize,
    cols: usize,
) -> Result<(Vec<T>, T), DetectorError> {
    let mut mean = vec![T::zero(); cols];
    let mut mean_entropy = T::zero();
    for pass in passes {
        let p = softmax(pass.row(row), T::one())?;
        mean_entropy = mean_entropy + entropy(&p);
        for (m, v) in mean.iter_mut().zip(&p) {
            *m = *m + *v;
        }
    }
    let s = T::count(passes.len());
    for m in &mut mean {
        *m = *m / s;
    }
    Ok((mean, mean_entropy / s))
}

/// Maximum of the MC-averaged softmax per row.
pub fn mc_dropout_score<T: Scalar>(passes: &[Matrix<T>]) -> Result<Vec<T>, DetectorError> {
    let (rows, cols) = check_passes(passes)?;
    (0..rows)
        .map(|i| mc_row_statistics(passes, i, cols).map(|(mean, _)| max_of(&mean)))
        .collect()
}

/// Negative mutual information between prediction and model (BALD) per row.
pub fn mutual_information_score<T: Scalar>(passes: &[Matrix<T>]) -> Result<Vec<T>, DetectorError> {
    let (rows, cols) = check_passes(passes)?;
    (0..rows)
        .map(|i| {
            mc_row_statistics(passes, i, cols).map(|(mean, mean_entropy)| {
                let mi = (entropy(&mean) - mean_entropy).max(T::zero());
                T::zero() - mi
            })
        })
        .collect()
}

/// Detector parameters that are not part of the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSettings<T> {
    pub odin_temperature: T,
}

impl<T: Scalar> Default for DetectorSettings<T> {
    fn default() -> Self {
        Self {
            odin_temperature: T::lit(1000.0),
        }
    }
}

/// Everything a detector may read for one population.
#[derive(Debug, Clone, Copy)]
pub struct PopulationInputs<'a, T> {
    /// Deterministic (dropout disabled) logits.
    pub logits: &'a Matrix<T>,
    pub mc_passes: Option<&'a [Matrix<T>]>,
    pub gaussian: Option<&'a GaussianModel<T>>,
}

/// Runs one detector on one population.
pub fn score_population<T: Scalar>(
    detector: DetectorId,
    population: &str,
    inputs: PopulationInputs<'_, T>,
    settings: &DetectorSettings<T>,
) -> Result<ScoreSet<T>, DetectorError> {
    let passes = || {
        inputs.mc_passes.ok_or(DetectorError::MissingInput {
            detector,
            what: "MC-dropout passes",
        })
    };
    let scores = match detector {
        DetectorId::MaxSoftmax => max_softmax_score(inputs.logits)?,
        DetectorId::Odin => odin_score(inputs.logits, settings.odin_temperature)?,
        DetectorId::Entropy => entropy_score(inputs.logits)?,
        DetectorId::Margin => margin_score(inputs.logits)?,
        DetectorId::Mahalanobis => {
            let model = inputs.gaussian.ok_or(DetectorError::MissingInput {
                detector,
                what: "a fitted Gaussian model",
            })?;
            mahalanobis_score(model, inputs.logits)?
        }
        DetectorId::McDropout => mc_dropout_score(passes()?)?,
        DetectorId::MutualInformation => mutual_information_score(passes()?)?,
    };
    ScoreSet::new(detector, population, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0], 1.0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_at_high_temperature() {
        let p = softmax(&[2.0, 0.0], 1000.0).unwrap();
        let expected = 0.002f64.exp() / (1.0 + 0.002f64.exp());
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.50050).abs() < 1e-5);
        assert!((p[1] - 0.49950).abs() < 1e-5);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(softmax(&[1.0, 0.0], 0.0).is_err());
        assert!(softmax(&[1.0, 0.0], -1.0).is_err());
        assert!(softmax::<f64>(&[], 1.0).is_err());
    }

    #[test]
    fn softmax_handles_huge_logits() {
        let p = softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn max_softmax_near_one_hot_and_uniform() {
        let s = max_softmax_score(&m(&[vec![10.0, -10.0]])).unwrap();
        assert!(s[0] > 0.999_999_99 && s[0] <= 1.0);
        let u = max_softmax_score(&m(&[vec![0.0; 10]])).unwrap();
        assert!((u[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn odin_at_unit_temperature_is_max_softmax() {
        let x = m(&[vec![1.0, 2.0, -0.5], vec![3.0, 3.0, 0.1]]);
        assert_eq!(odin_score(&x, 1.0).unwrap(), max_softmax_score(&x).unwrap());
        let hot = odin_score(&m(&[vec![2.0, 0.0]]), 1000.0).unwrap();
        assert!((hot[0] - 0.50050).abs() < 1e-5);
        let limit = odin_score(&x, 1e9).unwrap();
        assert!(limit.iter().all(|&s| (s - 1.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn entropy_extremes() {
        let s = entropy_score(&m(&[vec![1000.0, 0.0, 0.0]])).unwrap();
        assert_eq!(s[0], 0.0);
        let u = entropy_score(&m(&[vec![0.0; 10]])).unwrap();
        assert!((u[0] + 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn margin_from_known_probabilities() {
        let logits = vec![0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()];
        let s = margin_score(&m(&[logits, vec![0.5; 3]])).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(max_softmax_score(&m(&[vec![1.0]])).is_err());
    }

    #[test]
    fn degenerate_classes_get_ridge_only() {
        let x = m(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]);
        let model = fit_gaussian(&x, &[0, 0, 1, 1], 2).unwrap();
        assert!(model.covariance().as_slice().iter().all(|&v| v == 0.0));
        assert!(model.ridge() > 0.0);
        let s = mahalanobis_score(&model, &x).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_class_data_gives_exact_mean() {
        let x = m(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![-1.0, 0.0],
            vec![-3.0, -2.0],
        ]);
        let model = fit_gaussian(&x, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(model.class_means()[0], vec![2.0, 3.0]);
        assert_eq!(model.class_means()[1], vec![-2.0, -1.0]);
    }

    #[test]
    fn fit_errors() {
        let x = m(&[vec![1.0, 0.0], vec![1.0, 0.5]]);
        assert_eq!(
            fit_gaussian(&x, &[0, 0], 2).unwrap_err(),
            DetectorError::MissingClass(1)
        );
        let y = m(&[vec![1.0, 0.0], vec![1.0, 0.5], vec![0.0, 0.0]]);
        assert_eq!(
            fit_gaussian(&y, &[0, 0, 1], 2).unwrap_err(),
            DetectorError::InsufficientClassRows { class: 1, count: 1 }
        );
        let zero_ridge =
            fit_gaussian_with_ridge(&m(&[vec![1.0, 0.0], vec![1.0, 0.0]]), &[0, 0], 1, 0.0);
        assert!(matches!(
            zero_ridge,
            Err(DetectorError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn mahalanobis_unit_distance() {
        // Means e1 and e2 with identity covariance: train on +/- offsets.
        let x = m(&[
            vec![2.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![0.0, 2.0],
            vec![0.0, 0.0],
        ]);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let model = fit_gaussian_with_ridge(&x, &labels, 2, 0.0).unwrap();
        assert_eq!(model.class_means()[0], vec![1.0, 0.0]);
        assert_eq!(model.class_means()[1], vec![0.0, 1.0]);
        let cov = model.covariance().as_slice();
        assert!(
            (cov[0] - 0.5).abs() < 1e-15 && cov[1].abs() < 1e-15 && (cov[3] - 0.5).abs() < 1e-15
        );
        // Covariance is I/2, so the squared distance from the origin is 2.
        let s = mahalanobis_score(&model, &m(&[vec![0.0, 0.0], vec![1.0, 0.0]])).unwrap();
        assert!((s[0] + 2.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn mahalanobis_dimension_mismatch() {
        let x = m(&[
            vec![1.0, 0.0],
            vec![0.0, 0.5],
            vec![0.0, 1.0],
            vec![0.5, 1.0],
        ]);
        let model = fit_gaussian(&x, &[0, 0, 1, 1], 2).unwrap();
        assert!(mahalanobis_score(&model, &m(&[vec![1.0, 2.0, 3.0]])).is_err());
    }

    #[test]
    fn mc_dropout_cases() {
        let a = m(&[vec![1000.0, 0.0]]);
        let b = m(&[vec![0.0, 1000.0]]);
        assert_eq!(
            mc_dropout_score(&[a.clone(), b.clone()]).unwrap(),
            vec![0.5]
        );
        let x = m(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, 1.0]]);
        let same = mc_dropout_score(&[x.clone(), x.clone(), x.clone()]).unwrap();
        let single = max_softmax_score(&x).unwrap();
        for (s, t) in same.iter().zip(&single) {
            assert!((s - t).abs() < 1e-15);
        }
        assert_eq!(
            mc_dropout_score(std::slice::from_ref(&a)),
            Err(DetectorError::TooFewPasses(1))
        );
        assert!(mc_dropout_score(&[a, m(&[vec![0.0, 1.0], vec![1.0, 0.0]])]).is_err());
        let mi = mutual_information_score(&[m(&[vec![1000.0, 0.0]]), b]).unwrap();
        assert!((mi[0] + 2f64.ln()).abs() < 1e-12);
        let none = mutual_information_score(&[x.clone(), x]).unwrap();
        assert!(none.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dispatcher_requires_inputs() {
        let x = m(&[vec![1.0, 0.0]]);
        let inputs = PopulationInputs {
            logits: &x,
            mc_passes: None,
            gaussian: None,
        };
        let settings = DetectorSettings::default();
        assert!(matches!(
            score_population(DetectorId::Mahalanobis, "id", inputs, &settings),
            Err(DetectorError::MissingInput { .. })
        ));
        assert!(matches!(
            score_population(DetectorId::McDropout, "id", inputs, &settings),
            Err(DetectorError::MissingInput { .. })
        ));
        let s = score_population(DetectorId::Odin, "id", inputs, &settings).unwrap();
        assert_eq!(s.population, "id");
        assert_eq!(s.scores.len(), 1);
    }

    #[test]
    fn works_in_single_precision() {
        let p = softmax(&[2.0f32, 0.0], 1.0).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
        let x = Matrix::from_rows(&[vec![0.0f32; 10]]).unwrap();
        assert!((entropy_score(&x).unwrap()[0] + 10f32.ln()).abs() < 1e-5);
    }
}
