//! Threshold and ranking metrics for OOD detection.
//!
//! ID samples are the positive class. Fractions are used internally and every
//! reported metric is converted to percent at the boundary.

use crate::model::MetricVector;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{0} scores are empty")]
    Empty(&'static str),
    #[error("{0} scores contain a non-finite value")]
    NonFinite(&'static str),
    #[error("target TPR {0} must lie in (0, 1]")]
    InvalidTarget(f64),
}

/// ID (positive) and OOD (negative) scores plus the seed used for balancing.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPair<T> {
    pub id_scores: Vec<T>,
    pub ood_scores: Vec<T>,
    pub balance_seed: u64,
}

impl<T: Scalar> EvaluationPair<T> {
    pub fn new(
        id_scores: Vec<T>,
        ood_scores: Vec<T>,
        balance_seed: u64,
    ) -> Result<Self, MetricError> {
        check_scores("ID", &id_scores)?;
        check_scores("OOD", &ood_scores)?;
        Ok(Self {
            id_scores,
            ood_scores,
            balance_seed,
        })
    }

    pub fn is_balanced(&self) -> bool {
        self.id_scores.len() == self.ood_scores.len()
    }

    /// The same pair with ID and OOD roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            id_scores: self.ood_scores.clone(),
            ood_scores: self.id_scores.clone(),
            balance_seed: self.balance_seed,
        }
    }
}

fn check_scores<T: Scalar>(which: &'static str, scores: &[T]) -> Result<(), MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty(which));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(which));
    }
    Ok(())
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

/// Indices of a `keep`-element subset of `0..len`, in ascending order.
///
/// The subset is the first `keep` entries of a ChaCha8 shuffle seeded with `seed`.
pub fn subsample_indices(len: usize, keep: usize, seed: u64) -> Vec<usize> {
    if keep >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..len).collect();
    indices.shuffle(&mut rng);
    indices.truncate(keep);
    indices.sort_unstable();
    indices
}

/// Subsamples the larger population without replacement to the smaller one's size.
pub fn balance<T: Scalar>(pair: &EvaluationPair<T>) -> EvaluationPair<T> {
    let (n_id, n_ood) = (pair.id_scores.len(), pair.ood_scores.len());
    let pick = |scores: &[T], keep: usize| -> Vec<T> {
        subsample_indices(scores.len(), keep, pair.balance_seed)
            .into_iter()
            .map(|i| scores[i])
            .collect()
    };
    let (id_scores, ood_scores) = match n_id.cmp(&n_ood) {
        Ordering::Equal => (pair.id_scores.clone(), pair.ood_scores.clone()),
        Ordering::Greater => (pick(&pair.id_scores, n_ood), pair.ood_scores.clone()),
        Ordering::Less => (pair.id_scores.clone(), pick(&pair.ood_scores, n_id)),
    };
    EvaluationPair {
        id_scores,
        ood_scores,
        balance_seed: pair.balance_seed,
    }
}

/// Decision threshold for the rule "positive iff score >= threshold".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TprThreshold<T> {
    pub threshold: T,
    /// Number of ID scores at or above the threshold.
    pub accepted: usize,
    pub total: usize,
}

impl<T: Scalar> TprThreshold<T> {
    pub fn achieved_tpr(&self) -> T {
        T::count(self.accepted) / T::count(self.total)
    }
}

/// Largest threshold whose true positive rate is at least `target_tpr`.
///
/// This is the k-th largest ID score with `k = ceil(target_tpr * n)`; ties at the
/// threshold can push the achieved rate above `k / n`.
pub fn threshold_at_tpr<T: Scalar>(
    id_scores: &[T],
    target_tpr: f64,
) -> Result<TprThreshold<T>, MetricError> {
    check_scores("ID", id_scores)?;
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        return Err(MetricError::InvalidTarget(target_tpr));
    }
    let n = id_scores.len();
    // The slack absorbs representation error in products like 0.95 * 20.
    let k = ((target_tpr * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(|a, b| cmp(b, a));
    let threshold = sorted[k - 1];
    let accepted = sorted.iter().take_while(|&&s| s >= threshold).count();
    Ok(TprThreshold {
        threshold,
        accepted,
        total: n,
    })
}

fn percent<T: Scalar>(numerator: u64, denominator: u64) -> T {
    T::lit(100.0) * T::count(numerator as usize) / T::count(denominator as usize)
}

fn fpr_counts<T: Scalar>(
    pair: &EvaluationPair<T>,
) -> Result<(TprThreshold<T>, usize), MetricError> {
    check_scores("OOD", &pair.ood_scores)?;
    let t = threshold_at_tpr(&pair.id_scores, 0.95)?;
    let false_positives = pair
        .ood_scores
        .iter()
        .filter(|&&s| s >= t.threshold)
        .count();
    Ok((t, false_positives))
}

/// Fraction of OOD samples accepted at the 95% TPR threshold, in percent.
pub fn fpr_at_95tpr<T: Scalar>(pair: &EvaluationPair<T>) -> Result<T, MetricError> {
    let (_, fp) = fpr_counts(pair)?;
    Ok(percent(fp as u64, pair.ood_scores.len() as u64))
}

/// `0.5 * (1 - TPR) + 0.5 * FPR` at the 95% TPR threshold, in percent.
///
/// Uses the achieved TPR, which may exceed 95% on discrete data.
pub fn detection_error<T: Scalar>(pair: &EvaluationPair<T>) -> Result<T, MetricError> {
    let (t, fp) = fpr_counts(pair)?;
    let missed: T = percent((t.total - t.accepted) as u64, t.total as u64);
    let fpr: T = percent(fp as u64, pair.ood_scores.len() as u64);
    Ok(T::lit(0.5) * missed + T::lit(0.5) * fpr)
}

/// Twice the Mann-Whitney U statistic of ID over OOD scores (ties count half).
fn doubled_u_statistic<T: Scalar>(id: &[T], ood: &[T]) -> u64 {
    let mut all: Vec<(T, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp(&a.0, &b.0));

    // Sum of doubled mid-ranks of the ID samples.
    let mut rank_sum2: u64 = 0;
    let mut start = 0usize;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let group = (end - start) as u64;
        let id_in_group = all[start..end].iter().filter(|(_, is_id)| *is_id).count() as u64;
        rank_sum2 += id_in_group * (2 * start as u64 + group + 1);
        start = end;
    }
    let n_id = id.len() as u64;
    rank_sum2 - n_id * (n_id + 1)
}

/// Probability that an ID sample outscores an OOD sample (ties count half), in percent.
pub fn auroc<T: Scalar>(pair: &EvaluationPair<T>) -> Result<T, MetricError> {
    check_scores("ID", &pair.id_scores)?;
    check_scores("OOD", &pair.ood_scores)?;
    let u2 = doubled_u_statistic(&pair.id_scores, &pair.ood_scores);
    let pairs2 = 2 * pair.id_scores.len() as u64 * pair.ood_scores.len() as u64;
    Ok(percent(u2, pairs2))
}

/// Which population is treated as positive when building the precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveClass {
    /// ID samples are positive; scores are used as-is.
    In,
    /// OOD samples are positive; scores are negated.
    Out,
}

/// Area under the precision-recall curve with step interpolation, in percent.
///
/// Tied scores form one block; precision and recall are updated after the whole block.
pub fn aupr<T: Scalar>(
    pair: &EvaluationPair<T>,
    positives: PositiveClass,
) -> Result<T, MetricError> {
    check_scores("ID", &pair.id_scores)?;
    check_scores("OOD", &pair.ood_scores)?;
    let mut labelled: Vec<(T, bool)> = match positives {
        PositiveClass::In => pair
            .id_scores
            .iter()
            .map(|&s| (s, true))
            .chain(pair.ood_scores.iter().map(|&s| (s, false)))
            .collect(),
        PositiveClass::Out => pair
            .ood_scores
            .iter()
            .map(|&s| (-s, true))
            .chain(pair.id_scores.iter().map(|&s| (-s, false)))
            .collect(),
    };
    labelled.sort_by(|a, b| cmp(&b.0, &a.0));
    let total_pos = T::count(labelled.iter().filter(|(_, p)| *p).count());

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = T::zero();
    let mut prev_recall = T::zero();
    let mut start = 0usize;
    while start < labelled.len() {
        let mut end = start;
        while end < labelled.len() && labelled[end].0 == labelled[start].0 {
            if labelled[end].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        let recall = T::count(tp) / total_pos;
        let precision = T::count(tp) / T::count(tp + fp);
        area = area + (recall - prev_recall) * precision;
        prev_recall = recall;
        start = end;
    }
    Ok(T::lit(100.0) * area)
}

/// All five metrics on the balanced version of `pair`.
pub fn evaluate_all<T: Scalar>(pair: &EvaluationPair<T>) -> Result<MetricVector<T>, MetricError> {
    check_scores("ID", &pair.id_scores)?;
    check_scores("OOD", &pair.ood_scores)?;
    let balanced = balance(pair);
    Ok(MetricVector {
        fpr_at_95tpr: fpr_at_95tpr(&balanced)?,
        detection_error: detection_error(&balanced)?,
        auroc: auroc(&balanced)?,
        aupr_in: aupr(&balanced, PositiveClass::In)?,
        aupr_out: aupr(&balanced, PositiveClass::Out)?,
    })
}
