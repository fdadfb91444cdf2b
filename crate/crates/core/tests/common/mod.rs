//! Independent reference implementations shared by the integration tests and the
//! acceptance harness. They favour obviousness over speed.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use oodbench::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Softmax straight from the definition, no max shift.
pub fn softmax_naive(row: &[f64], temperature: f64) -> Vec<f64> {
    let exps: Vec<f64> = row.iter().map(|&z| (z / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn max_softmax_naive(row: &[f64], temperature: f64) -> f64 {
    softmax_naive(row, temperature)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn neg_entropy_naive(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for p in softmax_naive(row, 1.0) {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    -h
}

pub fn margin_naive(row: &[f64]) -> f64 {
    let mut p = softmax_naive(row, 1.0);
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    p[0] - p[1]
}

/// Tied covariance with divisor m, class means, then an explicit inverse.
pub fn mahalanobis_naive(
    train: &Matrix<f64>,
    labels: &[usize],
    k: usize,
    ridge: Option<f64>,
    x: &[f64],
) -> f64 {
    let d = train.cols();
    let mut means = vec![DVector::<f64>::zeros(d); k];
    let mut counts = vec![0usize; k];
    for (row, &l) in train.row_iter().zip(labels) {
        means[l] += DVector::from_column_slice(row);
        counts[l] += 1;
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        *m /= c as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, &l) in train.row_iter().zip(labels) {
        let c = DVector::from_column_slice(row) - &means[l];
        cov += &c * c.transpose();
    }
    cov /= train.rows() as f64;
    let lambda = ridge.unwrap_or(1e-6 * cov.trace() / k as f64);
    let reg = cov + DMatrix::identity(d, d) * lambda;
    let inv = reg.try_inverse().expect("invertible covariance");
    let x = DVector::from_column_slice(x);
    let best = means
        .iter()
        .map(|m| {
            let diff = &x - m;
            (diff.transpose() * &inv * &diff)[(0, 0)]
        })
        .fold(f64::INFINITY, f64::min);
    -best
}

pub fn mc_mean_softmax(passes: &[Matrix<f64>], row: usize) -> Vec<f64> {
    let k = passes[0].cols();
    let mut mean = vec![0.0; k];
    for p in passes {
        for (m, v) in mean.iter_mut().zip(softmax_naive(p.row(row), 1.0)) {
            *m += v / passes.len() as f64;
        }
    }
    mean
}

pub fn entropy_of(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

pub fn mc_dropout_naive(passes: &[Matrix<f64>], row: usize) -> f64 {
    mc_mean_softmax(passes, row)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn mutual_information_naive(passes: &[Matrix<f64>], row: usize) -> f64 {
    let mean = mc_mean_softmax(passes, row);
    let mean_entropy: f64 = passes
        .iter()
        .map(|p| entropy_of(&softmax_naive(p.row(row), 1.0)))
        .sum::<f64>()
        / passes.len() as f64;
    (entropy_of(&mean) - mean_entropy).max(0.0)
}

fn percent(num: u64, den: u64) -> f64 {
    100.0 * (num as f64) / (den as f64)
}

/// AUROC by comparing every (ID, OOD) pair: 2 per win, 1 per tie.
pub fn auroc_pairwise(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in id {
        for &b in ood {
            if a > b {
                twice += 2;
            } else if a == b {
                twice += 1;
            }
        }
    }
    percent(twice, 2 * id.len() as u64 * ood.len() as u64)
}

/// FPR at 95% TPR and detection error by trying every ID score as a threshold and
/// keeping the largest one that accepts at least 95% of ID samples.
pub fn threshold_sweep(id: &[f64], ood: &[f64]) -> (f64, f64) {
    let n = id.len();
    let mut best: Option<(f64, usize)> = None;
    for &t in id {
        let accepted = id.iter().filter(|&&s| s >= t).count();
        if accepted * 100 >= 95 * n && best.is_none_or(|(bt, _)| t > bt) {
            best = Some((t, accepted));
        }
    }
    let (t, accepted) = best.expect("the minimum ID score accepts everything");
    let fp = ood.iter().filter(|&&s| s >= t).count();
    let fpr = percent(fp as u64, ood.len() as u64);
    let missed = percent((n - accepted) as u64, n as u64);
    (fpr, 0.5 * missed + 0.5 * fpr)
}

/// Area under the precision-recall curve by enumerating distinct thresholds from
/// the top; positives are the first slice.
pub fn aupr_enumeration(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / pos.len() as f64;
        area += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    100.0 * area
}

pub fn negated(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Random balanced score populations with frequent ties.
pub fn random_scores(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=max_n);
    let levels = rng.random_range(2..=40);
    let shift = rng.random_range(0..levels) as f64 / 2.0;
    let id = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / 4.0 + shift)
        .collect();
    let ood = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / 4.0)
        .collect();
    (id, ood)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_logits(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Standard normal CDF from `statrs`.
pub fn phi(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}
