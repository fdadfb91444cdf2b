mod common;

use common::*;
use oodbench::detectors::*;
use oodbench::{DetectorId, Matrix};
use proptest::prelude::*;
use rand::Rng;

fn rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

#[test]
fn softmax_family_matches_naive_definitions() {
    let mut r = rng(11);
    for _ in 0..50 {
        let k = r.random_range(2..12);
        let m = random_logits(&mut r, 20, k, 8.0);
        let ms = max_softmax_score(&m).unwrap();
        let odin = odin_score(&m, 1000.0).unwrap();
        let ent = entropy_score(&m).unwrap();
        let mar = margin_score(&m).unwrap();
        for (i, row) in rows(&m).iter().enumerate() {
            assert!((ms[i] - max_softmax_naive(row, 1.0)).abs() < 1e-12);
            assert!((odin[i] - max_softmax_naive(row, 1000.0)).abs() < 1e-12);
            assert!((ent[i] - neg_entropy_naive(row)).abs() < 1e-12);
            assert!((mar[i] - margin_naive(row)).abs() < 1e-12);
        }
    }
}

#[test]
fn mahalanobis_matches_explicit_inverse() {
    let mut r = rng(12);
    for _ in 0..20 {
        let k = r.random_range(2..6);
        let n = 60;
        let train = random_logits(&mut r, n, k, 3.0);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let test = random_logits(&mut r, 15, k, 4.0);
        let model = fit_gaussian(&train, &labels, k).unwrap();
        let got = mahalanobis_score(&model, &test).unwrap();
        for (i, row) in rows(&test).iter().enumerate() {
            let expected = mahalanobis_naive(&train, &labels, k, None, row);
            assert!(
                (got[i] - expected).abs() < 1e-8 * (1.0 + expected.abs()),
                "{} vs {expected}",
                got[i]
            );
        }
    }
}

#[test]
fn mahalanobis_identity_covariance_example() {
    // Means e1 and e2 with identity covariance: the origin is at squared distance 1 from both.
    let r2 = 2f64.sqrt();
    let train = Matrix::from_rows(&[
        vec![1.0 + r2, 0.0],
        vec![1.0 - r2, 0.0],
        vec![1.0, r2],
        vec![1.0, -r2],
        vec![r2, 1.0],
        vec![-r2, 1.0],
        vec![0.0, 1.0 + r2],
        vec![0.0, 1.0 - r2],
    ])
    .unwrap();
    let labels = [0, 0, 0, 0, 1, 1, 1, 1];
    let model = fit_gaussian_with_ridge(&train, &labels, 2, 0.0).unwrap();
    let expected_means = [[1.0, 0.0], [0.0, 1.0]];
    for (m, e) in model.class_means().iter().zip(expected_means) {
        assert!(m.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    let identity = [1.0, 0.0, 0.0, 1.0];
    assert!(model
        .covariance()
        .as_slice()
        .iter()
        .zip(identity)
        .all(|(a, b)| (a - b).abs() < 1e-12));
    let s: Vec<f64> =
        mahalanobis_score(&model, &Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap()).unwrap();
    assert!((s[0] + 1.0).abs() < 1e-12);
}

#[test]
fn mahalanobis_zero_at_class_means() {
    let mut r = rng(13);
    let train = random_logits(&mut r, 40, 3, 2.0);
    let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
    let model = fit_gaussian(&train, &labels, 3).unwrap();
    let means = Matrix::from_rows(model.class_means()).unwrap();
    for s in mahalanobis_score(&model, &means).unwrap() {
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn mahalanobis_affine_invariance_without_ridge() {
    let mut r = rng(14);
    let k = 3;
    let train = random_logits(&mut r, 90, k, 2.0);
    let labels: Vec<usize> = (0..90).map(|i| i % k).collect();
    let test = random_logits(&mut r, 25, k, 3.0);
    let a = [[2.0, 0.5, -0.3], [0.1, 1.5, 0.2], [-0.4, 0.3, 0.8]];
    let b = [1.0, -2.0, 0.5];
    let map = |m: &Matrix<f64>| {
        let out: Vec<Vec<f64>> = m
            .row_iter()
            .map(|x| {
                (0..k)
                    .map(|i| (0..k).map(|j| a[i][j] * x[j]).sum::<f64>() + b[i])
                    .collect()
            })
            .collect();
        Matrix::from_rows(&out).unwrap()
    };
    let base = fit_gaussian_with_ridge(&train, &labels, k, 0.0).unwrap();
    let moved = fit_gaussian_with_ridge(&map(&train), &labels, k, 0.0).unwrap();
    let s0 = mahalanobis_score(&base, &test).unwrap();
    let s1 = mahalanobis_score(&moved, &map(&test)).unwrap();
    for (x, y) in s0.iter().zip(&s1) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
}

#[test]
fn mc_detectors_match_loops() {
    let mut r = rng(15);
    for _ in 0..20 {
        let passes: Vec<Matrix<f64>> = (0..r.random_range(2..8))
            .map(|_| random_logits(&mut r, 10, 4, 5.0))
            .collect();
        let mcd = mc_dropout_score(&passes).unwrap();
        let mi = mutual_information_score(&passes).unwrap();
        for i in 0..10 {
            assert!((mcd[i] - mc_dropout_naive(&passes, i)).abs() < 1e-12);
            assert!((mi[i] + mutual_information_naive(&passes, i)).abs() < 1e-12);
        }
    }
}

#[test]
fn mutual_information_two_pass_ln2() {
    // Two confident, opposite passes: H(mean) = ln 2, each pass entropy ~ 0.
    let a = Matrix::from_rows(&[vec![800.0, 0.0]]).unwrap();
    let b = Matrix::from_rows(&[vec![0.0, 800.0]]).unwrap();
    let mi = mutual_information_score(&[a.clone(), b]).unwrap();
    assert!((mi[0] + 2f64.ln()).abs() < 1e-9);
    let same = mutual_information_score(&[a.clone(), a]).unwrap();
    assert_eq!(same[0], 0.0);
}

#[test]
fn orientation_concentrated_beats_diffuse() {
    let mut r = rng(16);
    let k = 5;
    let train = random_logits(&mut r, 100, k, 0.5);
    let labels: Vec<usize> = (0..100).map(|i| i % k).collect();
    let mut train_rows = rows(&train);
    for (row, &l) in train_rows.iter_mut().zip(&labels) {
        row[l] += 10.0;
    }
    let train = Matrix::from_rows(&train_rows).unwrap();
    let model = fit_gaussian(&train, &labels, k).unwrap();
    let peaked: Vec<Vec<f64>> = (0..50)
        .map(|i| {
            (0..k)
                .map(|j| if j == i % k { 10.0 } else { 0.0 } + r.random_range(-0.3..0.3))
                .collect()
        })
        .collect();
    let diffuse: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..k).map(|_| r.random_range(-0.3..0.3)).collect())
        .collect();
    let peaked = Matrix::from_rows(&peaked).unwrap();
    let diffuse = Matrix::from_rows(&diffuse).unwrap();
    let jitter = |m: &Matrix<f64>, r: &mut rand_chacha::ChaCha8Rng| -> Vec<Matrix<f64>> {
        (0..4)
            .map(|_| {
                Matrix::from_vec(
                    m.rows(),
                    m.cols(),
                    m.as_slice()
                        .iter()
                        .map(|v| v + r.random_range(-0.5..0.5))
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    };
    let (pp, dp) = (jitter(&peaked, &mut r), jitter(&diffuse, &mut r));
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let settings = DetectorSettings::default();
    for d in DetectorId::ALL {
        let score = |logits, passes: &[Matrix<f64>]| {
            let inputs = PopulationInputs {
                logits,
                mc_passes: Some(passes),
                gaussian: Some(&model),
            };
            mean(score_population(d, "p", inputs, &settings).unwrap().scores)
        };
        assert!(score(&peaked, &pp) > score(&diffuse, &dp), "{d}");
    }
}

#[test]
fn f32_scores_track_f64() {
    let mut r = rng(17);
    let m = random_logits(&mut r, 30, 6, 5.0);
    let m32 = Matrix::from_vec(30, 6, m.as_slice().iter().map(|&v| v as f32).collect()).unwrap();
    let a = max_softmax_score(&m).unwrap();
    let b = max_softmax_score(&m32).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - *y as f64).abs() < 1e-5);
    }
}

#[test]
fn missing_inputs_are_reported() {
    let m = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let inputs = PopulationInputs {
        logits: &m,
        mc_passes: None,
        gaussian: None,
    };
    let s = DetectorSettings::default();
    for d in [
        DetectorId::Mahalanobis,
        DetectorId::McDropout,
        DetectorId::MutualInformation,
    ] {
        assert!(matches!(
            score_population(d, "id", inputs, &s),
            Err(DetectorError::MissingInput { .. })
        ));
    }
}

fn logit_row() -> impl Strategy<Value = Vec<f64>> {
    (2usize..10).prop_flat_map(|k| prop::collection::vec(-30.0f64..30.0, k))
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(row in logit_row(), c in -100.0f64..100.0, t in 0.1f64..2000.0) {
        let p = softmax(&row, t).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
        let q = softmax(&shifted, t).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn odin_at_unit_temperature_equals_max_softmax(rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 4), 1..20)) {
        let m = Matrix::from_rows(&rows).unwrap();
        prop_assert_eq!(odin_score(&m, 1.0).unwrap(), max_softmax_score(&m).unwrap());
    }

    #[test]
    fn scores_stay_in_range(row in logit_row()) {
        let m = Matrix::from_rows(std::slice::from_ref(&row)).unwrap();
        let k = row.len() as f64;
        let ms = max_softmax_score(&m).unwrap()[0];
        prop_assert!(ms >= 1.0 / k - 1e-12 && ms <= 1.0);
        let e = entropy_score(&m).unwrap()[0];
        prop_assert!(e <= 0.0 && e >= -k.ln() - 1e-12);
        let mg = margin_score(&m).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&mg));
    }

    #[test]
    fn identical_passes_have_zero_information(rows in prop::collection::vec(prop::collection::vec(-20.0f64..20.0, 3), 1..10), s in 2usize..6) {
        let m = Matrix::from_rows(&rows).unwrap();
        let passes = vec![m.clone(); s];
        for v in mutual_information_score(&passes).unwrap() {
            prop_assert!(v.abs() < 1e-12);
        }
        let mcd = mc_dropout_score(&passes).unwrap();
        for (a, b) in mcd.iter().zip(max_softmax_score(&m).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
