//! Synthetic inputs with known detection difficulty.
//!
//! [`generate_gaussian_fixture`] writes a complete run tree whose logits are drawn
//! from isotropic Gaussians: ID samples of class `c` around `separation · e_c`, OOD
//! samples around the origin (or around a random class anchor when an OOD set
//! mimics the ID process), shifted by `shift` along the unit all-ones direction.
//!
//! [`paper_tables_fixture`] rebuilds the published per-seed and per-member metric
//! tables as a metrics-only sample table.

use crate::metrics::EvaluationPair;
use crate::model::{DetectorId, Matrix, MetricVector, RunKey, RunRecord, ID_POPULATION};
use crate::robustness::{MetricSampleTable, SampleKey};
use crate::store::{self, Manifest, StoreError, FORMAT_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSetSpec {
    pub name: String,
    /// Distance moved along the unit all-ones direction.
    pub shift: f64,
    /// Draw around a random class anchor instead of the origin.
    #[serde(default)]
    pub mimic_id: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFixtureSpec {
    pub id_dataset: String,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_id: usize,
    pub n_ood: usize,
    pub class_separation: f64,
    pub noise_sd: f64,
    pub ood_sets: Vec<OodSetSpec>,
    pub optimizers: Vec<String>,
    pub seeds_per_optimizer: u32,
    pub mc_passes: usize,
    pub mc_noise_sd: f64,
    pub seed: u64,
    #[serde(default)]
    pub balance_seed: u64,
}

impl Default for GaussianFixtureSpec {
    fn default() -> Self {
        Self {
            id_dataset: "synthetic".into(),
            num_classes: 4,
            n_train: 400,
            n_id: 500,
            n_ood: 400,
            class_separation: 4.0,
            noise_sd: 1.0,
            ood_sets: vec![
                OodSetSpec {
                    name: "near".into(),
                    shift: 1.0,
                    mimic_id: false,
                },
                OodSetSpec {
                    name: "far".into(),
                    shift: 6.0,
                    mimic_id: false,
                },
            ],
            optimizers: vec!["adam".into(), "sgd".into(), "rmsprop".into()],
            seeds_per_optimizer: 3,
            mc_passes: 5,
            mc_noise_sd: 0.5,
            seed: 7,
            balance_seed: 0,
        }
    }
}

impl GaussianFixtureSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::InvalidSpec(msg.to_string()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.n_train < 10 || self.n_id < 10 || self.n_ood < 10 {
            return bad("n_train, n_id and n_ood must each be at least 10");
        }
        if self.n_train < 2 * self.num_classes {
            return bad("n_train must give every class at least two rows");
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be positive");
        }
        if !(self.mc_noise_sd >= 0.0 && self.mc_noise_sd.is_finite()) {
            return bad("mc_noise_sd must be non-negative");
        }
        if !self.class_separation.is_finite() || self.ood_sets.iter().any(|o| !o.shift.is_finite())
        {
            return bad("separation and shifts must be finite");
        }
        self.manifest().validate().map_err(SynthError::InvalidSpec)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION.into(),
            id_dataset: self.id_dataset.clone(),
            num_classes: self.num_classes,
            optimizers: self.optimizers.clone(),
            seeds_per_optimizer: self.seeds_per_optimizer,
            ood_datasets: self.ood_sets.iter().map(|o| o.name.clone()).collect(),
            mc_passes: self.mc_passes,
            balance_seed: self.balance_seed,
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    k: usize,
}

impl Sampler {
    fn around(&mut self, centre: &[f64]) -> Vec<f64> {
        centre
            .iter()
            .map(|&c| c + self.noise.sample(&mut self.rng))
            .collect()
    }

    fn anchor(&self, class: usize, separation: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        v[class] = separation;
        v
    }

    fn labelled(&mut self, n: usize, separation: f64) -> (Matrix<f64>, Vec<usize>) {
        let labels: Vec<usize> = (0..n).map(|i| i % self.k).collect();
        let data = labels
            .iter()
            .flat_map(|&c| {
                let a = self.anchor(c, separation);
                self.around(&a)
            })
            .collect();
        (Matrix::from_vec(n, self.k, data).expect("shape"), labels)
    }
}

fn perturbed(base: &Matrix<f64>, rng: &mut ChaCha8Rng, noise: Option<Normal<f64>>) -> Matrix<f64> {
    let data = base
        .as_slice()
        .iter()
        .map(|&x| x + noise.map_or(0.0, |n| n.sample(rng)))
        .collect();
    Matrix::from_vec(base.rows(), base.cols(), data).expect("shape")
}

/// Builds one run in memory; each run draws from its own ChaCha stream.
pub fn gaussian_run(spec: &GaussianFixtureSpec, key: &RunKey, stream: u64) -> RunRecord<f64> {
    let k = spec.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let mut s = Sampler {
        rng,
        noise: Normal::new(0.0, spec.noise_sd).expect("validated noise"),
        k,
    };
    let (train_logits, train_labels) = s.labelled(spec.n_train, spec.class_separation);
    let (id_test_logits, id_test_labels) = s.labelled(spec.n_id, spec.class_separation);

    let unit = 1.0 / (k as f64).sqrt();
    let mut ood_logits = BTreeMap::new();
    for ood in &spec.ood_sets {
        let mut data = Vec::with_capacity(spec.n_ood * k);
        for _ in 0..spec.n_ood {
            let mut centre = if ood.mimic_id {
                let c = s.rng.random_range(0..k);
                s.anchor(c, spec.class_separation)
            } else {
                vec![0.0; k]
            };
            centre.iter_mut().for_each(|x| *x += ood.shift * unit);
            data.extend(s.around(&centre));
        }
        ood_logits.insert(
            ood.name.clone(),
            Matrix::from_vec(spec.n_ood, k, data).expect("shape"),
        );
    }

    let mc_noise =
        (spec.mc_noise_sd > 0.0).then(|| Normal::new(0.0, spec.mc_noise_sd).expect("validated"));
    let mut mc_passes = BTreeMap::new();
    if spec.mc_passes > 0 {
        let populations = std::iter::once((ID_POPULATION.to_string(), &id_test_logits))
            .chain(ood_logits.iter().map(|(n, m)| (n.clone(), m)));
        for (name, base) in populations {
            let passes = (0..spec.mc_passes)
                .map(|_| perturbed(base, &mut s.rng, mc_noise))
                .collect();
            mc_passes.insert(name, passes);
        }
    }

    RunRecord {
        key: key.clone(),
        num_classes: k,
        id_test_logits,
        id_test_labels: Some(id_test_labels),
        train_logits: Some(train_logits),
        train_labels: Some(train_labels),
        ood_logits,
        mc_passes,
    }
}

/// Writes a full run tree (manifest plus every run) under `out`.
pub fn generate_gaussian_fixture(
    spec: &GaussianFixtureSpec,
    out: &Path,
) -> Result<Manifest, SynthError> {
    spec.validate()?;
    let manifest = spec.manifest();
    for (stream, key) in manifest.run_keys().iter().enumerate() {
        let record = gaussian_run(spec, key, stream as u64);
        store::write_run(out, &record)?;
    }
    store::write_manifest(out, &manifest)?;
    Ok(manifest)
}

/// One-dimensional Gaussian ID and OOD scores, for checking AUROC against its
/// closed form `Φ((μ_id − μ_ood) / √(σ_id² + σ_ood²))`.
pub fn gaussian_score_pair(
    n: usize,
    id: (f64, f64),
    ood: (f64, f64),
    seed: u64,
) -> EvaluationPair<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id_dist = Normal::new(id.0, id.1).expect("valid id distribution");
    let ood_dist = Normal::new(ood.0, ood.1).expect("valid ood distribution");
    let id_scores = (0..n).map(|_| id_dist.sample(&mut rng)).collect();
    let ood_scores = (0..n).map(|_| ood_dist.sample(&mut rng)).collect();
    EvaluationPair::new(id_scores, ood_scores, seed).expect("finite Gaussian draws")
}

/// ID dataset name used for the optimizer-conditioned (zeta) tables.
pub const PAPER_ZETA_ID: &str = "MNIST";
/// ID dataset name used for the OOD-set-conditioned (xi) tables.
pub const PAPER_XI_ID: &str = "MNIST-xi";
pub const PAPER_OPTIMIZERS: [&str; 7] = [
    "Adam", "RMSprop", "Adamax", "Nadam", "SGD", "Adagrad", "Adadelta",
];
pub const PAPER_OOD_SETS: [&str; 4] = ["F-MNIST", "Omniglot", "Gaussian", "Uniform"];

/// Per-seed metrics of max-softmax, Adam, MNIST vs F-MNIST, in the published
/// column order (FPR, detection error, AUROC, AUPR-Out, AUPR-In).
pub const PAPER_ADAM_SEEDS: [[f64; 5]; 5] = [
    [10.24, 7.61, 97.728, 97.981, 97.483],
    [7.47, 6.225, 97.834, 98.272, 97.176],
    [16.5, 10.735, 96.421, 96.705, 96.018],
    [7.57, 6.18, 98.195, 98.482, 97.897],
    [15.32, 10.11, 96.554, 96.671, 96.277],
];

/// `(mean, variance)` pairs in the published column order.
pub type PaperRow = [(f64, f64); 5];

/// Max-softmax per-optimizer moments on MNIST vs F-MNIST (Adam omitted: it comes
/// from the per-seed values).
pub const PAPER_OPTIMIZER_ROWS: [(&str, PaperRow); 6] = [
    (
        "RMSprop",
        [
            (7.804, 5.236),
            (6.319, 1.446),
            (97.988, 0.256),
            (98.278, 0.276),
            (97.609, 0.344),
        ],
    ),
    (
        "Adamax",
        [
            (8.844, 4.348),
            (6.897, 1.096),
            (97.608, 0.156),
            (97.971, 0.129),
            (97.111, 0.224),
        ],
    ),
    (
        "Nadam",
        [
            (9.018, 0.886),
            (6.968, 0.231),
            (97.751, 0.022),
            (98.054, 0.026),
            (97.349, 0.118),
        ],
    ),
    (
        "SGD",
        [
            (7.236, 3.911),
            (6.042, 1.039),
            (98.026, 0.204),
            (98.385, 0.182),
            (97.56, 0.212),
        ],
    ),
    (
        "Adagrad",
        [
            (8.56, 3.697),
            (6.721, 0.972),
            (97.685, 0.233),
            (98.103, 0.176),
            (97.122, 0.351),
        ],
    ),
    (
        "Adadelta",
        [
            (8.252, 9.935),
            (6.572, 2.634),
            (97.88, 0.503),
            (98.191, 0.455),
            (97.48, 0.664),
        ],
    ),
];

/// Mixture moments over optimizers for the non-max-softmax detectors.
pub const PAPER_DETECTOR_ROWS: [(DetectorId, PaperRow); 6] = [
    (
        DetectorId::Odin,
        [
            (4.932, 3.081),
            (4.84, 0.983),
            (98.944, 0.12),
            (99.036, 0.104),
            (98.87, 0.137),
        ],
    ),
    (
        DetectorId::Mahalanobis,
        [
            (64.707, 31.994),
            (34.837, 7.966),
            (69.108, 19.587),
            (75.163, 14.237),
            (62.276, 18.813),
        ],
    ),
    (
        DetectorId::Entropy,
        [
            (8.549, 5.467),
            (6.728, 1.442),
            (97.944, 0.22),
            (98.195, 0.202),
            (97.703, 0.327),
        ],
    ),
    (
        DetectorId::Margin,
        [
            (8.777, 5.52),
            (6.842, 1.448),
            (97.625, 0.214),
            (98.023, 0.222),
            (96.855, 0.344),
        ],
    ),
    (
        DetectorId::McDropout,
        [
            (8.218, 4.33),
            (6.536, 1.209),
            (97.868, 0.221),
            (98.213, 0.191),
            (97.465, 0.298),
        ],
    ),
    (
        DetectorId::MutualInformation,
        [
            (8.817, 4.748),
            (6.812, 1.285),
            (97.238, 0.224),
            (97.857, 0.199),
            (96.125, 0.458),
        ],
    ),
];

/// Max-softmax, Adam, per-OOD-set moments (F-MNIST omitted: per-seed values).
pub const PAPER_OOD_ROWS: [(&str, PaperRow); 3] = [
    (
        "Omniglot",
        [
            (6.08, 1.373),
            (5.246, 0.547),
            (98.205, 0.127),
            (98.613, 0.079),
            (97.559, 0.319),
        ],
    ),
    (
        "Gaussian",
        [
            (1.146, 1.067),
            (0.99, 0.343),
            (99.348, 0.543),
            (99.62, 0.167),
            (98.073, 5.747),
        ],
    ),
    (
        "Uniform",
        [
            (3.368, 1.663),
            (2.757, 0.854),
            (98.406, 0.567),
            (99.003, 0.19),
            (96.415, 5.02),
        ],
    ),
];

/// Max-softmax mixture moments over OOD sets for the other optimizers.
pub const PAPER_XI_ROWS: [(&str, PaperRow); 6] = [
    (
        "RMSprop",
        [
            (4.059, 18.879),
            (3.497, 9.398),
            (98.443, 1.862),
            (98.895, 1.189),
            (97.696, 4.433),
        ],
    ),
    (
        "Adamax",
        [
            (3.487, 10.255),
            (3.305, 6.656),
            (98.674, 0.88),
            (99.058, 0.609),
            (98.014, 1.364),
        ],
    ),
    (
        "Nadam",
        [
            (2.404, 9.64),
            (2.495, 6.995),
            (99.225, 0.86),
            (99.476, 0.518),
            (99.293, 1.018),
        ],
    ),
    (
        "SGD",
        [
            (2.82, 6.985),
            (2.578, 5.025),
            (98.849, 0.632),
            (99.22, 0.404),
            (98.161, 1.188),
        ],
    ),
    (
        "Adagrad",
        [
            (4.346, 9.209),
            (3.835, 5.834),
            (98.417, 0.816),
            (98.843, 0.502),
            (97.702, 2.285),
        ],
    ),
    (
        "Adadelta",
        [
            (4.188, 12.394),
            (3.707, 6.758),
            (98.406, 1.241),
            (98.863, 0.716),
            (97.554, 3.719),
        ],
    ),
];

/// Seeds per injected group.
pub const INJECTED_SEEDS: usize = 4;

/// Reorders a published row (FPR, DetErr, AUROC, AUPR-Out, AUPR-In) into a
/// [`MetricVector`].
fn from_paper_order<T: Copy>(row: [T; 5]) -> MetricVector<T> {
    MetricVector {
        fpr_at_95tpr: row[0],
        detection_error: row[1],
        auroc: row[2],
        aupr_in: row[4],
        aupr_out: row[3],
    }
}

/// Four values in `[0, 100]` whose population mean and variance are exactly
/// `mean` and `variance`: `k` copies of one value and `4 − k` of another.
pub fn two_point_sample(mean: f64, variance: f64) -> [f64; INJECTED_SEEDS] {
    let n = INJECTED_SEEDS as f64;
    for k in [2usize, 1, 3] {
        let kf = k as f64;
        let hi = mean + (variance * (n - kf) / kf).sqrt();
        let lo = mean - (variance * kf / (n - kf)).sqrt();
        if (0.0..=100.0).contains(&hi) && (0.0..=100.0).contains(&lo) {
            let mut out = [lo; INJECTED_SEEDS];
            out[..k].fill(hi);
            return out;
        }
    }
    panic!("no two-point sample in [0, 100] for mean {mean}, variance {variance}");
}

fn inject(
    table: &mut MetricSampleTable<f64>,
    id: &str,
    ood: &str,
    det: DetectorId,
    opt: &str,
    row: &PaperRow,
) {
    let columns = row.map(|(m, v)| two_point_sample(m, v));
    for seed in 0..INJECTED_SEEDS {
        let values = columns.map(|c| c[seed]);
        insert(
            table,
            id,
            ood,
            det,
            opt,
            seed as u32 + 1,
            from_paper_order(values),
        );
    }
}

fn insert(
    table: &mut MetricSampleTable<f64>,
    id: &str,
    ood: &str,
    detector: DetectorId,
    optimizer: &str,
    seed: u32,
    metrics: MetricVector<f64>,
) {
    table
        .insert(
            SampleKey {
                id_dataset: id.into(),
                ood_dataset: ood.into(),
                detector,
                optimizer: optimizer.into(),
                seed,
            },
            metrics,
        )
        .expect("fixture keys are unique");
}

fn insert_adam_seeds(table: &mut MetricSampleTable<f64>, id: &str) {
    for (i, row) in PAPER_ADAM_SEEDS.iter().enumerate() {
        insert(
            table,
            id,
            "F-MNIST",
            DetectorId::MaxSoftmax,
            "Adam",
            i as u32 + 1,
            from_paper_order(*row),
        );
    }
}

/// Metric samples that reproduce the published tables.
///
/// Under `MNIST` (one OOD set, F-MNIST): max-softmax has the raw Adam seeds plus
/// per-optimizer groups matching each optimizer's published moments; every other
/// detector gets its published mixture moments for every optimizer, so its
/// optimizer mixture equals those moments. Under `MNIST-xi` (four OOD sets,
/// max-softmax only): Adam has the raw F-MNIST seeds plus per-OOD groups, and
/// every other optimizer gets its published OOD-set mixture for every set.
/// Injected groups hold four seeds built by [`two_point_sample`].
pub fn paper_tables_fixture() -> MetricSampleTable<f64> {
    let mut table = MetricSampleTable::new();

    insert_adam_seeds(&mut table, PAPER_ZETA_ID);
    for (opt, row) in &PAPER_OPTIMIZER_ROWS {
        inject(
            &mut table,
            PAPER_ZETA_ID,
            "F-MNIST",
            DetectorId::MaxSoftmax,
            opt,
            row,
        );
    }
    for (det, row) in &PAPER_DETECTOR_ROWS {
        for opt in PAPER_OPTIMIZERS {
            inject(&mut table, PAPER_ZETA_ID, "F-MNIST", *det, opt, row);
        }
    }

    insert_adam_seeds(&mut table, PAPER_XI_ID);
    for (ood, row) in &PAPER_OOD_ROWS {
        inject(
            &mut table,
            PAPER_XI_ID,
            ood,
            DetectorId::MaxSoftmax,
            "Adam",
            row,
        );
    }
    for (opt, row) in &PAPER_XI_ROWS {
        for ood in PAPER_OOD_SETS {
            inject(
                &mut table,
                PAPER_XI_ID,
                ood,
                DetectorId::MaxSoftmax,
                opt,
                row,
            );
        }
    }
    table
}

/// Number of sample rows [`paper_tables_fixture`] holds.
pub fn paper_tables_sample_count() -> usize {
    let zeta = PAPER_ADAM_SEEDS.len()
        + INJECTED_SEEDS
            * (PAPER_OPTIMIZER_ROWS.len() + PAPER_DETECTOR_ROWS.len() * PAPER_OPTIMIZERS.len());
    let xi = PAPER_ADAM_SEEDS.len()
        + INJECTED_SEEDS * (PAPER_OOD_ROWS.len() + PAPER_XI_ROWS.len() * PAPER_OOD_SETS.len());
    zeta + xi
}

pub fn write_paper_tables_fixture(path: &Path) -> Result<(), SynthError> {
    store::write_samples(path, &paper_tables_fixture())?;
    Ok(())
}
