//! Scoring, evaluation and optimizer-robustness aggregation for out-of-distribution
//! detectors.
//!
//! The pipeline has four stages, each usable as a library call or a CLI command:
//!
//! 1. [`detectors`] turn saved logits (and MC-dropout passes) into per-sample scores,
//!    where a higher score means "more in-distribution".
//! 2. [`metrics`] compare ID and OOD scores: FPR at 95% TPR, detection error,
//!    AUROC, AUPR-In and AUPR-Out, all in percent.
//! 3. [`robustness`] estimates per-optimizer (or per-OOD-set) moments of each
//!    metric, mixes them with inverse-deviation weights and reduces the mixture
//!    to one coefficient-of-variation score per condition.
//! 4. [`report`] renders those aggregates as Markdown or CSV tables.
//!
//! [`store`] defines the on-disk formats and [`synth`] writes synthetic inputs.
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! it to `f64`, which is what the file formats use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectors;
pub mod metrics;
pub mod model;
pub mod report;
pub mod robustness;
pub mod scalar;
pub mod store;
pub mod synth;

pub use detectors::{DetectorError, DetectorSettings, GaussianModel, PopulationInputs, ScoreSet};
pub use metrics::{EvaluationPair, MetricError, PositiveClass};
pub use model::{
    AggregationConfig, ConditionKeyXi, ConditionKeyZeta, DetectorId, Matrix, MetricId,
    MetricVector, ModelError, MomentPair, OodSetRegistry, Orientation, RunKey, RunRecord,
    WeightVector, ID_POPULATION,
};
pub use robustness::{
    Condition, ConditionAggregate, MetricAggregate, MetricSampleTable, RobustnessError,
    RobustnessScore, SampleKey,
};
pub use scalar::Scalar;
pub use store::{Manifest, StoreError};

pub type Matrix64 = Matrix<f64>;
pub type RunRecord64 = RunRecord<f64>;
pub type ScoreSet64 = ScoreSet<f64>;
pub type GaussianModel64 = GaussianModel<f64>;
pub type EvaluationPair64 = EvaluationPair<f64>;
pub type MetricVector64 = MetricVector<f64>;
pub type MomentPair64 = MomentPair<f64>;
pub type WeightVector64 = WeightVector<f64>;
pub type AggregationConfig64 = AggregationConfig<f64>;
pub type MetricSampleTable64 = MetricSampleTable<f64>;
pub type ConditionAggregate64 = ConditionAggregate<f64>;
pub type RobustnessScore64 = RobustnessScore<f64>;
