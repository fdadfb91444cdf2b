//! Mixture-moment aggregation of metric samples and the coefficient-of-variation
//! robustness score.
//!
//! Per-member moments are estimated from seeds, members are weighted by their
//! normalized inverse standard deviation, and the weighted mixture's mean and
//! variance are turned into a single score where lower means more robust.
//! Members are optimizers for a [`ConditionKeyZeta`] and OOD sets for a
//! [`ConditionKeyXi`].

use crate::model::{
    AggregationConfig, ConditionKeyXi, ConditionKeyZeta, DetectorId, MetricId, MetricVector,
    ModelError, MomentPair, OodSetRegistry, Orientation, WeightVector,
};
use crate::scalar::Scalar;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustnessError {
    #[error("cannot estimate moments of an empty sample")]
    EmptySample,
    #[error("{members} members but {weights} weights")]
    LengthMismatch { members: usize, weights: usize },
    #[error("higher-better score needs a positive mean, got {0}")]
    NonPositiveMean(f64),
    #[error("lower-better score needs a non-negative mean, got {0}")]
    NegativeMean(f64),
    #[error("condition {condition} is missing groups for: {}", missing.join(", "))]
    IncompleteCondition {
        condition: String,
        missing: Vec<String>,
    },
    #[error("duplicate sample for {0}")]
    DuplicateSample(String),
    #[error("cannot rank scores of different metrics or orientations")]
    MixedScores,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Identifies one metric sample: a trained model evaluated on one OOD set by one detector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleKey {
    pub id_dataset: String,
    pub ood_dataset: String,
    pub detector: DetectorId,
    pub optimizer: String,
    pub seed: u32,
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.id_dataset, self.ood_dataset, self.detector, self.optimizer, self.seed
        )
    }
}

/// Metric realizations keyed by (ID, OOD, detector, optimizer, seed).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSampleTable<T> {
    entries: BTreeMap<SampleKey, MetricVector<T>>,
}

impl<T: Scalar> MetricSampleTable<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        key: SampleKey,
        metrics: MetricVector<T>,
    ) -> Result<(), RobustnessError> {
        if self.entries.contains_key(&key) {
            return Err(RobustnessError::DuplicateSample(key.to_string()));
        }
        self.entries.insert(key, metrics);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleKey, &MetricVector<T>)> {
        self.entries.iter()
    }

    /// All seeds of one (ID, OOD, detector, optimizer) group, in seed order.
    pub fn group(
        &self,
        id: &str,
        ood: &str,
        detector: DetectorId,
        optimizer: &str,
    ) -> Vec<&MetricVector<T>> {
        let key = |seed| SampleKey {
            id_dataset: id.to_string(),
            ood_dataset: ood.to_string(),
            detector,
            optimizer: optimizer.to_string(),
            seed,
        };
        self.entries
            .range(key(0)..=key(u32::MAX))
            .map(|(_, v)| v)
            .collect()
    }

    /// Every ID dataset present, sorted.
    pub fn id_datasets(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.entries.keys().map(|k| &k.id_dataset).collect();
        set.into_iter().cloned().collect()
    }

    /// Every optimizer seen for an ID dataset; the optimizer set of its zeta conditions.
    pub fn optimizers_for(&self, id: &str) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .entries
            .keys()
            .filter(|k| k.id_dataset == id)
            .map(|k| &k.optimizer)
            .collect();
        set.into_iter().cloned().collect()
    }

    /// Every OOD set seen for an ID dataset, sorted.
    pub fn ood_registry_for(&self, id: &str) -> Result<OodSetRegistry, RobustnessError> {
        let set: BTreeSet<&String> = self
            .entries
            .keys()
            .filter(|k| k.id_dataset == id)
            .map(|k| &k.ood_dataset)
            .collect();
        Ok(OodSetRegistry::new(id, set.into_iter().cloned().collect())?)
    }

    pub fn zeta_conditions(&self) -> Vec<ConditionKeyZeta> {
        let set: BTreeSet<ConditionKeyZeta> = self
            .entries
            .keys()
            .map(|k| ConditionKeyZeta {
                id_dataset: k.id_dataset.clone(),
                ood_dataset: k.ood_dataset.clone(),
                detector: k.detector,
            })
            .collect();
        set.into_iter().collect()
    }

    pub fn xi_conditions(&self) -> Vec<ConditionKeyXi> {
        let set: BTreeSet<ConditionKeyXi> = self
            .entries
            .keys()
            .map(|k| ConditionKeyXi {
                id_dataset: k.id_dataset.clone(),
                detector: k.detector,
                optimizer: k.optimizer.clone(),
            })
            .collect();
        set.into_iter().collect()
    }
}

/// Mean and population (1/N) variance.
pub fn moment_estimate<T: Scalar>(values: &[T]) -> Result<MomentPair<T>, RobustnessError> {
    if values.is_empty() {
        return Err(RobustnessError::EmptySample);
    }
    let n = T::count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let variance = values.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    Ok(MomentPair::new(mean, variance)?)
}

/// Normalized confidence weights `c_t / sum(c)` with `c_t = 1 / (sqrt(Var_t) + epsilon)`.
pub fn mixture_weights<T: Scalar>(
    variances: &[T],
    config: &AggregationConfig<T>,
) -> Result<WeightVector<T>, RobustnessError> {
    config.validate()?;
    if variances.is_empty() {
        return Err(RobustnessError::EmptySample);
    }
    if let Some(v) = variances
        .iter()
        .find(|v| !(**v >= T::zero()) || !v.is_finite())
    {
        return Err(ModelError::Invalid {
            field: "variance",
            reason: format!("{v} is not a finite non-negative number"),
        }
        .into());
    }
    let confidence: Vec<T> = variances
        .iter()
        .map(|&v| T::one() / (v.sqrt() + config.epsilon))
        .collect();
    let total: T = confidence.iter().copied().sum();
    Ok(WeightVector::new(
        confidence.into_iter().map(|c| c / total).collect(),
    )?)
}

/// Mean and variance of the weighted mixture of the member distributions.
pub fn mixture_moments<T: Scalar>(
    members: &[MomentPair<T>],
    weights: &WeightVector<T>,
) -> Result<MomentPair<T>, RobustnessError> {
    if members.len() != weights.len() {
        return Err(RobustnessError::LengthMismatch {
            members: members.len(),
            weights: weights.len(),
        });
    }
    let w = weights.as_slice();
    let mean: T = members.iter().zip(w).map(|(m, &w)| w * m.mean).sum();
    let variance: T = members
        .iter()
        .zip(w)
        .map(|(m, &w)| {
            let d = mean - m.mean;
            w * (m.variance + d * d)
        })
        .sum();
    Ok(MomentPair::new(mean, variance)?)
}

/// Coefficient-of-variation score; lower is more robust for both orientations.
///
/// Higher-better metrics use `sqrt(Var) / mean`; lower-better metrics use
/// `mean * sqrt(Var)`.
pub fn robustness_score<T: Scalar>(
    moments: &MomentPair<T>,
    orientation: Orientation,
) -> Result<T, RobustnessError> {
    let sd = moments.std_dev();
    match orientation {
        Orientation::HigherBetter => {
            if !(moments.mean > T::zero()) {
                return Err(RobustnessError::NonPositiveMean(
                    moments.mean.to_f64().unwrap_or(f64::NAN),
                ));
            }
            Ok(sd / moments.mean)
        }
        Orientation::LowerBetter => {
            if moments.mean < T::zero() {
                return Err(RobustnessError::NegativeMean(
                    moments.mean.to_f64().unwrap_or(f64::NAN),
                ));
            }
            Ok(moments.mean * sd)
        }
    }
}

/// The conditioning an aggregate was computed for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Zeta(ConditionKeyZeta),
    Xi(ConditionKeyXi),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Zeta(z) => z.fmt(f),
            Condition::Xi(x) => x.fmt(f),
        }
    }
}

/// Final score for one metric under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessScore<T> {
    pub metric: MetricId,
    pub condition: Condition,
    pub value: T,
    pub orientation: Orientation,
}

/// Every intermediate of the aggregation for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAggregate<T> {
    pub metric: MetricId,
    pub member_moments: Vec<MomentPair<T>>,
    pub weights: WeightVector<T>,
    pub mixture: MomentPair<T>,
    pub score: RobustnessScore<T>,
}

/// Aggregation of all five metrics under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionAggregate<T> {
    pub condition: Condition,
    /// Optimizers (zeta) or OOD sets (xi), in the order used for the weights.
    pub members: Vec<String>,
    pub metrics: Vec<MetricAggregate<T>>,
}

impl<T: Scalar> ConditionAggregate<T> {
    pub fn metric(&self, metric: MetricId) -> &MetricAggregate<T> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .expect("all five metrics are aggregated")
    }
}

/// Weights, mixture moments and score from already-estimated member moments.
pub fn aggregate_moments<T: Scalar>(
    member_moments: Vec<MomentPair<T>>,
    metric: MetricId,
    condition: Condition,
    config: &AggregationConfig<T>,
) -> Result<MetricAggregate<T>, RobustnessError> {
    let variances: Vec<T> = member_moments.iter().map(|m| m.variance).collect();
    let weights = mixture_weights(&variances, config)?;
    let mixture = mixture_moments(&member_moments, &weights)?;
    let orientation = config.orientation_of(metric);
    let value = robustness_score(&mixture, orientation)?;
    Ok(MetricAggregate {
        metric,
        member_moments,
        weights,
        mixture,
        score: RobustnessScore {
            metric,
            condition,
            value,
            orientation,
        },
    })
}

fn aggregate_groups<T: Scalar>(
    condition: Condition,
    members: &[String],
    groups: Vec<Vec<&MetricVector<T>>>,
    config: &AggregationConfig<T>,
) -> Result<ConditionAggregate<T>, RobustnessError> {
    config.validate()?;
    let missing: Vec<String> = members
        .iter()
        .zip(&groups)
        .filter(|(_, g)| g.is_empty())
        .map(|(name, _)| name.clone())
        .collect();
    if !missing.is_empty() || members.is_empty() {
        return Err(RobustnessError::IncompleteCondition {
            condition: condition.to_string(),
            missing,
        });
    }
    let metrics = MetricId::ALL
        .into_iter()
        .map(|metric| {
            let moments = groups
                .iter()
                .map(|g| {
                    let values: Vec<T> = g.iter().map(|v| v.get(metric)).collect();
                    moment_estimate(&values)
                })
                .collect::<Result<Vec<_>, _>>()?;
            aggregate_moments(moments, metric, condition.clone(), config)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConditionAggregate {
        condition,
        members: members.to_vec(),
        metrics,
    })
}

/// Aggregates over optimizers for a fixed (ID, OOD, detector).
pub fn aggregate_zeta<T: Scalar>(
    table: &MetricSampleTable<T>,
    zeta: &ConditionKeyZeta,
    optimizers: &[String],
    config: &AggregationConfig<T>,
) -> Result<ConditionAggregate<T>, RobustnessError> {
    let groups = optimizers
        .iter()
        .map(|t| table.group(&zeta.id_dataset, &zeta.ood_dataset, zeta.detector, t))
        .collect();
    aggregate_groups(Condition::Zeta(zeta.clone()), optimizers, groups, config)
}

/// Aggregates over the OOD sets of `registry` for a fixed (ID, detector, optimizer).
pub fn aggregate_xi<T: Scalar>(
    table: &MetricSampleTable<T>,
    xi: &ConditionKeyXi,
    registry: &OodSetRegistry,
    config: &AggregationConfig<T>,
) -> Result<ConditionAggregate<T>, RobustnessError> {
    if registry.id_dataset() != xi.id_dataset {
        return Err(ModelError::Invalid {
            field: "registry",
            reason: format!(
                "registry is for `{}`, condition is for `{}`",
                registry.id_dataset(),
                xi.id_dataset
            ),
        }
        .into());
    }
    let members = registry.ood_datasets();
    let groups = members
        .iter()
        .map(|o| table.group(&xi.id_dataset, o, xi.detector, &xi.optimizer))
        .collect();
    aggregate_groups(Condition::Xi(xi.clone()), members, groups, config)
}

/// Sorts scores ascending (most robust first); ties go to the lexicographically
/// smaller condition name.
pub fn rank_conditions<T: Scalar>(
    scores: &[RobustnessScore<T>],
) -> Result<Vec<RobustnessScore<T>>, RobustnessError> {
    if let Some(first) = scores.first() {
        if scores
            .iter()
            .any(|s| s.metric != first.metric || s.orientation != first.orientation)
        {
            return Err(RobustnessError::MixedScores);
        }
    }
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.condition.to_string().cmp(&b.condition.to_string()))
    });
    Ok(ranked)
}
