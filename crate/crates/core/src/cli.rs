//! The `oodbench` command line: `synth`, `score`, `eval`, `aggregate`, `report`.
//!
//! Data goes to files only; warnings and errors go to stderr.

use crate::detectors::{fit_gaussian, score_population, DetectorSettings, PopulationInputs};
use crate::metrics::{evaluate_all, EvaluationPair};
use crate::model::{AggregationConfig, DetectorId, RunRecord, ID_POPULATION};
use crate::report::{self, ReportFormat};
use crate::robustness::{
    aggregate_xi, aggregate_zeta, ConditionAggregate, MetricSampleTable, SampleKey,
};
use crate::store::{self, ConditionKind, MetricRecord, ScoreManifest};
use crate::synth::{self, GaussianFixtureSpec};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::fs;
use std::path::PathBuf;

pub const THREADS_ENV: &str = "OODBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "oodbench",
    version,
    about = "Score OOD detectors and rank their robustness across optimizers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic run tree, or the published-table samples file.
    Synth(SynthArgs),
    /// Run detectors over a run tree and write one score file per population.
    Score(ScoreArgs),
    /// Compute the five metrics for every (run, OOD set, detector).
    Eval(EvalArgs),
    /// Aggregate metric samples into mixture moments and robustness scores.
    Aggregate(AggregateArgs),
    /// Render aggregates as Markdown or CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON fixture spec; the built-in default fixture is used when omitted.
    #[arg(long, conflicts_with = "paper_tables")]
    pub spec: Option<PathBuf>,
    /// Write `samples.csv` rebuilt from the published tables instead of a run tree.
    #[arg(long)]
    pub paper_tables: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub run_root: PathBuf,
    /// Comma-separated detector ids, or `all`.
    #[arg(long, default_value = "all")]
    pub detectors: String,
    #[arg(long, default_value_t = 1000.0)]
    pub odin_temp: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score tree written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Seed for subsampling the larger population; defaults to the run manifest's.
    #[arg(long)]
    pub balance_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// `zeta` (across optimizers) or `xi` (across OOD sets).
    #[arg(long)]
    pub condition: ConditionKind,
    #[arg(long, default_value_t = 1e-12)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub aggregates: PathBuf,
    /// `md` or `csv`.
    #[arg(long, default_value = "md")]
    pub format: ReportFormat,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_detectors(list: &str) -> Result<Vec<DetectorId>> {
    if list.trim() == "all" {
        return Ok(DetectorId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let d: DetectorId = item.parse()?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    if out.is_empty() {
        bail!("--detectors is empty");
    }
    Ok(out)
}

/// Caps rayon's global pool when `OODBENCH_THREADS` is set.
pub fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize =
            value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
                anyhow!("{THREADS_ENV} must be a positive integer, got `{value}`")
            })?;
        // A pool may already exist when called twice in one process; the first setting wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Aggregate(a) => cmd_aggregate(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.paper_tables {
        let path = args.out.join("samples.csv");
        synth::write_paper_tables_fixture(&path)?;
        return Ok(());
    }
    let spec = match &args.spec {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => GaussianFixtureSpec::default(),
    };
    synth::generate_gaussian_fixture(&spec, &args.out)?;
    Ok(())
}

fn score_run(
    root: &std::path::Path,
    out: &std::path::Path,
    record: &RunRecord<f64>,
    detectors: &[DetectorId],
    settings: &DetectorSettings<f64>,
) -> Result<()> {
    let run_dir = store::run_dir(root, &record.key);
    let gaussian = if detectors.contains(&DetectorId::Mahalanobis) {
        let logits = record.train_logits.as_ref().ok_or_else(|| {
            anyhow!(
                "md needs missing file {}",
                run_dir.join("train_logits.csv").display()
            )
        })?;
        let labels = record.train_labels.as_ref().ok_or_else(|| {
            anyhow!(
                "md needs missing file {}",
                run_dir.join("train_labels.csv").display()
            )
        })?;
        Some(
            fit_gaussian(logits, labels, record.num_classes)
                .with_context(|| format!("fitting md for {}", record.key))?,
        )
    } else {
        None
    };
    let populations = std::iter::once((ID_POPULATION, &record.id_test_logits))
        .chain(record.ood_logits.iter().map(|(n, m)| (n.as_str(), m)));
    for (population, logits) in populations {
        let inputs = PopulationInputs {
            logits,
            mc_passes: record.mc_passes.get(population).map(Vec::as_slice),
            gaussian: gaussian.as_ref(),
        };
        for &detector in detectors {
            let scores = score_population(detector, population, inputs, settings)
                .with_context(|| format!("{detector} on {}/{population}", record.key))?;
            store::write_scores(out, &record.key, &scores)?;
        }
    }
    Ok(())
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let requested = parse_detectors(&args.detectors)?;
    if !(args.odin_temp > 0.0 && args.odin_temp.is_finite()) {
        bail!("--odin-temp must be positive, got {}", args.odin_temp);
    }
    let (manifest, records) = store::load_run_tree::<f64>(&args.run_root)?;
    let detectors: Vec<DetectorId> = requested
        .into_iter()
        .filter(|d| {
            let keep = !(d.needs_mc_passes() && manifest.mc_passes == 0);
            if !keep {
                eprintln!("warning: skipping {d}: the run tree has no MC-dropout passes");
            }
            keep
        })
        .collect();
    if detectors.is_empty() {
        bail!("no requested detector can run on this tree");
    }
    let settings = DetectorSettings {
        odin_temperature: args.odin_temp,
    };
    records
        .par_iter()
        .map(|r| score_run(&args.run_root, &args.out, r, &detectors, &settings))
        .collect::<Result<Vec<()>>>()?;
    store::write_score_manifest(
        &args.out,
        &ScoreManifest {
            run: manifest,
            detectors,
            odin_temperature: args.odin_temp,
        },
    )?;
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let sm = store::read_score_manifest(&args.scores)?;
    let balance_seed = args.balance_seed.unwrap_or(sm.run.balance_seed);
    let mut jobs = Vec::new();
    for key in sm.run.run_keys() {
        for ood in &sm.run.ood_datasets {
            for &detector in &sm.detectors {
                jobs.push((key.clone(), ood.clone(), detector));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|(key, ood, detector)| -> Result<MetricRecord<f64>> {
            let id_scores = store::read_scores(&args.scores, key, ID_POPULATION, *detector)?;
            let ood_scores = store::read_scores(&args.scores, key, ood, *detector)?;
            let pair = EvaluationPair::new(id_scores, ood_scores, balance_seed)
                .with_context(|| format!("{detector} scores for {key} vs {ood}"))?;
            let metrics =
                evaluate_all(&pair).with_context(|| format!("{detector} on {key} vs {ood}"))?;
            Ok(MetricRecord {
                key: SampleKey {
                    id_dataset: key.id_dataset.clone(),
                    ood_dataset: ood.clone(),
                    detector: *detector,
                    optimizer: key.optimizer.clone(),
                    seed: key.seed,
                },
                balance_seed,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    store::write_metrics(&args.out.join("metrics.csv"), &records)?;
    let mut table = MetricSampleTable::new();
    for r in &records {
        table.insert(r.key.clone(), r.metrics)?;
    }
    store::write_samples(&args.out.join("samples.csv"), &table)?;
    Ok(())
}

/// Aggregates every condition of `kind` present in `table`. Members are every
/// optimizer (zeta) or OOD set (xi) seen for the condition's ID dataset.
pub fn aggregate_table(
    table: &MetricSampleTable<f64>,
    kind: ConditionKind,
    config: &AggregationConfig<f64>,
) -> Result<Vec<ConditionAggregate<f64>>> {
    let results: Vec<_> = match kind {
        ConditionKind::Zeta => table
            .zeta_conditions()
            .par_iter()
            .map(|z| {
                let optimizers = table.optimizers_for(&z.id_dataset);
                aggregate_zeta(table, z, &optimizers, config)
            })
            .collect(),
        ConditionKind::Xi => table
            .xi_conditions()
            .par_iter()
            .map(|x| {
                let registry = table.ood_registry_for(&x.id_dataset)?;
                aggregate_xi(table, x, &registry, config)
            })
            .collect(),
    };
    let mut aggregates = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(a) => aggregates.push(a),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        bail!(
            "{} condition(s) could not be aggregated:\n  {}",
            failures.len(),
            failures.join("\n  ")
        );
    }
    if aggregates.is_empty() {
        bail!("no {} conditions found", kind.as_str());
    }
    Ok(aggregates)
}

pub fn cmd_aggregate(args: &AggregateArgs) -> Result<()> {
    let table = store::read_samples::<f64>(&args.samples)?;
    let config = AggregationConfig::with_epsilon(args.epsilon)?;
    let aggregates = aggregate_table(&table, args.condition, &config)?;
    store::write_aggregates(
        &args.out.join("aggregates.csv"),
        &store::aggregate_rows(&aggregates),
    )?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let rows = store::read_aggregates(&args.aggregates)?;
    report::write_table(&rows, &args.out, args.format)?;
    Ok(())
}
