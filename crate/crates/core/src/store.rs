//! On-disk exchange formats: run trees, score trees, metric samples and aggregates.
//!
//! Run tree layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<optimizer>/<seed>/train_logits.csv
//! <root>/<optimizer>/<seed>/train_labels.csv
//! <root>/<optimizer>/<seed>/id_test_logits.csv
//! <root>/<optimizer>/<seed>/id_test_labels.csv        (optional)
//! <root>/<optimizer>/<seed>/ood/<ood_name>_logits.csv
//! <root>/<optimizer>/<seed>/mc/<population>/pass_<s>.csv
//! ```
//!
//! Logit matrices have a `c0,...,c{K-1}` header and one row per sample. Label
//! files hold one integer per line. Floats are written with 17 significant digits.

use crate::detectors::ScoreSet;
use crate::model::{
    validate_run, DetectorId, Matrix, MetricId, MetricVector, Orientation, RunKey, RunRecord,
    Violation, ID_POPULATION,
};
use crate::robustness::{Condition, ConditionAggregate, MetricSampleTable, SampleKey};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCORES_MANIFEST_FILE: &str = "scores.json";
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing file {}", .0.display())]
    Missing(PathBuf),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: row {row}, column {column}: cannot parse `{value}`", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        value: String,
    },
    #[error("{}: invalid manifest: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error("run {run} is invalid: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidRun {
        run: String,
        violations: Vec<Violation>,
    },
    #[error("nothing to write: {0} is empty")]
    Empty(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            StoreError::Missing(path.to_path_buf())
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn csv_err(path: &Path, err: csv::Error) -> StoreError {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path)(source),
        other => StoreError::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Formats a float like C's `%.17g`: enough digits to round-trip any `f64`.
pub fn format_g17(value: f64) -> String {
    if value == 0.0 {
        return if value.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{value:.16e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific notation");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if !(-5..17).contains(&exponent) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let exp_sign = if exponent < 0 { '-' } else { '+' };
        let body = if tail.is_empty() {
            head.to_string()
        } else {
            format!("{head}.{tail}")
        };
        return format!("{sign}{body}e{exp_sign}{:02}", exponent.abs());
    }
    let body = if exponent >= 0 {
        let split = exponent as usize + 1;
        let (int, frac) = digits.split_at(split);
        let frac = frac.trim_end_matches('0');
        if frac.is_empty() {
            int.to_string()
        } else {
            format!("{int}.{frac}")
        }
    } else {
        let zeros = "0".repeat((-exponent - 1) as usize);
        format!("0.{zeros}{}", digits.trim_end_matches('0'))
    };
    format!("{sign}{body}")
}

fn scalar_cell<T: Scalar>(value: T) -> String {
    format_g17(value.to_f64().expect("finite scalar"))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(path: &Path, writer: csv::Writer<Vec<u8>>) -> Result<(), StoreError> {
    let bytes = writer.into_inner().map_err(|e| StoreError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    write_atomic(path, &bytes)
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<fs::File>, StoreError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub fn write_matrix_csv<T: Scalar>(path: &Path, matrix: &Matrix<T>) -> Result<(), StoreError> {
    let mut w = csv_writer();
    let header: Vec<String> = (0..matrix.cols()).map(|c| format!("c{c}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in matrix.row_iter() {
        w.write_record(row.iter().map(|&v| scalar_cell(v)))
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Reads a logit matrix; rows and columns in errors are 1-based data positions.
pub fn read_matrix_csv<T: Scalar>(
    path: &Path,
    expected_cols: Option<usize>,
) -> Result<Matrix<T>, StoreError> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols = header.len();
    for (i, name) in header.iter().enumerate() {
        if name != format!("c{i}") {
            return Err(StoreError::Format {
                path: path.to_path_buf(),
                reason: format!("header column {} is `{name}`, expected `c{i}`", i + 1),
            });
        }
    }
    if let Some(k) = expected_cols {
        if cols != k {
            return Err(StoreError::Format {
                path: path.to_path_buf(),
                reason: format!("{cols} columns, expected {k}"),
            });
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != cols {
            return Err(StoreError::Format {
                path: path.to_path_buf(),
                reason: format!(
                    "row {} has {} columns, expected {cols}",
                    r + 1,
                    record.len()
                ),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: T = cell.parse().map_err(|_| StoreError::Parse {
                path: path.to_path_buf(),
                row: r + 1,
                column: c + 1,
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data).map_err(|e| StoreError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), StoreError> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| StoreError::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: 1,
                value: l.to_string(),
            })
        })
        .collect()
}

/// Describes the experimental grid of a run tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub id_dataset: String,
    pub num_classes: usize,
    pub optimizers: Vec<String>,
    pub seeds_per_optimizer: u32,
    pub ood_datasets: Vec<String>,
    pub mc_passes: usize,
    pub balance_seed: u64,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "format_version `{}` is not supported (expected `{FORMAT_VERSION}`)",
                self.format_version
            ));
        }
        if self.id_dataset.trim().is_empty() {
            return Err("id_dataset is empty".into());
        }
        if self.num_classes < 2 {
            return Err("num_classes must be at least 2".into());
        }
        if self.optimizers.is_empty() {
            return Err("optimizers is empty".into());
        }
        if self.ood_datasets.is_empty() {
            return Err("ood_datasets is empty".into());
        }
        if self.seeds_per_optimizer == 0 {
            return Err("seeds_per_optimizer must be at least 1".into());
        }
        for list in [&self.optimizers, &self.ood_datasets] {
            for (i, name) in list.iter().enumerate() {
                if name.trim().is_empty() || name.contains(['/', '\\']) {
                    return Err(format!("`{name}` is not a valid directory name"));
                }
                if list[..i].contains(name) {
                    return Err(format!("`{name}` is listed twice"));
                }
            }
        }
        if self.ood_datasets.iter().any(|o| o == ID_POPULATION) {
            return Err(format!("`{ID_POPULATION}` is reserved for the ID test set"));
        }
        Ok(())
    }

    /// Every run key of the grid, optimizer-major.
    pub fn run_keys(&self) -> Vec<RunKey> {
        self.optimizers
            .iter()
            .flat_map(|opt| {
                (1..=self.seeds_per_optimizer).map(move |seed| RunKey {
                    id_dataset: self.id_dataset.clone(),
                    optimizer: opt.clone(),
                    seed,
                })
            })
            .collect()
    }
}

pub fn run_dir(root: &Path, key: &RunKey) -> PathBuf {
    root.join(&key.optimizer).join(key.seed.to_string())
}

pub fn read_manifest(root: &Path) -> Result<Manifest, StoreError> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| StoreError::Manifest {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    manifest
        .validate()
        .map_err(|reason| StoreError::Manifest { path, reason })?;
    Ok(manifest)
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<(), StoreError> {
    let path = root.join(MANIFEST_FILE);
    manifest.validate().map_err(|reason| StoreError::Manifest {
        path: path.clone(),
        reason,
    })?;
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&path, text.as_bytes())
}

fn read_optional<R>(
    path: &Path,
    read: impl FnOnce(&Path) -> Result<R, StoreError>,
) -> Result<Option<R>, StoreError> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads one run directory. Training files are optional; everything the manifest
/// declares (ID test logits, every OOD set, `mc_passes` passes per population) is required.
pub fn load_run<T: Scalar>(
    root: &Path,
    manifest: &Manifest,
    key: &RunKey,
) -> Result<RunRecord<T>, StoreError> {
    let dir = run_dir(root, key);
    if !dir.is_dir() {
        return Err(StoreError::Missing(dir));
    }
    let k = Some(manifest.num_classes);
    let id_test_logits = read_matrix_csv(&dir.join("id_test_logits.csv"), k)?;
    let id_test_labels = read_optional(&dir.join("id_test_labels.csv"), read_labels)?;
    let train_logits = read_optional(&dir.join("train_logits.csv"), |p| read_matrix_csv(p, k))?;
    let train_labels = read_optional(&dir.join("train_labels.csv"), read_labels)?;

    let mut ood_logits = BTreeMap::new();
    for name in &manifest.ood_datasets {
        let path = dir.join("ood").join(format!("{name}_logits.csv"));
        ood_logits.insert(name.clone(), read_matrix_csv(&path, k)?);
    }

    let mut mc_passes = BTreeMap::new();
    if manifest.mc_passes > 0 {
        let populations =
            std::iter::once(ID_POPULATION.to_string()).chain(manifest.ood_datasets.iter().cloned());
        for population in populations {
            let passes = (0..manifest.mc_passes)
                .map(|s| {
                    let path = dir
                        .join("mc")
                        .join(&population)
                        .join(format!("pass_{s}.csv"));
                    read_matrix_csv(&path, k)
                })
                .collect::<Result<Vec<_>, _>>()?;
            mc_passes.insert(population, passes);
        }
    }

    let record = RunRecord {
        key: key.clone(),
        num_classes: manifest.num_classes,
        id_test_logits,
        id_test_labels,
        train_logits,
        train_labels,
        ood_logits,
        mc_passes,
    };
    let violations = validate_run(&record);
    if !violations.is_empty() {
        return Err(StoreError::InvalidRun {
            run: dir.display().to_string(),
            violations,
        });
    }
    Ok(record)
}

/// Loads the manifest and every run it declares, in manifest order.
pub fn load_run_tree<T: Scalar>(root: &Path) -> Result<(Manifest, Vec<RunRecord<T>>), StoreError> {
    let manifest = read_manifest(root)?;
    let records = manifest
        .run_keys()
        .iter()
        .map(|key| load_run(root, &manifest, key))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, records))
}

/// Writes one run directory in the layout read by [`load_run`].
pub fn write_run<T: Scalar>(root: &Path, record: &RunRecord<T>) -> Result<(), StoreError> {
    let dir = run_dir(root, &record.key);
    write_matrix_csv(&dir.join("id_test_logits.csv"), &record.id_test_logits)?;
    if let Some(labels) = &record.id_test_labels {
        write_labels(&dir.join("id_test_labels.csv"), labels)?;
    }
    if let Some(train) = &record.train_logits {
        write_matrix_csv(&dir.join("train_logits.csv"), train)?;
    }
    if let Some(labels) = &record.train_labels {
        write_labels(&dir.join("train_labels.csv"), labels)?;
    }
    for (name, matrix) in &record.ood_logits {
        write_matrix_csv(&dir.join("ood").join(format!("{name}_logits.csv")), matrix)?;
    }
    for (population, passes) in &record.mc_passes {
        for (s, pass) in passes.iter().enumerate() {
            write_matrix_csv(
                &dir.join("mc")
                    .join(population)
                    .join(format!("pass_{s}.csv")),
                pass,
            )?;
        }
    }
    Ok(())
}

/// Sidecar written next to a score tree so evaluation needs no run tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreManifest {
    pub run: Manifest,
    pub detectors: Vec<DetectorId>,
    pub odin_temperature: f64,
}

pub fn score_path(root: &Path, key: &RunKey, population: &str, detector: DetectorId) -> PathBuf {
    run_dir(root, key)
        .join(population)
        .join(format!("{}.csv", detector.as_str()))
}

/// Writes one score file (`score` header, one value per line).
pub fn write_scores<T: Scalar>(
    root: &Path,
    key: &RunKey,
    scores: &ScoreSet<T>,
) -> Result<PathBuf, StoreError> {
    if scores.scores.is_empty() {
        return Err(StoreError::Empty("score set"));
    }
    let path = score_path(root, key, &scores.population, scores.detector);
    let mut text = String::from("score\n");
    for &s in &scores.scores {
        text.push_str(&scalar_cell(s));
        text.push('\n');
    }
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_scores<T: Scalar>(
    root: &Path,
    key: &RunKey,
    population: &str,
    detector: DetectorId,
) -> Result<Vec<T>, StoreError> {
    let path = score_path(root, key, population, detector);
    let mut reader = csv_reader(&path, true)?;
    let header = reader.headers().map_err(|e| csv_err(&path, e))?;
    if header.len() != 1 || &header[0] != "score" {
        return Err(StoreError::Format {
            path: path.clone(),
            reason: "expected a single `score` column".into(),
        });
    }
    reader
        .records()
        .enumerate()
        .map(|(r, rec)| {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            rec[0].parse().map_err(|_| StoreError::Parse {
                path: path.clone(),
                row: r + 1,
                column: 1,
                value: rec[0].to_string(),
            })
        })
        .collect()
}

pub fn write_score_manifest(root: &Path, manifest: &ScoreManifest) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("score manifest serializes");
    text.push('\n');
    write_atomic(&root.join(SCORES_MANIFEST_FILE), text.as_bytes())
}

pub fn read_score_manifest(root: &Path) -> Result<ScoreManifest, StoreError> {
    let path = root.join(SCORES_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Manifest {
        path,
        reason: e.to_string(),
    })
}

pub const SAMPLES_HEADER: [&str; 7] = [
    "id_dataset",
    "ood_dataset",
    "detector",
    "optimizer",
    "seed",
    "metric",
    "value",
];

/// Writes the long-format metric samples file, one row per (sample, metric).
pub fn write_samples<T: Scalar>(
    path: &Path,
    table: &MetricSampleTable<T>,
) -> Result<(), StoreError> {
    if table.is_empty() {
        return Err(StoreError::Empty("metric sample table"));
    }
    let mut w = csv_writer();
    w.write_record(SAMPLES_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for (key, metrics) in table.iter() {
        for metric in MetricId::ALL {
            w.write_record([
                key.id_dataset.as_str(),
                key.ood_dataset.as_str(),
                key.detector.as_str(),
                key.optimizer.as_str(),
                &key.seed.to_string(),
                metric.as_str(),
                &scalar_cell(metrics.get(metric)),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(path, w)
}

/// Reads a long-format samples file; every sample must carry all five metrics in `[0, 100]`.
pub fn read_samples<T: Scalar>(path: &Path) -> Result<MetricSampleTable<T>, StoreError> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns != SAMPLES_HEADER {
        return Err(StoreError::Format {
            path: path.to_path_buf(),
            reason: format!("header must be `{}`", SAMPLES_HEADER.join(",")),
        });
    }
    let format = |reason: String| StoreError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut partial: BTreeMap<SampleKey, BTreeMap<MetricId, T>> = BTreeMap::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != SAMPLES_HEADER.len() {
            return Err(format(format!("row {row} has {} columns", record.len())));
        }
        let parse_err = |column: usize| StoreError::Parse {
            path: path.to_path_buf(),
            row,
            column,
            value: record[column - 1].to_string(),
        };
        let detector: DetectorId = record[2].parse().map_err(|_| parse_err(3))?;
        let seed: u32 = record[4].parse().map_err(|_| parse_err(5))?;
        let metric: MetricId = record[5].parse().map_err(|_| parse_err(6))?;
        let value: T = record[6].parse().map_err(|_| parse_err(7))?;
        if record[0].is_empty() || record[1].is_empty() || record[3].is_empty() {
            return Err(format(format!("row {row} has an empty identifier")));
        }
        if !(value >= T::zero() && value <= T::lit(100.0)) {
            return Err(format(format!(
                "row {row}: {metric} = {value} is outside [0, 100]"
            )));
        }
        let key = SampleKey {
            id_dataset: record[0].to_string(),
            ood_dataset: record[1].to_string(),
            detector,
            optimizer: record[3].to_string(),
            seed,
        };
        if partial
            .entry(key.clone())
            .or_default()
            .insert(metric, value)
            .is_some()
        {
            return Err(format(format!("row {row}: duplicate {metric} for {key}")));
        }
    }
    let mut table = MetricSampleTable::new();
    for (key, metrics) in partial {
        if let Some(missing) = MetricId::ALL.into_iter().find(|m| !metrics.contains_key(m)) {
            return Err(format(format!("{key} has no `{missing}` row")));
        }
        let vector = MetricVector::from_fn(|m| metrics[&m]);
        table
            .insert(key, vector)
            .map_err(|e| format(e.to_string()))?;
    }
    Ok(table)
}

/// One evaluated (run, OOD set, detector) triple with the seed used for balancing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord<T> {
    pub key: SampleKey,
    pub balance_seed: u64,
    pub metrics: MetricVector<T>,
}

pub const METRICS_HEADER: [&str; 11] = [
    "id_dataset",
    "ood_dataset",
    "detector",
    "optimizer",
    "seed",
    "balance_seed",
    "fpr_at_95tpr",
    "detection_error",
    "auroc",
    "aupr_in",
    "aupr_out",
];

/// Writes the wide metrics file, one row per record.
pub fn write_metrics<T: Scalar>(
    path: &Path,
    records: &[MetricRecord<T>],
) -> Result<(), StoreError> {
    if records.is_empty() {
        return Err(StoreError::Empty("metric list"));
    }
    let mut w = csv_writer();
    w.write_record(METRICS_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        let mut row = vec![
            r.key.id_dataset.clone(),
            r.key.ood_dataset.clone(),
            r.key.detector.as_str().to_string(),
            r.key.optimizer.clone(),
            r.key.seed.to_string(),
            r.balance_seed.to_string(),
        ];
        row.extend(
            MetricId::ALL
                .into_iter()
                .map(|m| scalar_cell(r.metrics.get(m))),
        );
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn read_metrics<T: Scalar>(path: &Path) -> Result<Vec<MetricRecord<T>>, StoreError> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(StoreError::Format {
            path: path.to_path_buf(),
            reason: format!("header must be `{}`", METRICS_HEADER.join(",")),
        });
    }
    reader
        .records()
        .enumerate()
        .map(|(r, rec)| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let parse_err = |column: usize| StoreError::Parse {
                path: path.to_path_buf(),
                row: r + 1,
                column,
                value: rec.get(column - 1).unwrap_or_default().to_string(),
            };
            let mut values = [T::zero(); 5];
            for (i, v) in values.iter_mut().enumerate() {
                *v = rec
                    .get(6 + i)
                    .ok_or_else(|| parse_err(7 + i))?
                    .parse()
                    .map_err(|_| parse_err(7 + i))?;
            }
            Ok(MetricRecord {
                key: SampleKey {
                    id_dataset: rec[0].to_string(),
                    ood_dataset: rec[1].to_string(),
                    detector: rec[2].parse().map_err(|_| parse_err(3))?,
                    optimizer: rec[3].to_string(),
                    seed: rec[4].parse().map_err(|_| parse_err(5))?,
                },
                balance_seed: rec[5].parse().map_err(|_| parse_err(6))?,
                metrics: MetricVector {
                    fpr_at_95tpr: values[0],
                    detection_error: values[1],
                    auroc: values[2],
                    aupr_in: values[3],
                    aupr_out: values[4],
                },
            })
        })
        .collect()
}

/// Conditioning mode of an aggregate row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConditionKind {
    Zeta,
    Xi,
}

impl ConditionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Zeta => "zeta",
            ConditionKind::Xi => "xi",
        }
    }
}

impl std::str::FromStr for ConditionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zeta" => Ok(ConditionKind::Zeta),
            "xi" => Ok(ConditionKind::Xi),
            other => Err(format!("unknown condition `{other}` (expected zeta or xi)")),
        }
    }
}

/// One line of `aggregates.csv`: a member's moments and weight, or the mixture's
/// moments and score.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub kind: ConditionKind,
    pub id_dataset: String,
    /// Empty for xi conditions.
    pub ood_dataset: String,
    pub detector: DetectorId,
    /// Empty for zeta conditions.
    pub optimizer: String,
    /// `None` on the mixture row.
    pub member: Option<String>,
    pub metric: MetricId,
    pub mean: f64,
    pub variance: f64,
    pub weight: Option<f64>,
    pub score: Option<f64>,
    pub orientation: Option<Orientation>,
}

impl AggregateRow {
    pub fn is_mixture(&self) -> bool {
        self.member.is_none()
    }
}

pub const AGGREGATES_HEADER: [&str; 13] = [
    "condition",
    "id_dataset",
    "ood_dataset",
    "detector",
    "optimizer",
    "row",
    "member",
    "metric",
    "mean",
    "variance",
    "weight",
    "score",
    "orientation",
];

/// Flattens aggregates into member rows followed by the mixture row, per metric.
pub fn aggregate_rows<T: Scalar>(aggregates: &[ConditionAggregate<T>]) -> Vec<AggregateRow> {
    let f = |v: T| v.to_f64().expect("finite scalar");
    let mut rows = Vec::new();
    for agg in aggregates {
        let (kind, id, ood, det, opt) = match &agg.condition {
            Condition::Zeta(z) => (
                ConditionKind::Zeta,
                z.id_dataset.clone(),
                z.ood_dataset.clone(),
                z.detector,
                String::new(),
            ),
            Condition::Xi(x) => (
                ConditionKind::Xi,
                x.id_dataset.clone(),
                String::new(),
                x.detector,
                x.optimizer.clone(),
            ),
        };
        let base = |member: Option<String>, metric, mean, variance| AggregateRow {
            kind,
            id_dataset: id.clone(),
            ood_dataset: ood.clone(),
            detector: det,
            optimizer: opt.clone(),
            member,
            metric,
            mean,
            variance,
            weight: None,
            score: None,
            orientation: None,
        };
        for m in &agg.metrics {
            for ((name, moments), &w) in agg
                .members
                .iter()
                .zip(&m.member_moments)
                .zip(m.weights.as_slice())
            {
                let mut row = base(
                    Some(name.clone()),
                    m.metric,
                    f(moments.mean),
                    f(moments.variance),
                );
                row.weight = Some(f(w));
                rows.push(row);
            }
            let mut row = base(None, m.metric, f(m.mixture.mean), f(m.mixture.variance));
            row.score = Some(f(m.score.value));
            row.orientation = Some(m.score.orientation);
            rows.push(row);
        }
    }
    rows
}

pub fn write_aggregates(path: &Path, rows: &[AggregateRow]) -> Result<(), StoreError> {
    if rows.is_empty() {
        return Err(StoreError::Empty("aggregate list"));
    }
    let opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
    let mut w = csv_writer();
    w.write_record(AGGREGATES_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.kind.as_str(),
            &r.id_dataset,
            &r.ood_dataset,
            r.detector.as_str(),
            &r.optimizer,
            if r.is_mixture() { "mixture" } else { "member" },
            r.member.as_deref().unwrap_or(""),
            r.metric.as_str(),
            &format_g17(r.mean),
            &format_g17(r.variance),
            &opt(r.weight),
            &opt(r.score),
            r.orientation.map(Orientation::as_str).unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn read_aggregates(path: &Path) -> Result<Vec<AggregateRow>, StoreError> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != AGGREGATES_HEADER {
        return Err(StoreError::Format {
            path: path.to_path_buf(),
            reason: format!("header must be `{}`", AGGREGATES_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != AGGREGATES_HEADER.len() {
            return Err(StoreError::Format {
                path: path.to_path_buf(),
                reason: format!("row {} has {} columns", r + 1, rec.len()),
            });
        }
        let parse_err = |column: usize| StoreError::Parse {
            path: path.to_path_buf(),
            row: r + 1,
            column,
            value: rec[column - 1].to_string(),
        };
        let opt_f64 = |column: usize| -> Result<Option<f64>, StoreError> {
            let cell = &rec[column - 1];
            if cell.is_empty() {
                Ok(None)
            } else {
                cell.parse().map(Some).map_err(|_| parse_err(column))
            }
        };
        let is_mixture = match &rec[5] {
            "mixture" => true,
            "member" => false,
            _ => return Err(parse_err(6)),
        };
        rows.push(AggregateRow {
            kind: rec[0].parse().map_err(|_| parse_err(1))?,
            id_dataset: rec[1].to_string(),
            ood_dataset: rec[2].to_string(),
            detector: rec[3].parse().map_err(|_| parse_err(4))?,
            optimizer: rec[4].to_string(),
            member: (!is_mixture).then(|| rec[6].to_string()),
            metric: rec[7].parse().map_err(|_| parse_err(8))?,
            mean: rec[8].parse().map_err(|_| parse_err(9))?,
            variance: rec[9].parse().map_err(|_| parse_err(10))?,
            weight: opt_f64(11)?,
            score: opt_f64(12)?,
            orientation: if rec[12].is_empty() {
                None
            } else {
                Some(rec[12].parse().map_err(|_| parse_err(13))?)
            },
        });
    }
    Ok(rows)
}
