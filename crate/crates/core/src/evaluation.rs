//! Chronological train/test splits, RMSE/MAE, and the multi-seed experiment grid.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_esn, train_vanilla_lstm, EsnConfig, EsnParams, Persistence};
use crate::data::{write_atomic, AnnualSeries};
use crate::error::{Error, Result};
use crate::nn::FORMAT_VERSION;
use crate::training::{finetune, pretrain, rolling_forecast, transfer, OneStepForecaster, TrainConfig, TrainedModel};

fn check_pair(observed: &[f64], real: &[f64]) -> Result<()> {
    if observed.len() != real.len() {
        return Err(Error::Shape(format!(
            "observed length {} != real length {}",
            observed.len(),
            real.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::Shape("metric over empty series".into()));
    }
    Ok(())
}

pub fn rmse(observed: &[f64], real: &[f64]) -> Result<f64> {
    check_pair(observed, real)?;
    let ss: f64 = observed.iter().zip(real).map(|(o, r)| (o - r) * (o - r)).sum();
    Ok((ss / observed.len() as f64).sqrt())
}

pub fn mae(observed: &[f64], real: &[f64]) -> Result<f64> {
    check_pair(observed, real)?;
    let s: f64 = observed.iter().zip(real).map(|(o, r)| (o - r).abs()).sum();
    Ok(s / observed.len() as f64)
}

/// A chronological split given as the training share in whole percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_percent: u32,
}

impl SplitSpec {
    pub const STANDARD: [SplitSpec; 4] = [
        SplitSpec { train_percent: 90 },
        SplitSpec { train_percent: 80 },
        SplitSpec { train_percent: 70 },
        SplitSpec { train_percent: 60 },
    ];

    pub fn new(train_percent: u32) -> Result<Self> {
        if !(1..=99).contains(&train_percent) {
            return Err(Error::InvalidConfig(format!(
                "train percent must be in 1..=99, got {train_percent}"
            )));
        }
        Ok(Self { train_percent })
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_percent as f64 / 100.0
    }

    pub fn test_percent(&self) -> u32 {
        100 - self.train_percent
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.train_percent, self.test_percent())
    }
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("split `{s}` is not of the form TRAIN-TEST, e.g. 90-10"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let train: u32 = a.trim().parse().map_err(|_| bad())?;
        let test: u32 = b.trim().parse().map_err(|_| bad())?;
        if train + test != 100 {
            return Err(bad());
        }
        SplitSpec::new(train)
    }
}

/// `(train_count, test_count)` with `test_count = round_half_up(n * test_fraction)`.
pub fn split_series(n: usize, spec: SplitSpec, min_train: usize) -> Result<(usize, usize)> {
    let test = (n * spec.test_percent() as usize + 50) / 100;
    let train = n - test;
    if test < 1 || train < min_train {
        return Err(Error::TooShort {
            what: "series for split",
            needed: min_train + 1,
            got: n,
        });
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vanya,
    VanillaLstm,
    ReservoirComputing,
    Persistence,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Vanya,
        ModelKind::VanillaLstm,
        ModelKind::ReservoirComputing,
        ModelKind::Persistence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Vanya => "VANYA",
            ModelKind::VanillaLstm => "Vanilla LSTM",
            ModelKind::ReservoirComputing => "Reservoir Computing",
            ModelKind::Persistence => "Persistence",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "vanya" => Ok(ModelKind::Vanya),
            "vanilla_lstm" | "lstm" => Ok(ModelKind::VanillaLstm),
            "reservoir_computing" | "esn" | "reservoir" => Ok(ModelKind::ReservoirComputing),
            "persistence" => Ok(ModelKind::Persistence),
            _ => Err(Error::InvalidConfig(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "MAE")]
    Mae,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rmse => "RMSE",
            Metric::Mae => "MAE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub esn: EsnConfig,
    pub models: Vec<ModelKind>,
    pub splits: Vec<SplitSpec>,
    pub n_runs: usize,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            esn: EsnConfig::default(),
            models: ModelKind::ALL.to_vec(),
            splits: SplitSpec::STANDARD.to_vec(),
            n_runs: 10,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: ModelKind,
    pub model_name: String,
    pub split: SplitSpec,
    pub metric: Metric,
    pub train_count: usize,
    pub test_count: usize,
    /// Seeds of the successful runs, aligned with `values`.
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub failures: Vec<RunFailure>,
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single run.
    pub std_dev: Option<f64>,
    pub single_run: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub length: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn of(series: &AnnualSeries) -> Self {
        Self {
            length: series.len(),
            first_year: series.years().first().copied().unwrap_or_default(),
            last_year: series.years().last().copied().unwrap_or_default(),
            sha256: series.content_hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub tool_version: String,
    pub dataset: DatasetFingerprint,
    pub config: ExperimentConfig,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn splits(&self) -> Vec<SplitSpec> {
        let mut out: Vec<SplitSpec> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.split) {
                out.push(r.split);
            }
        }
        out
    }

    pub fn models(&self) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.model) {
                out.push(r.model);
            }
        }
        out
    }

    pub fn record(&self, model: ModelKind, split: SplitSpec, metric: Metric) -> Option<&EvalRecord> {
        self.records
            .iter()
            .find(|r| r.model == model && r.split == split && r.metric == metric)
    }
}

/// Mean and sample standard deviation by Welford's recurrence; identical
/// values give a standard deviation of exactly zero.
pub fn mean_and_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let std = if values.len() > 1 {
        (m2 / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

type CellResult = std::result::Result<(f64, f64), String>;

fn score<F: OneStepForecaster + ?Sized>(model: &F, data: &AnnualSeries, train: usize) -> Result<(f64, f64)> {
    let pred = rolling_forecast(model, data, train)?;
    let truth = &data.values()[train..];
    Ok((rmse(&pred, truth)?, mae(&pred, truth)?))
}

fn run_cell(
    kind: ModelKind,
    data: &AnnualSeries,
    train_count: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    pretrained: Option<&std::result::Result<TrainedModel, String>>,
) -> CellResult {
    let train_series = data.prefix(train_count);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let result = match kind {
        ModelKind::Vanya => {
            let pre = pretrained
                .expect("pretrained model for every seed")
                .as_ref()
                .map_err(|e| e.clone())?;
            transfer(pre, &train_series, &train_cfg)
                .and_then(|state| finetune(state, &train_cfg))
                .and_then(|m| score(&m, data, train_count))
        }
        ModelKind::VanillaLstm => {
            train_vanilla_lstm(&train_series, &train_cfg).and_then(|m| score(&m, data, train_count))
        }
        ModelKind::ReservoirComputing => EsnParams::new(EsnConfig {
            seed,
            ..cfg.esn.clone()
        })
        .and_then(|p| train_esn(&train_series, p))
        .and_then(|m| score(&m, data, train_count)),
        ModelKind::Persistence => score(&Persistence, data, train_count),
    };
    result.map_err(|e| e.to_string())
}

/// Train and score every (model, split, seed) cell; seeds are `base_seed + run`.
pub fn run_experiment(data: &AnnualSeries, cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.train.validate()?;
    if cfg.n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be >= 1".into()));
    }
    if cfg.models.is_empty() || cfg.splits.is_empty() {
        return Err(Error::InvalidConfig("need at least one model and one split".into()));
    }
    let seeds: Vec<u64> = (0..cfg.n_runs as u64).map(|k| cfg.base_seed + k).collect();
    let min_train = cfg.train.min_train_len();
    let split_counts = cfg
        .splits
        .iter()
        .map(|&s| split_series(data.len(), s, min_train).map(|c| (s, c)))
        .collect::<Result<Vec<_>>>()?;

    // Pretraining does not see the real data, so it is shared across splits.
    let pretrained: BTreeMap<u64, std::result::Result<TrainedModel, String>> = if cfg.models.contains(&ModelKind::Vanya) {
        seeds
            .par_iter()
            .map(|&seed| {
                let c = TrainConfig {
                    seed,
                    ..cfg.train.clone()
                };
                (seed, pretrain(&c).map_err(|e| format!("pretraining failed: {e}")))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    } else {
        BTreeMap::new()
    };

    let mut cells = Vec::new();
    for &model in &cfg.models {
        for &(split, (train, _)) in &split_counts {
            for &seed in &seeds {
                cells.push((model, split, train, seed));
            }
        }
    }
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(model, _, train, seed)| run_cell(model, data, train, seed, cfg, pretrained.get(&seed)))
        .collect();

    let mut records = Vec::new();
    let mut idx = 0;
    for &model in &cfg.models {
        for &(split, (train_count, test_count)) in &split_counts {
            let chunk = &results[idx..idx + seeds.len()];
            idx += seeds.len();
            for metric in [Metric::Rmse, Metric::Mae] {
                let mut ok_seeds = Vec::new();
                let mut values = Vec::new();
                let mut failures = Vec::new();
                for (&seed, r) in seeds.iter().zip(chunk) {
                    match r {
                        Ok((r_rmse, r_mae)) => {
                            ok_seeds.push(seed);
                            values.push(if metric == Metric::Rmse { *r_rmse } else { *r_mae });
                        }
                        Err(message) => failures.push(RunFailure {
                            seed,
                            message: message.clone(),
                        }),
                    }
                }
                let stats = mean_and_std(&values);
                records.push(EvalRecord {
                    model,
                    model_name: model.name().to_string(),
                    split,
                    metric,
                    train_count,
                    test_count,
                    single_run: values.len() == 1,
                    mean: stats.map(|s| s.0),
                    std_dev: stats.map(|s| s.1),
                    seeds: ok_seeds,
                    values,
                    failures,
                });
            }
        }
    }

    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: DatasetFingerprint::of(data),
        config: cfg.clone(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model_name: String,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub best: bool,
    /// Other models sharing the best value.
    pub tied_with: Vec<String>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTable {
    pub split: SplitSpec,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTables {
    pub tables: Vec<SplitTable>,
}

/// One table per split, one row per (model, metric), lowest mean flagged best.
///
/// Ties go to the lexicographically first model name; the others are listed on the winning row.
pub fn comparison_table(report: &EvalReport) -> Result<ComparisonTables> {
    if report.records.is_empty() {
        return Err(Error::InvalidInput("report has no records".into()));
    }
    let mut tables = Vec::new();
    for split in report.splits() {
        let mut rows: Vec<TableRow> = report
            .records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| TableRow {
                model_name: r.model_name.clone(),
                metric: r.metric,
                mean: r.mean,
                std_dev: r.std_dev,
                best: false,
                tied_with: Vec::new(),
                failures: r.failures.len(),
            })
            .collect();
        for metric in [Metric::Rmse, Metric::Mae] {
            let best = rows
                .iter()
                .filter(|r| r.metric == metric)
                .filter_map(|r| r.mean)
                .fold(f64::INFINITY, f64::min);
            let mut winners: Vec<usize> = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.metric == metric && r.mean == Some(best))
                .map(|(i, _)| i)
                .collect();
            winners.sort_by(|&a, &b| rows[a].model_name.cmp(&rows[b].model_name));
            if let Some((&first, rest)) = winners.split_first() {
                let names = rest.iter().map(|&i| rows[i].model_name.clone()).collect();
                rows[first].best = true;
                rows[first].tied_with = names;
            }
        }
        tables.push(SplitTable { split, rows });
    }
    Ok(ComparisonTables { tables })
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.prec$}"))
}

impl ComparisonTables {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,model,metric,mean,std_dev,best,tied_with,failures\n");
        for t in &self.tables {
            for r in &t.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    t.split,
                    r.model_name,
                    r.metric.name(),
                    r.mean.map_or(String::new(), |v| v.to_string()),
                    r.std_dev.map_or(String::new(), |v| v.to_string()),
                    r.best,
                    r.tied_with.join(";"),
                    r.failures
                ));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            out.push_str(&format!("Split {}\n", t.split));
            let name_w = t.rows.iter().map(|r| r.model_name.len()).max().unwrap_or(5).max(5);
            out.push_str(&format!(
                "{:<name_w$}  {:<6}  {:>14}  {:>12}  {}\n",
                "Model", "Metric", "Mean", "Std Dev", "Note"
            ));
            for r in &t.rows {
                let mut note = String::new();
                if r.best {
                    note.push_str("best");
                    if !r.tied_with.is_empty() {
                        note.push_str(&format!(" (tie with {})", r.tied_with.join(", ")));
                    }
                }
                if r.failures > 0 {
                    if !note.is_empty() {
                        note.push_str("; ");
                    }
                    note.push_str(&format!("{} failed runs", r.failures));
                }
                out.push_str(&format!(
                    "{:<name_w$}  {:<6}  {:>14}  {:>12}  {}\n",
                    r.model_name,
                    r.metric.name(),
                    fmt_opt(r.mean, 3),
                    fmt_opt(r.std_dev, 3),
                    note
                ));
            }
            out.push('\n');
        }
        out
    }
}
