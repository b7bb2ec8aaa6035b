//! `vanya` command-line interface.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 on a
//! numerical failure during integration or training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use vanya::data::{generate_synthetic, load_csv, trajectory_csv, write_atomic, write_csv, AnnualSeries, SynthConfig};
use vanya::evaluation::{comparison_table, run_experiment, EvalReport, ExperimentConfig, Metric, ModelKind, SplitSpec};
use vanya::lv::{integrate_rk4, LvState};
use vanya::model_file::{ModelBody, ModelFile};
use vanya::plot::{emit_plot, PlotKind, PlotSource};
use vanya::training::{finetune, pretrain, rolling_forecast, transfer, OneStepForecaster, TrainConfig};
use vanya::{Error, Result};

#[derive(Parser)]
#[command(name = "vanya", version, about = "Physics-guided LSTM forecasting of annual series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Lotka-Volterra system and write a `t,x,y` CSV.
    Simulate(SimulateArgs),
    /// Pretrain an LSTM on simulated prey dynamics.
    Pretrain(PretrainArgs),
    /// Transfer a pretrained model to a series and fine-tune it.
    Finetune(FinetuneArgs),
    /// One-step forecasts from a trained model.
    Forecast(ForecastArgs),
    /// Run the multi-seed split grid and write a report with plots.
    Evaluate(EvaluateArgs),
    /// Render comparison tables and plots from a saved report.
    Report(ReportArgs),
    /// Generate a synthetic LV-derived annual series.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainOverrides {
    /// JSON training config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl TrainOverrides {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.pretrain_epochs {
            cfg.pretrain_epochs = v;
        }
        if let Some(v) = self.finetune_epochs {
            cfg.finetune_epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        cfg
    }

    fn resolve(&self, fallback: TrainConfig) -> Result<TrainConfig> {
        let base = match &self.config {
            Some(path) => read_config(path)?,
            None => fallback,
        };
        let cfg = self.apply(base);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    /// JSON training config; its `lv`, `initial`, `dt` and `steps` are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG line plot of the trajectory.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    train: TrainOverrides,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Pretrained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Series CSV with header `year,value`.
    #[arg(long)]
    data: PathBuf,
    /// Use only the first N points for fine-tuning.
    #[arg(long)]
    train_count: Option<usize>,
    #[command(flatten)]
    train: TrainOverrides,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    /// Trained model JSON (LSTM or ESN).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Teacher-forced forecasts for every index from this one onward.
    /// Without it, forecast the year after the last observation.
    #[arg(long)]
    test_start: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds per cell.
    #[arg(long)]
    runs: Option<usize>,
    /// First seed; runs use seed, seed + 1, ...
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated models: vanya, vanilla-lstm, reservoir-computing, persistence.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Comma-separated train-test splits such as 90-10.
    #[arg(long, value_delimiter = ',')]
    splits: Option<Vec<SplitSpec>>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    /// Directory for report.json, rmse.svg and mae.svg.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Directory for table.csv, table.txt and the SVG plots.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic-data config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_years: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    let lv = &mut cfg.lv;
    lv.alpha = args.alpha.unwrap_or(lv.alpha);
    lv.beta = args.beta.unwrap_or(lv.beta);
    lv.gamma = args.gamma.unwrap_or(lv.gamma);
    lv.delta = args.delta.unwrap_or(lv.delta);
    let initial = LvState::new(args.x0.unwrap_or(cfg.initial.x), args.y0.unwrap_or(cfg.initial.y));
    let traj = integrate_rk4(&cfg.lv, initial, args.dt.unwrap_or(cfg.dt), args.steps.unwrap_or(cfg.steps))?;
    write_atomic(&args.out, trajectory_csv(&traj).as_bytes())?;
    if let Some(plot) = &args.plot {
        emit_plot(&PlotSource::Trajectory(&traj), PlotKind::Lines, plot)?;
    }
    Ok(())
}

fn pretrain_cmd(args: PretrainArgs) -> Result<()> {
    let cfg = args.train.resolve(TrainConfig::default())?;
    let model = pretrain(&cfg)?;
    ModelFile::lstm(model).save(&args.out)
}

fn series_prefix(series: AnnualSeries, count: Option<usize>) -> Result<AnnualSeries> {
    match count {
        None => Ok(series),
        Some(n) if n <= series.len() => Ok(series.prefix(n)),
        Some(n) => Err(Error::InvalidInput(format!(
            "train count {n} exceeds series length {}",
            series.len()
        ))),
    }
}

fn finetune_cmd(args: FinetuneArgs) -> Result<()> {
    let pretrained = ModelFile::load(&args.model)?.into_lstm()?;
    let cfg = args.train.resolve(pretrained.config.clone())?;
    let series = series_prefix(load_csv(&args.data)?, args.train_count)?;
    let model = finetune(transfer(&pretrained, &series, &cfg)?, &cfg)?;
    ModelFile::lstm(model).save(&args.out)
}

fn forecast_cmd(args: ForecastArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let model: &dyn OneStepForecaster = match &file.body {
        ModelBody::Lstm(m) => m,
        ModelBody::Esn(m) => m,
    };
    let series = load_csv(&args.data)?;
    let mut out = String::from("year,value\n");
    match args.test_start {
        None => {
            let value = model.forecast_next(series.values())?;
            let next = series.years().last().copied().unwrap_or_default() + 1;
            out.push_str(&format!("{next},{value:.16e}\n"));
        }
        Some(start) => {
            let preds = rolling_forecast(model, &series, start)?;
            for (year, v) in series.years()[start..].iter().zip(&preds) {
                out.push_str(&format!("{year},{v:.16e}\n"));
            }
        }
    }
    match &args.out {
        Some(path) => write_atomic(path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn write_report_plots(report: &EvalReport, dir: &Path) -> Result<()> {
    emit_plot(&PlotSource::Report(report, Metric::Rmse), PlotKind::Bars, dir.join("rmse.svg"))?;
    emit_plot(&PlotSource::Report(report, Metric::Mae), PlotKind::Bars, dir.join("mae.svg"))
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.runs {
        cfg.n_runs = v;
    }
    if let Some(v) = args.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = args.models {
        cfg.models = v;
    }
    if let Some(v) = args.splits {
        cfg.splits = v;
    }
    if let Some(v) = args.pretrain_epochs {
        cfg.train.pretrain_epochs = v;
    }
    if let Some(v) = args.finetune_epochs {
        cfg.train.finetune_epochs = v;
    }
    let series = load_csv(&args.data)?;
    let report = run_experiment(&series, &cfg)?;
    ensure_dir(&args.out_dir)?;
    report.save(args.out_dir.join("report.json"))?;
    write_report_plots(&report, &args.out_dir)?;
    print!("{}", comparison_table(&report)?.to_text());
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let report = EvalReport::load(&args.report)?;
    let tables = comparison_table(&report)?;
    ensure_dir(&args.out_dir)?;
    write_atomic(args.out_dir.join("table.csv"), tables.to_csv().as_bytes())?;
    let text = tables.to_text();
    write_atomic(args.out_dir.join("table.txt"), text.as_bytes())?;
    write_report_plots(&report, &args.out_dir)?;
    print!("{text}");
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n_years {
        cfg.n_years = v;
    }
    if let Some(v) = args.noise_std {
        cfg.noise_std = v;
    }
    write_csv(&generate_synthetic(&cfg)?, &args.out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Forecast(a) => forecast_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
