use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kinn_core::config::RunConfig;
use kinn_core::experiments::{
    read_results, render_plots, run_experiments, specs_for_id, summary_table, table_rows_with, write_results,
};
use kinn_core::expert::{fit_sarima, ExpertModel};
use kinn_core::kinn::{kinn_train, nn_train, read_json, write_json};
use kinn_core::timeseries::{write_csv, FillPolicy};
use kinn_core::{ErrorClass, KinnError, Result};

#[derive(Parser, Debug)]
#[command(name = "kinn", version, about = "Expert-conditioned residual forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every output file (overrides `output_dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Gap handling for CSV input.
    #[arg(long, global = true)]
    fill: Option<Fill>,
    /// Training epochs (overrides `network.epochs`).
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Network seed (overrides `network.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fill {
    Reject,
    Forward,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured synthetic series as CSV.
    Synth {
        /// Output file, relative to the output directory.
        #[arg(long, default_value = "synthetic.csv")]
        output: PathBuf,
    },
    /// Fit the seasonal ARIMA expert on the training split.
    FitExpert {
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Train the plain network or the expert-conditioned network.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Expert JSON written by `fit-expert`.
        #[arg(long)]
        expert: Option<PathBuf>,
    },
    /// Run comparison experiments and write results and plots.
    Experiment {
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        id: Option<u8>,
        #[arg(long)]
        all: bool,
    },
    /// Summarise a results directory and render its plots.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Nn,
    Kinn,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Computation => 2,
        ErrorClass::Io => 3,
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
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &global.out_dir {
        config.output_dir = dir.clone();
    }
    if let Some(fill) = global.fill {
        config.dataset.fill = match fill {
            Fill::Reject => FillPolicy::Reject,
            Fill::Forward => FillPolicy::Forward,
        };
    }
    if let Some(epochs) = global.epochs {
        config.network.epochs = epochs;
    }
    if let Some(seed) = global.seed {
        config.network.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KinnError::io(dir, e))
}

/// Appends a timestamped line to `run.log`. Result files never carry
/// timestamps, so this is the only record of when a command ran.
fn log_run(dir: &Path, line: &str) {
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(dir.join("run.log")) {
        let _ = writeln!(f, "{stamp} {line}");
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Command::Report { dir } = &cli.command {
        return report(dir);
    }
    let config = load_config(&cli.global)?;
    let out = config.output_dir.clone();
    ensure_dir(&out)?;
    log_run(&out, &format!("{:?}", cli.command));
    match cli.command {
        Command::Synth { output } => synth(&config, &out.join(output)),
        Command::FitExpert { max_iterations } => fit_expert(&config, &out, max_iterations),
        Command::Train { model, expert } => train(&config, &out, model, expert),
        Command::Experiment { id, all } => experiment(&config, &out, id, all),
        Command::Report { .. } => unreachable!(),
    }
}

fn synth(config: &RunConfig, path: &Path) -> Result<u8> {
    let ts = kinn_core::experiments::generate_synthetic(&config.dataset.synthetic)?;
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    write_csv(&ts, path)?;
    let (lo, hi) = ts
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("wrote {}", path.display());
    println!("rows {}  mean {:.4}  std {:.4}  min {:.4}  max {:.4}", ts.len(), ts.mean(), ts.std(), lo, hi);
    Ok(0)
}

#[derive(Serialize)]
struct FitDiagnostics {
    css: f64,
    iterations: usize,
    converged: bool,
    residual_variance: f64,
    train_range: [usize; 2],
    decorated: bool,
}

fn fit_expert(config: &RunConfig, out: &Path, max_iterations: Option<usize>) -> Result<u8> {
    let series = config.load_series()?;
    let bounds = config.split.bounds(series.len())?;
    let mut opts = config.expert.fit_options();
    if let Some(n) = max_iterations {
        opts.max_iterations = n;
    }
    let train = &series.values[bounds.train.clone()];
    let fit = fit_sarima(train, config.expert.orders, opts)?;
    let meta = fit.model.fit_metadata.clone();
    let diagnostics = FitDiagnostics {
        css: meta.css,
        iterations: meta.iterations,
        converged: meta.converged,
        residual_variance: fit.model.residual_variance,
        train_range: [bounds.train.start, bounds.train.end],
        decorated: config.expert.decoration(0.0).is_some(),
    };
    let mut expert = ExpertModel::Sarima(fit.model.clone());
    let train_std = series.slice(bounds.train.clone())?.std();
    if let Some(decoration) = config.expert.decoration(train_std) {
        expert = expert.decorate(decoration)?;
    }
    expert.save_json(out.join("expert.json"))?;
    write_json(out.join("expert-fit.json"), &diagnostics)?;
    println!(
        "ar {:?} ma {:?} sar {:?} sma {:?} intercept {:.6}",
        fit.model.ar, fit.model.ma, fit.model.sar, fit.model.sma, fit.model.intercept
    );
    println!("css {:.6}  iterations {}  converged {}", meta.css, meta.iterations, meta.converged);
    println!("wrote {}", out.join("expert.json").display());
    Ok(0)
}

fn train(config: &RunConfig, out: &Path, model: ModelKind, expert: Option<PathBuf>) -> Result<u8> {
    let expert_path = match model {
        ModelKind::Kinn => {
            let path = expert.unwrap_or_else(|| out.join("expert.json"));
            if !path.is_file() {
                return Err(KinnError::MissingDependency(format!(
                    "--model kinn needs a fitted expert; {} not found (run `kinn fit-expert` or pass --expert)",
                    path.display()
                )));
            }
            Some(path)
        }
        ModelKind::Nn => None,
    };
    let series = config.load_series()?;
    let bounds = config.split.bounds(series.len())?;
    let opts = config.network.train_options();
    let window = config.network.window;
    let (dir, report) = match expert_path {
        None => {
            let net = config.network.network_config(1);
            let (model, report) = nn_train(&series.values, &bounds, &net, &opts, window)?;
            let dir = out.join("nn");
            model.save_bundle(&dir)?;
            (dir, report)
        }
        Some(path) => {
            let expert: ExpertModel = read_json(&path)?;
            let mode = config.kinn.mode;
            let net = config.network.network_config(mode.input_channels());
            let (model, report) = kinn_train(&series.values, &bounds, expert, mode, &net, &opts, window)?;
            let dir = out.join("kinn");
            model.save_bundle(&dir)?;
            (dir, report)
        }
    };
    write_json(dir.join("train-report.json"), &report)?;
    println!(
        "best epoch {}  best val loss {:.6}  final train loss {}",
        report.best_epoch,
        report.best_val_loss,
        report.train_loss.last().map_or("n/a".to_string(), |l| format!("{l:.6}"))
    );
    println!("wrote {}", dir.display());
    Ok(0)
}

fn experiment(config: &RunConfig, out: &Path, id: Option<u8>, all: bool) -> Result<u8> {
    let specs = if all {
        config.experiment_specs()
    } else {
        let id = id.ok_or_else(|| KinnError::InvalidConfig("pass --id or --all".into()))?;
        specs_for_id(id)?;
        table_rows_with(config.experiment.reduced_fraction, config.experiment.small_fraction)
            .into_iter()
            .filter(|r| r.id == id)
            .collect()
    };
    let series = config.load_series()?;
    let settings = config.experiment_settings();
    let run = run_experiments(&series, &specs, &settings);
    write_results(out, &run)?;
    render_plots(out, &run.results)?;
    print!("{}", summary_table(&read_results(out)?));
    Ok(if run.failures.is_empty() { 0 } else { 2 })
}

fn report(dir: &Path) -> Result<u8> {
    let file = read_results(dir)?;
    if file.results.is_empty() && file.failures.is_empty() {
        return Err(KinnError::EmptyInput(format!("{} holds no results", dir.display())));
    }
    let plots = render_plots(dir, &file.results)?;
    print!("{}", summary_table(&file));
    for p in plots {
        println!("wrote {}", p.display());
    }
    Ok(0)
}
