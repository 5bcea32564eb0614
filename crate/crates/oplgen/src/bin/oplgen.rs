//! `oplgen` — learn treatment policies that survive selection-biased data.
//!
//! Exit codes: 0 success, 2 usage/validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oplgen::cli::{
    self, cmd_calibrate, cmd_fit, cmd_simulate, cmd_sweep, cmd_treated_report, CliError,
    PselChoice, RunConfig,
};
use oplgen::dataset::SimulationConfig;
use oplgen::nuisance::{BehaviorMode, ScoreMethod};
use oplgen::policy::PolicyKind;

#[derive(Parser)]
#[command(
    name = "oplgen",
    about = "Off-policy learning that generalizes from selection-biased trial data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/target CSV files with oracle columns.
    Simulate(SimulateArgs),
    /// Fit per-gamma policies on one dataset and emit them as JSON.
    Fit(RunArgs),
    /// Regret improvement over the gamma=1 baseline on fresh target draws.
    Sweep(RunArgs),
    /// Percentage of samples treated (pi > 1/2) per gamma.
    TreatedReport(RunArgs),
    /// Calibrate (gamma, P(S=1)) from one shared covariate column.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Training rows to accept.
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    /// Target-population draws.
    #[arg(long, default_value_t = 100_000)]
    n_target: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "train.csv")]
    out_train: PathBuf,
    #[arg(long, default_value = "target.csv")]
    out_target: PathBuf,
    /// Include oracle columns (xi, c, m, sel_prob, rn).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    oracle: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score method: dm | nipw | dr.
    #[arg(long)]
    method: Option<ScoreMethod>,
    /// Comma-separated gamma grid, e.g. "1.0,2.0,4.0".
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    /// Population selection probability, or `calibrate`.
    #[arg(long)]
    p_sel: Option<PselChoice>,
    /// Policy class: logistic | linear.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// CSV dataset (default: the synthetic benchmark).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_target: Option<usize>,
    /// Behavior policy: known | fit.
    #[arg(long)]
    behavior: Option<BehaviorMode>,
    /// Ridge strength for the outcome models.
    #[arg(long)]
    ridge: Option<f64>,
    /// Positivity clip eta.
    #[arg(long)]
    eta: Option<f64>,
    /// Covariate column used for calibration.
    #[arg(long)]
    calibrate_col: Option<String>,
    /// Target-population column file (CSV) for calibration of CSV datasets.
    #[arg(long)]
    calibrate_target: Option<PathBuf>,
    /// Disable the generalizable path (gamma grid collapses to {1}).
    #[arg(long)]
    no_generalize: bool,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    delta_tol: Option<f64>,
    /// Output file (policies JSON for `fit`, CSV for `sweep`/`treated-report`);
    /// defaults to stdout for tabular output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the fit report CSV here (fit only).
    #[arg(long)]
    report: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<(RunConfig, Option<PathBuf>, Option<PathBuf>), CliError> {
        let mut run = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.method {
            run.method = v;
        }
        if let Some(v) = self.gamma_grid {
            run.gamma_grid = v;
        }
        if let Some(v) = self.p_sel {
            run.p_sel = v;
        }
        if let Some(v) = self.policy {
            run.policy = v;
        }
        if let Some(v) = self.seeds {
            run.seeds = v;
        }
        if self.data.is_some() {
            run.csv = self.data;
        }
        if let Some(v) = self.n_train {
            run.n_train = v;
        }
        if let Some(v) = self.n_target {
            run.n_target = v;
        }
        if let Some(v) = self.behavior {
            run.behavior = v;
        }
        if let Some(v) = self.ridge {
            run.ridge = v;
        }
        if let Some(v) = self.eta {
            run.eta = v;
        }
        if let Some(v) = self.calibrate_col {
            run.calibrate_col = v;
        }
        if self.calibrate_target.is_some() {
            run.calibrate_target = self.calibrate_target;
        }
        if self.no_generalize {
            run.generalize = false;
        }
        if let Some(v) = self.restarts {
            run.restarts = v;
        }
        if let Some(v) = self.max_outer {
            run.max_outer = v;
        }
        if let Some(v) = self.delta_tol {
            run.delta_tol = v;
        }
        Ok((run, self.out, self.report))
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Training CSV file.
    #[arg(long)]
    train: PathBuf,
    /// Target-population CSV file holding the shared column.
    #[arg(long)]
    target_col: PathBuf,
    /// Shared column name.
    #[arg(long)]
    col: String,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => {
            if args.n_train == 0 || args.n_target == 0 {
                return Err(CliError::Usage(
                    "n-train and n-target must be positive".into(),
                ));
            }
            let cfg = SimulationConfig {
                n_train: args.n_train,
                n_target: args.n_target,
                seed: args.seed,
                ..SimulationConfig::default()
            };
            cmd_simulate(&cfg, &args.out_train, &args.out_target, args.oracle)?;
            eprintln!(
                "wrote {} and {}",
                args.out_train.display(),
                args.out_target.display()
            );
            Ok(())
        }
        Command::Fit(args) => {
            let (run, out, report) = args.into_config()?;
            let fit = cmd_fit(&run)?;
            let json = serde_json::to_string_pretty(&fit)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            emit(&format!("{json}\n"), out.as_ref())?;
            if let Some(report_path) = report {
                emit(&cli::fit_report_to_csv(&fit), Some(&report_path))?;
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let (run, out, _) = args.into_config()?;
            let rows = cmd_sweep(&run)?;
            emit(&cli::sweep_rows_to_csv(&rows), out.as_ref())
        }
        Command::TreatedReport(args) => {
            let (run, out, _) = args.into_config()?;
            let rows = cmd_treated_report(&run)?;
            emit(&cli::treated_rows_to_csv(&rows), out.as_ref())
        }
        Command::Calibrate(args) => {
            let result = cmd_calibrate(&args.train, &args.target_col, &args.col, args.eta)?;
            let json = serde_json::to_string(&result)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            println!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
