//! Command implementations behind the `oplgen` binary.
//!
//! Commands: `simulate` (write synthetic train/target CSV files), `fit`
//! (per-Γ policies from one dataset), `sweep` (regret improvement of the
//! worst-case policies over the Γ = 1 baseline on fresh target draws),
//! `treated-report` (fraction of samples treated per Γ), and `calibrate`
//! (data-driven `(Γ, P(S=1))` from one shared covariate column).
//!
//! All tabular output is CSV with headers; everything is deterministic given
//! the configured seeds, including row order of parallel sweeps.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::{calibrate, CalibrationError, CalibrationOptions};
use crate::dataset::{
    self, load_csv, policy_regret, simulate, CsvSchema, DataError, SimulatedSample,
    SimulationConfig, TrialDataset,
};
use crate::dcopt::{mmccp, DcObjective, MmccpConfig, MmccpResult, SolveError};
use crate::nuisance::{
    build_scores, fit_nuisance, BehaviorMode, FitError, NuisanceOptions, ScoreMethod,
    ScoreVector,
};
use crate::policy::{policy_prob, PolicyKind, PolicySpec};
use crate::worstcase::{bounds, WorstCaseError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Usage or validation problem; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Numerical failure; exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Generation { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::MissingBehaviorProbs => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::BadConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Fit(inner) => CliError::Numeric(inner.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<WorstCaseError> for CliError {
    fn from(e: WorstCaseError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

/// Population selection probability: a fixed value or data-driven calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PselChoice {
    Fixed(f64),
    Calibrate,
}

impl Serialize for PselChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PselChoice::Fixed(v) => s.serialize_f64(*v),
            PselChoice::Calibrate => s.serialize_str("calibrate"),
        }
    }
}

impl<'de> Deserialize<'de> for PselChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = PselChoice;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a number or the string \"calibrate\"")
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<PselChoice, E> {
                Ok(PselChoice::Fixed(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<PselChoice, E> {
                Ok(PselChoice::Fixed(v as f64))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<PselChoice, E> {
                Ok(PselChoice::Fixed(v as f64))
            }

            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<PselChoice, E> {
                if s == "calibrate" {
                    Ok(PselChoice::Calibrate)
                } else {
                    Err(E::custom(format!(
                        "expected \"calibrate\" or a number, got \"{s}\""
                    )))
                }
            }
        }
        d.deserialize_any(Visitor)
    }
}

impl FromStr for PselChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "calibrate" {
            return Ok(PselChoice::Calibrate);
        }
        s.parse::<f64>()
            .map(PselChoice::Fixed)
            .map_err(|_| format!("p-sel must be a number in (0,1) or `calibrate`, got `{s}`"))
    }
}

/// Default Γ grid for sweeps and fits.
pub fn default_gamma_grid() -> Vec<f64> {
    vec![
        1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0,
    ]
}

/// One flat run configuration shared by `fit`, `sweep` and `treated-report`.
/// Serialized as a single JSON document; every field has a default and any
/// command-line flag overrides the file value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: ScoreMethod,
    /// When false, only the Γ = 1 baseline is fit.
    pub generalize: bool,
    pub gamma_grid: Vec<f64>,
    pub p_sel: PselChoice,
    pub policy: PolicyKind,
    pub lambda: f64,
    pub box_bound: f64,
    pub seeds: Vec<u64>,
    /// CSV dataset path; when absent the synthetic benchmark is used.
    pub csv: Option<PathBuf>,
    pub n_train: usize,
    pub n_target: usize,
    pub behavior: BehaviorMode,
    pub ridge: f64,
    pub eta: f64,
    /// Covariate column used for calibration.
    pub calibrate_col: String,
    /// Target-population column file for calibration of CSV datasets.
    pub calibrate_target: Option<PathBuf>,
    pub delta_tol: f64,
    pub max_outer: usize,
    pub inner_max_iters: usize,
    pub inner_grad_tol: f64,
    pub restarts: usize,
    pub init_sd: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mmccp = MmccpConfig::default();
        Self {
            method: ScoreMethod::Dr,
            generalize: true,
            gamma_grid: default_gamma_grid(),
            p_sel: PselChoice::Calibrate,
            policy: PolicyKind::Logistic,
            lambda: crate::policy::DEFAULT_LAMBDA,
            box_bound: crate::policy::DEFAULT_BOX_BOUND,
            seeds: vec![1, 2, 3, 4, 5],
            csv: None,
            n_train: 2000,
            n_target: 100_000,
            behavior: BehaviorMode::Known,
            ridge: 1e-3,
            eta: 0.01,
            calibrate_col: "x2".into(),
            calibrate_target: None,
            delta_tol: mmccp.delta_tol,
            max_outer: mmccp.max_outer,
            inner_max_iters: mmccp.inner_max_iters,
            inner_grad_tol: mmccp.inner_grad_tol,
            restarts: mmccp.restarts,
            init_sd: mmccp.init_sd,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("cannot parse config {}: {e}", path.display())))
    }

    pub fn mmccp_config(&self) -> MmccpConfig {
        MmccpConfig {
            delta_tol: self.delta_tol,
            max_outer: self.max_outer,
            inner_max_iters: self.inner_max_iters,
            inner_grad_tol: self.inner_grad_tol,
            restarts: self.restarts,
            init_sd: self.init_sd,
        }
    }

    pub fn nuisance_options(&self) -> NuisanceOptions {
        NuisanceOptions {
            ridge: self.ridge,
            eta: self.eta,
            behavior: self.behavior,
            ..NuisanceOptions::default()
        }
    }

    fn effective_grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = if self.generalize {
            self.gamma_grid.clone()
        } else {
            vec![1.0]
        };
        if grid.is_empty() {
            return Err(CliError::Usage("gamma grid is empty".into()));
        }
        for &g in &grid {
            if !g.is_finite() || g < 1.0 {
                return Err(CliError::Usage(format!(
                    "gamma grid entries must be finite and >= 1, got {g}"
                )));
            }
        }
        Ok(grid)
    }

    fn simulation_config(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n_train: self.n_train,
            n_target: self.n_target,
            seed,
            ..SimulationConfig::default()
        }
    }
}

/// Everything needed to optimize policies on one dataset.
struct SeedContext {
    data: TrialDataset,
    target: Option<Vec<SimulatedSample>>,
    scores: ScoreVector,
    p_sel: f64,
    spec: PolicySpec,
}

fn resolve_p_sel(
    run: &RunConfig,
    data: &TrialDataset,
    target: Option<&[SimulatedSample]>,
) -> Result<f64, CliError> {
    match run.p_sel {
        PselChoice::Fixed(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::Usage(format!(
                    "p-sel must lie strictly inside (0, 1), got {p}"
                )));
            }
            Ok(p)
        }
        PselChoice::Calibrate => {
            let col_idx = data.covariate_index(&run.calibrate_col).ok_or_else(|| {
                CliError::Usage(format!(
                    "calibration column `{}` not found in dataset",
                    run.calibrate_col
                ))
            })?;
            let train_col = data.column(col_idx);
            let target_col: Vec<f64> = match (target, &run.calibrate_target) {
                (Some(samples), _) => samples.iter().map(|s| s.x[col_idx]).collect(),
                (None, Some(path)) => read_column(path, &run.calibrate_col)?,
                (None, None) => {
                    return Err(CliError::Usage(
                        "calibration needs a target column: pass --calibrate-target for CSV data"
                            .into(),
                    ))
                }
            };
            let opts = CalibrationOptions {
                eta: run.eta,
                ..CalibrationOptions::default()
            };
            let result = calibrate(&train_col, &target_col, &opts)?;
            Ok(result.p_sel)
        }
    }
}

fn build_context(run: &RunConfig, seed: u64) -> Result<SeedContext, CliError> {
    let (data, target) = match &run.csv {
        Some(path) => (load_csv(path, &CsvSchema::default())?, None),
        None => {
            let sim = simulate(&run.simulation_config(seed))?;
            (sim.train, Some(sim.target))
        }
    };
    let models = fit_nuisance(&data, &run.nuisance_options())?;
    let scores = build_scores(run.method, &data, &models);
    let p_sel = resolve_p_sel(run, &data, target.as_deref())?;
    let spec = PolicySpec {
        kind: run.policy,
        dim: data.dim(),
        box_bound: run.box_bound,
        lambda: run.lambda,
        linear_eps: crate::policy::DEFAULT_LINEAR_EPS,
    };
    Ok(SeedContext {
        data,
        target,
        scores,
        p_sel,
        spec,
    })
}

fn fit_at_gamma(
    ctx: &SeedContext,
    gamma: f64,
    cfg: &MmccpConfig,
    seed: u64,
) -> Result<MmccpResult, CliError> {
    let set = bounds(gamma, ctx.p_sel)?;
    let dc = DcObjective::new(&ctx.scores, set, ctx.spec, &ctx.data);
    Ok(mmccp(&dc, cfg, seed)?)
}

/// Writes synthetic train/target CSV files.
pub fn cmd_simulate(
    cfg: &SimulationConfig,
    out_train: &Path,
    out_target: &Path,
    oracle: bool,
) -> Result<(), CliError> {
    let sim = simulate(cfg)?;
    dataset::write_samples_csv(out_train, &sim.train_oracle, oracle)?;
    dataset::write_samples_csv(out_target, &sim.target, oracle)?;
    Ok(())
}

/// One fitted policy in the `fit` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub seed: u64,
    pub kind: PolicyKind,
    pub lambda: f64,
    pub theta: Vec<f64>,
    pub worst_case_value: f64,
    pub outer_iters: usize,
    pub converged: bool,
}

/// Output of `fit`: per-(Γ, seed) policies plus shared metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub method: ScoreMethod,
    pub p_sel: f64,
    pub policies: Vec<GammaFit>,
}

/// Fits one policy per (Γ, seed) pair. The Γ = 1 entry doubles as the
/// baseline method.
pub fn cmd_fit(run: &RunConfig) -> Result<FitOutput, CliError> {
    let grid = run.effective_grid()?;
    if run.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let cfg = run.mmccp_config();

    let mut contexts = Vec::new();
    for &seed in &run.seeds {
        contexts.push((seed, build_context(run, seed)?));
    }

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for si in 0..contexts.len() {
        for gi in 0..grid.len() {
            cells.push((si, gi));
        }
    }
    let fits: Result<Vec<GammaFit>, CliError> = cells
        .par_iter()
        .map(|&(si, gi)| {
            let (seed, ctx) = &contexts[si];
            let gamma = grid[gi];
            let result = fit_at_gamma(ctx, gamma, &cfg, *seed)?;
            Ok(GammaFit {
                gamma,
                seed: *seed,
                kind: ctx.spec.kind,
                lambda: ctx.spec.lambda,
                theta: result.theta.theta.clone(),
                worst_case_value: result.final_value(),
                outer_iters: result.outer_iters,
                converged: result.converged,
            })
        })
        .collect();

    Ok(FitOutput {
        method: run.method,
        p_sel: contexts[0].1.p_sel,
        policies: fits?,
    })
}

/// One row of the sweep output.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub method: ScoreMethod,
    pub seed: u64,
    pub regret_gen: f64,
    pub regret_base: f64,
    pub improvement: f64,
}

/// Regret improvement of the worst-case policies over the Γ = 1 baseline on
/// fresh target draws, per (Γ, seed) cell. Requires simulated data (the
/// oracle target population is needed to evaluate regret).
pub fn cmd_sweep(run: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    if run.csv.is_some() {
        return Err(CliError::Usage(
            "sweep requires simulated data; regret needs the oracle target population".into(),
        ));
    }
    let grid = run.effective_grid()?;
    if run.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let cfg = run.mmccp_config();

    let mut contexts = Vec::new();
    for &seed in &run.seeds {
        contexts.push((seed, build_context(run, seed)?));
    }

    // Baselines (Γ = 1) per seed, then all (seed, γ) cells in parallel.
    let baselines: Result<Vec<MmccpResult>, CliError> = contexts
        .par_iter()
        .map(|(seed, ctx)| fit_at_gamma(ctx, 1.0, &cfg, *seed))
        .collect();
    let baselines = baselines?;

    let base_regrets: Vec<f64> = contexts
        .iter()
        .zip(&baselines)
        .map(|((_, ctx), base)| {
            let target = ctx.target.as_ref().expect("simulated source");
            let spec = ctx.spec;
            let theta = base.theta.theta.clone();
            policy_regret(|x| policy_prob(&spec, &theta, x), target)
        })
        .collect();

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for si in 0..contexts.len() {
        for gi in 0..grid.len() {
            cells.push((si, gi));
        }
    }

    let rows: Result<Vec<SweepRow>, CliError> = cells
        .par_iter()
        .map(|&(si, gi)| {
            let (seed, ctx) = &contexts[si];
            let gamma = grid[gi];
            let result = if gamma == 1.0 {
                baselines[si].clone()
            } else {
                fit_at_gamma(ctx, gamma, &cfg, *seed)?
            };
            let target = ctx.target.as_ref().expect("simulated source");
            let spec = ctx.spec;
            let theta = result.theta.theta.clone();
            let regret_gen = policy_regret(|x| policy_prob(&spec, &theta, x), target);
            let regret_base = base_regrets[si];
            let improvement = if regret_base == 0.0 {
                0.0
            } else {
                (regret_base - regret_gen) / regret_base
            };
            Ok(SweepRow {
                gamma,
                method: run.method,
                seed: *seed,
                regret_gen,
                regret_base,
                improvement,
            })
        })
        .collect();
    rows
}

/// One row of the treated-fraction report.
#[derive(Debug, Clone, Serialize)]
pub struct TreatedRow {
    pub gamma: f64,
    pub pct_treated: f64,
}

/// Percentage of dataset rows with π(X) > 0.5 under the policy fitted at
/// each Γ (first configured seed).
pub fn cmd_treated_report(run: &RunConfig) -> Result<Vec<TreatedRow>, CliError> {
    let grid = run.effective_grid()?;
    let seed = *run
        .seeds
        .first()
        .ok_or_else(|| CliError::Usage("at least one seed is required".into()))?;
    let cfg = run.mmccp_config();
    let ctx = build_context(run, seed)?;

    let rows: Result<Vec<TreatedRow>, CliError> = grid
        .par_iter()
        .map(|&gamma| {
            let result = fit_at_gamma(&ctx, gamma, &cfg, seed)?;
            let theta = &result.theta.theta;
            let treated = (0..ctx.data.n())
                .filter(|&i| policy_prob(&ctx.spec, theta, ctx.data.row(i)) > 0.5)
                .count();
            Ok(TreatedRow {
                gamma,
                pct_treated: 100.0 * treated as f64 / ctx.data.n() as f64,
            })
        })
        .collect();
    rows
}

/// Reads one named column from a CSV file with a header.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Usage(format!("missing required column `{column}`")))?;
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Usage(e.to_string()))?;
        let v: f64 = record[idx].trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "row {}, column `{column}`: cannot parse `{}` as a number",
                line + 1,
                &record[idx]
            ))
        })?;
        values.push(v);
    }
    Ok(values)
}

/// Output of the `calibrate` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateOutput {
    pub p_sel: f64,
    pub gamma: f64,
}

/// Calibrates `(Γ, P(S=1))` from one shared covariate column of a training
/// CSV and a target-population CSV.
pub fn cmd_calibrate(
    train_path: &Path,
    target_path: &Path,
    column: &str,
    eta: f64,
) -> Result<CalibrateOutput, CliError> {
    let train_col = read_column(train_path, column)?;
    let target_col = read_column(target_path, column)?;
    let opts = CalibrationOptions {
        eta,
        ..CalibrationOptions::default()
    };
    let result = calibrate(&train_col, &target_col, &opts)?;
    Ok(CalibrateOutput {
        p_sel: result.p_sel,
        gamma: result.gamma,
    })
}

/// Serializes sweep rows as CSV.
pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma,method,seed,regret_gen,regret_base,improvement\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.gamma, r.method, r.seed, r.regret_gen, r.regret_base, r.improvement
        ));
    }
    out
}

/// Serializes treated-report rows as CSV.
pub fn treated_rows_to_csv(rows: &[TreatedRow]) -> String {
    let mut out = String::from("gamma,pct_treated\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.gamma, r.pct_treated));
    }
    out
}

/// Serializes fit results as CSV (per-Γ in-sample worst-case values).
pub fn fit_report_to_csv(fit: &FitOutput) -> String {
    let mut out = String::from("gamma,seed,method,worst_case_value,outer_iters,converged\n");
    for p in &fit.policies {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.gamma, p.seed, fit.method, p.worst_case_value, p.outer_iters, p.converged
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psel_choice_parses() {
        assert_eq!(
            PselChoice::from_str("0.35").unwrap(),
            PselChoice::Fixed(0.35)
        );
        assert_eq!(
            PselChoice::from_str("calibrate").unwrap(),
            PselChoice::Calibrate
        );
        assert!(PselChoice::from_str("auto").is_err());
    }

    #[test]
    fn psel_choice_json_round_trip() {
        let fixed: PselChoice = serde_json::from_str("0.25").unwrap();
        assert_eq!(fixed, PselChoice::Fixed(0.25));
        let cal: PselChoice = serde_json::from_str("\"calibrate\"").unwrap();
        assert_eq!(cal, PselChoice::Calibrate);
        assert_eq!(serde_json::to_string(&cal).unwrap(), "\"calibrate\"");
        assert!(serde_json::from_str::<PselChoice>("\"auto\"").is_err());
    }

    #[test]
    fn run_config_defaults_match_grid() {
        let run = RunConfig::default();
        assert_eq!(run.gamma_grid.len(), 14);
        assert_eq!(run.gamma_grid[0], 1.0);
        assert_eq!(*run.gamma_grid.last().unwrap(), 10.0);
        assert_eq!(run.n_train, 2000);
        assert_eq!(run.n_target, 100_000);
    }

    #[test]
    fn partial_config_json_fills_defaults() {
        let run: RunConfig =
            serde_json::from_str(r#"{"method":"dm","gamma_grid":[1.0,2.0],"p_sel":0.4}"#)
                .unwrap();
        assert_eq!(run.method, ScoreMethod::Dm);
        assert_eq!(run.gamma_grid, vec![1.0, 2.0]);
        assert_eq!(run.p_sel, PselChoice::Fixed(0.4));
        assert_eq!(run.restarts, 5);
    }

    #[test]
    fn grid_validation_rejects_bad_gamma() {
        let run = RunConfig {
            gamma_grid: vec![0.5],
            ..RunConfig::default()
        };
        assert!(matches!(run.effective_grid(), Err(CliError::Usage(_))));
    }

    #[test]
    fn generalize_false_forces_baseline_grid() {
        let run = RunConfig {
            generalize: false,
            ..RunConfig::default()
        };
        assert_eq!(run.effective_grid().unwrap(), vec![1.0]);
    }
}
