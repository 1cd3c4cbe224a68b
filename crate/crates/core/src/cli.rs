//! Command-line front end: `verify`, `sweep`, `fit`, `classical`, `witness`.
//!
//! Every command reads an optional JSON config (unknown keys rejected),
//! writes JSON or CSV to `--out` or stdout, and maps failures to fixed exit
//! codes. Angles in configs are in units of pi.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classical::{
    feasibility_search, lemma_suite, theorem_suite, ClassicalError, FeasibilityResult,
    IndependenceConstraint, LemmaSuiteReport, SamplerConfig, TheoremSuiteReport,
};
use crate::fit::{evaluate_targets, fit, Evaluation, FitError, FitProblem};
use crate::models::{
    destructive_interference, evaluate_report, solve_independence_a1, sweep_r, uniform_grid,
    witness_report, CausalOrderings, IndependenceRoots, ModelSpec, ProbabilityReport, SweepRow,
    ThreeCauseParams, TwoCauseParams, WitnessReport,
};
use crate::quantum::{complement_diagnostics, ComplementDiagnostics};
use crate::targets::TargetTable;

pub const EXIT_OK: i32 = 0;
/// A hard check or ordering requirement did not hold; output is still written.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_SAMPLER: i32 = 5;

pub const CSV_HEADER: &str = "r,p_d,p_d_given_a,p_d_given_b,p_d_given_c,p_d_given_joint,p_joint_given_d,p_joint_given_not_d,interference_a";

#[derive(Debug, Parser)]
#[command(
    name = "qlcause",
    version,
    about = "Quantum-like interference of causes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "QLCAUSE_SEED")]
    pub seed: Option<u64>,
    /// Evaluation budget for searches.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evaluate a model point: report, orderings, residuals against targets.
    Verify,
    /// Sweep `r` and write the report curves as CSV.
    Sweep,
    /// Fit model parameters to target probabilities.
    Fit,
    /// Run the classical lemma, theorem and feasibility suites.
    Classical,
    /// Evaluate the 2-dim witness against the classical lemma.
    Witness,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
        }
    }
}

/// Rendered output and the exit code to report after writing it.
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = match cli.command {
        Command::Verify => cmd_verify(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Fit => cmd_fit(cli),
        Command::Classical => cmd_classical(cli),
        Command::Witness => cmd_witness(cli),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("qlcause: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = emit(cli.out.as_deref(), &outcome.text) {
        eprintln!("qlcause: {e}");
        return e.exit_code();
    }
    outcome.code
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Replaces a string-valued `key` with the JSON document at that path,
/// resolved relative to `base`.
fn inline_file(doc: &mut Value, key: &str, base: &Path) -> Result<(), CliError> {
    if let Some(Value::String(rel)) = doc.get(key) {
        let path = base.join(rel);
        let loaded = read_json(&path)?;
        doc[key] = loaded;
    }
    Ok(())
}

fn config_dir(cli: &Cli) -> PathBuf {
    cli.config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// Loads the config (or `default` when none is given) with targets inlined.
fn load_config<T: serde::de::DeserializeOwned>(cli: &Cli, default: Value) -> Result<T, CliError> {
    let mut doc = match &cli.config {
        Some(path) => read_json(path)?,
        None => default,
    };
    inline_file(&mut doc, "targets", &config_dir(cli))?;
    if let Some(Value::Array(runs)) = doc.get_mut("feasibility") {
        for run in runs {
            inline_file(run, "targets", &config_dir(cli))?;
        }
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyConfig {
    model: ModelSpec,
    /// Further `r` values to evaluate besides the one in `model`.
    #[serde(default)]
    extra_r: Vec<f64>,
    /// Defaults to the survey table for three-cause models.
    #[serde(default)]
    targets: Option<TargetTable>,
}

#[derive(Debug, Serialize)]
struct VerifyPoint {
    r: f64,
    report: ProbabilityReport,
    orderings: CausalOrderings,
    destructive_interference: bool,
    /// `p(joint | not d)` by the sequential rule versus the trace shortcut.
    complement: ComplementDiagnostics,
    /// Frobenius norm of `[joint, D]`.
    joint_target_commutator: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<Evaluation>,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    model: ModelSpec,
    roots: Option<IndependenceRoots>,
    a1: f64,
    points: Vec<VerifyPoint>,
    /// Orderings are required for two-cause models only.
    orderings_required: bool,
    ok: bool,
}

fn cmd_verify(cli: &Cli) -> Result<Outcome, CliError> {
    let default = serde_json::json!({ "model": ModelSpec::TwoCause(TwoCauseParams::reference()) });
    let cfg: VerifyConfig = load_config(cli, default)?;
    let targets = match (&cfg.targets, &cfg.model) {
        (Some(t), _) => Some(t.clone()),
        (None, ModelSpec::ThreeCause(_)) => Some(TargetTable::survey()),
        (None, ModelSpec::TwoCause(_)) => None,
    };
    let six = cfg.model.six_dim();
    let roots = solve_independence_a1(six.a3, six.a4, six.a5).ok();
    let a1 = six
        .resolve_a1()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut points = Vec::new();
    let rs = std::iter::once(six.r).chain(cfg.extra_r.iter().copied());
    for r in rs {
        let mut spec = cfg.model.clone();
        spec.six_dim_mut().r = r;
        let model = spec.build().map_err(|e| CliError::Config(e.to_string()))?;
        let report = evaluate_report(&model).map_err(|e| CliError::Config(e.to_string()))?;
        let joint = model.joint().map_err(|e| CliError::Config(e.to_string()))?;
        let complement = complement_diagnostics(&joint, model.d(), model.state())
            .map_err(|e| CliError::Config(e.to_string()))?;
        let joint_target_commutator = joint
            .commutator_norm(model.d())
            .map_err(|e| CliError::Config(e.to_string()))?;
        let residuals = targets
            .as_ref()
            .map(|t| evaluate_targets(&report, model.conditions().len(), t))
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))?;
        points.push(VerifyPoint {
            r,
            orderings: CausalOrderings::from_report(&report),
            destructive_interference: destructive_interference(&report),
            report,
            complement,
            joint_target_commutator,
            residuals,
        });
    }
    let orderings_required = matches!(cfg.model, ModelSpec::TwoCause(_));
    let ok = !orderings_required || points[0].orderings.all();
    let out = VerifyOutput {
        model: cfg.model,
        roots,
        a1,
        points,
        orderings_required,
        ok,
    };
    Ok(Outcome {
        text: to_json(&out),
        code: if ok { EXIT_OK } else { EXIT_CHECK_FAILED },
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum GridSpec {
    /// `steps + 1` points `k / steps`.
    Steps(usize),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    model: ModelSpec,
    grid: GridSpec,
    #[serde(default)]
    rederive_a1: bool,
}

fn cmd_sweep(cli: &Cli) -> Result<Outcome, CliError> {
    let default = serde_json::json!({
        "model": ModelSpec::TwoCause(TwoCauseParams::reference()),
        "grid": { "steps": 100 },
    });
    let cfg: SweepConfig = load_config(cli, default)?;
    let grid = match cfg.grid {
        GridSpec::Steps(0) => return Err(CliError::Config("grid needs at least one step".into())),
        GridSpec::Steps(n) => uniform_grid(n),
        GridSpec::Values(v) if v.is_empty() => {
            return Err(CliError::Config("grid has no values".into()))
        }
        GridSpec::Values(v) => v,
    };
    let rows =
        sweep_r(&cfg.model, &grid, cfg.rederive_a1).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Outcome {
        text: render_csv(&rows),
        code: EXIT_OK,
    })
}

/// Decimal rendering with 12 significant digits, trailing zeros trimmed.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn csv_fields(r: f64, report: Option<&ProbabilityReport>) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(format_sig12).unwrap_or_default();
    let mut fields = vec![format_sig12(r)];
    match report {
        Some(p) => fields.extend([
            format_sig12(p.p_d),
            opt(p.p_d_given_a),
            opt(p.p_d_given_b),
            opt(p.p_d_given_c),
            opt(p.p_d_given_joint),
            opt(p.p_joint_given_d),
            opt(p.p_joint_given_not_d),
            format_sig12(p.interference_a),
        ]),
        None => fields.extend(std::iter::repeat_n(String::new(), 8)),
    }
    fields
}

pub fn render_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", csv_fields(row.r, row.report.as_ref()).join(","));
    }
    out
}

/// Parses sweep CSV back into rows of optional values (9 columns each).
pub fn parse_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>, String> {
    let mut lines = text.split('\n');
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected header".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("row {i}: {} fields", fields.len()));
        }
        let row = fields
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| format!("row {i}: {e}"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_fit(cli: &Cli) -> Result<Outcome, CliError> {
    if cli.config.is_none() {
        return Err(CliError::Config("fit needs --config".into()));
    }
    let mut problem: FitProblem = load_config(cli, Value::Null)?;
    if let Some(seed) = cli.seed {
        problem.seed = seed;
    }
    if let Some(budget) = cli.budget {
        problem.budget = budget;
    }
    let result = fit(&problem).map_err(|e| match e {
        FitError::Infeasible(_) => CliError::Infeasible(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    Ok(Outcome {
        text: to_json(&result),
        code: if result.ordering {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        },
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeasibilityRun {
    name: String,
    targets: TargetTable,
    #[serde(default)]
    constraints: Vec<IndependenceConstraint>,
    #[serde(default = "default_feasibility_budget")]
    budget: u64,
}

fn default_feasibility_budget() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassicalConfig {
    #[serde(default = "default_trials")]
    lemma_trials: usize,
    #[serde(default = "default_trials")]
    theorem_trials: usize,
    #[serde(default)]
    sampler: SamplerConfig,
    #[serde(default)]
    feasibility: Vec<FeasibilityRun>,
    #[serde(default)]
    seed: u64,
}

fn default_trials() -> usize {
    100_000
}

#[derive(Debug, Serialize)]
struct FeasibilityOutput {
    name: String,
    constraints: Vec<IndependenceConstraint>,
    budget: u64,
    result: FeasibilityResult,
}

#[derive(Debug, Serialize)]
struct ClassicalOutput {
    seed: u64,
    lemma: LemmaSuiteReport,
    theorem: TheoremSuiteReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampler_error: Option<String>,
    feasibility: Vec<FeasibilityOutput>,
    ok: bool,
}

fn cmd_classical(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg: ClassicalConfig = load_config(cli, serde_json::json!({}))?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let lemma = lemma_suite(seed, cfg.lemma_trials);
    let (theorem, sampler_error) = match theorem_suite(seed, cfg.theorem_trials, &cfg.sampler) {
        Ok(t) => (t, None),
        Err((_, e @ ClassicalError::Precondition(_))) => {
            return Err(CliError::Config(e.to_string()))
        }
        Err((partial, e)) => (partial, Some(e.to_string())),
    };
    let mut feasibility = Vec::new();
    if sampler_error.is_none() {
        for run in cfg.feasibility {
            let budget = cli.budget.unwrap_or(run.budget);
            let result = feasibility_search(&run.targets, &run.constraints, seed, budget)
                .map_err(|e| CliError::Config(format!("{}: {e}", run.name)))?;
            feasibility.push(FeasibilityOutput {
                name: run.name,
                constraints: run.constraints,
                budget,
                result,
            });
        }
    }
    let ok = lemma.counterexamples == 0
        && lemma.destructive_despite_joint_favoring_d == 0
        && theorem.counterexamples == 0
        && theorem.consequence_failures == 0
        && sampler_error.is_none();
    let code = if sampler_error.is_some() {
        EXIT_SAMPLER
    } else if ok {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    };
    let out = ClassicalOutput {
        seed,
        lemma,
        theorem,
        sampler_error,
        feasibility,
        ok,
    };
    Ok(Outcome {
        text: to_json(&out),
        code,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessConfig {
    c2: f64,
    w: f64,
}

#[derive(Debug, Serialize)]
struct WitnessOutput {
    #[serde(flatten)]
    report: WitnessReport,
    verdict: &'static str,
}

fn cmd_witness(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg: WitnessConfig = load_config(cli, serde_json::json!({ "c2": 0.4, "w": 0.1 }))?;
    let report = witness_report(cfg.c2, cfg.w).map_err(|e| CliError::Config(e.to_string()))?;
    let verdict = match (report.joint_lowers_d, report.joint_rarer_given_d) {
        (Some(_), Some(_)) if report.classical_lemma_violated => "classical Lemma violated",
        (Some(_), Some(_)) => "consistent with classical Lemma",
        _ => "undefined",
    };
    Ok(Outcome {
        text: to_json(&WitnessOutput { report, verdict }),
        code: EXIT_OK,
    })
}

/// The survey three-cause point as a verify config, at `r = 0.01` and `r = 0.5`.
pub fn fixed_three_cause_config() -> Value {
    serde_json::json!({
        "model": ModelSpec::ThreeCause(ThreeCauseParams::survey_point()),
        "extra_r": [0.5],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_rendering() {
        assert_eq!(format_sig12(0.5), "0.5");
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(-0.0), "0");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(0.12063537831225431), "0.120635378312");
        assert_eq!(format_sig12(0.008177522138702613), "0.0081775221387");
        assert_eq!(format_sig12(-0.15000000000000005), "-0.15");
        assert_eq!(format_sig12(1e-17), "0.00000000000000001");
    }

    #[test]
    fn csv_round_trip() {
        let spec = ModelSpec::TwoCause(TwoCauseParams::reference());
        let rows = sweep_r(&spec, &uniform_grid(20), false).unwrap();
        let text = render_csv(&rows);
        assert!(text.starts_with(CSV_HEADER));
        assert!(!text.contains('\r'));
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), 21);
        for (row, orig) in parsed.iter().zip(&rows) {
            assert_eq!(row[0], Some(orig.r));
            let rep = orig.report.as_ref().unwrap();
            assert!(row[4].is_none());
            assert!((row[1].unwrap() - rep.p_d).abs() <= 5e-12 * rep.p_d.max(1e-300) + 1e-300);
            let rerendered: Vec<String> = row
                .iter()
                .map(|v| v.map(format_sig12).unwrap_or_default())
                .collect();
            assert_eq!(rerendered, csv_fields(orig.r, Some(rep)));
        }
        assert_eq!(parsed[0][5], Some(0.5));
        assert_eq!(parsed[20][5], Some(0.5));
    }

    #[test]
    fn verify_config_rejects_unknown_keys() {
        let bad = serde_json::json!({
            "model": { "family": "two_cause", "r": 0.5, "theta": 0.4, "a3": 0.1, "a4": 0.1,
                       "a5": 0.1, "alpha1": 1.0, "colour": 3 }
        });
        assert!(serde_json::from_value::<VerifyConfig>(bad).is_err());
        let good = serde_json::json!({
            "model": { "family": "two_cause", "r": 0.5, "theta": 0.4, "a3": 0.1, "a4": 0.1,
                       "a5": 0.1, "alpha1": 1.0 }
        });
        assert!(serde_json::from_value::<VerifyConfig>(good).is_ok());
        assert!(serde_json::from_value::<VerifyConfig>(fixed_three_cause_config()).is_ok());
    }
}
