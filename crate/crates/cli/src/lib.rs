//! Subcommands of the `nehari` binary.
//!
//! Every subcommand reads one configuration file, writes its artifacts to
//! an output directory together with the fully materialised configuration
//! (`config.toml`), and reports failure as a JSON error object.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use nehari_core::energy::integral_triple;
use nehari_core::fibering::classify_and_roots;
use nehari_core::grid::format_field;
use nehari_core::solver::{
    default_initializer, lambda_sweep, solve_dual, sweep_to_csv, BranchOutcome, SolutionReport,
};
use nehari_core::thresholds::compute_thresholds;
use nehari_core::verify::{run_all, SuiteReport, SuiteSizes};
use nehari_core::{FiberingGeometry, IntegralTriple, NehariClass, Params, Thresholds, Weights};
use serde::Serialize;

use crate::config::{parse_config, LambdaChoice, RunConfig, SweepChoice};

pub const SCHEMA: u32 = 1;

/// Machine-readable failure of a subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub message: String,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn config(key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            kind: "config",
            key: key.map(str::to_string),
            message: message.into(),
            exit_code: 1,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: "io",
            key: None,
            message: message.into(),
            exit_code: 1,
        }
    }

    /// Outputs were written but the run did not fully succeed.
    fn incomplete(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            key: None,
            message: message.into(),
            exit_code: 2,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            schema: u32,
            error: &'a CliError,
        }
        serde_json::to_string_pretty(&Wrapper {
            schema: SCHEMA,
            error: self,
        })
        .expect("error serialises")
    }
}

impl From<nehari_core::Error> for CliError {
    fn from(e: nehari_core::Error) -> Self {
        use nehari_core::Error as E;
        let (kind, key) = match &e {
            E::Parameter { name, .. } => ("parameter", Some(name.to_string())),
            E::DegenerateWeights(_) => ("degenerate_weights", None),
            E::Io(_) => ("io", None),
            E::Format(_) => ("format", None),
            _ => ("numerical", None),
        };
        Self {
            kind,
            key,
            message: e.to_string(),
            exit_code: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Solve,
    Sweep,
    Classify,
    Constants,
    Verify,
}

/// Command-line inputs shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialise");
    s.push('\n');
    s
}

/// Configuration plus everything derived from it before a subcommand runs.
struct Prepared {
    config: RunConfig,
    weights: Weights,
    params: Params,
    thresholds: Option<Thresholds>,
}

fn prepare(config: RunConfig) -> Result<Prepared, CliError> {
    let weights = config.weights()?;
    let exponents = config.exponents();
    let seed = config.options.seed;
    let (params, thresholds) = match config.lambda {
        LambdaChoice::Fraction(f) => {
            let th = compute_thresholds(&weights, &exponents, seed)?;
            (exponents.with_lambda(f * th.lambda1)?, Some(th))
        }
        LambdaChoice::Absolute(l) => (
            exponents.with_lambda(l)?,
            compute_thresholds(&weights, &exponents, seed).ok(),
        ),
    };
    Ok(Prepared {
        config,
        weights,
        params,
        thresholds,
    })
}

/// Runs one subcommand. On success returns the paths written.
pub fn run(command: Subcommand, inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let mut config = parse_config(&inv.config)?;
    if let Some(seed) = inv.seed {
        config.options.seed = seed;
    }
    let out = inv
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| {
            CliError::config(
                Some("out_dir"),
                "no output directory: pass --out or set out_dir",
            )
        })?;
    fs::create_dir_all(&out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))?;
    write(&out, "config.toml", &config.echo())?;

    let prepared = prepare(config)?;
    let mut written = vec![out.join("config.toml")];
    let outcome = match command {
        Subcommand::Solve => solve(&prepared, &out, &mut written),
        Subcommand::Sweep => sweep(&prepared, &out, &mut written),
        Subcommand::Classify => classify(&prepared, &out, &mut written),
        Subcommand::Constants => constants(&prepared, &out, &mut written),
        Subcommand::Verify => verify(&prepared, &out, &mut written),
    };
    if let Err(e) = &outcome {
        // Best effort: the error also goes to stderr.
        let _ = write(&out, "error.json", &(e.to_json() + "\n"));
    }
    outcome.map(|()| written)
}

#[derive(Serialize)]
struct BranchSummary<'a> {
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a SolutionReport>,
}

impl<'a> From<&'a BranchOutcome> for BranchSummary<'a> {
    fn from(o: &'a BranchOutcome) -> Self {
        match o {
            BranchOutcome::Solved(r) => Self {
                converged: r.converged,
                error: None,
                report: Some(r),
            },
            BranchOutcome::Failed { error, .. } => Self {
                converged: false,
                error: Some(error),
                report: None,
            },
        }
    }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    schema: u32,
    dimension: usize,
    n: usize,
    lambda: f64,
    lambda1: Option<f64>,
    delta1: Option<f64>,
    complete: bool,
    #[serde(rename = "J_plus")]
    j_plus: Option<f64>,
    #[serde(rename = "J_minus")]
    j_minus: Option<f64>,
    separation: Option<f64>,
    multiplicity: [usize; 2],
    plus: BranchSummary<'a>,
    minus: BranchSummary<'a>,
    warnings: &'a [String],
}

fn solve(p: &Prepared, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let lambda1 = p.thresholds.map(|t| t.lambda1);
    let dual = solve_dual(&p.weights, &p.params, &p.config.options, lambda1);
    let summary = SolveSummary {
        schema: SCHEMA,
        dimension: p.config.dimension,
        n: p.config.n,
        lambda: p.params.lambda,
        lambda1,
        delta1: p.thresholds.map(|t| t.delta1(p.params.lambda)),
        complete: dual.complete,
        j_plus: dual.plus.report().map(|r| r.j_value),
        j_minus: dual.minus.report().map(|r| r.j_value),
        separation: dual.separation,
        multiplicity: dual.multiplicity,
        plus: (&dual.plus).into(),
        minus: (&dual.minus).into(),
        warnings: &dual.warnings,
    };
    write(out, "solution.json", &to_json(&summary))?;
    written.push(out.join("solution.json"));
    for (tag, outcome) in [("plus", &dual.plus), ("minus", &dual.minus)] {
        if let Some(r) = outcome.report() {
            for (c, field) in [("u", &r.state.u), ("v", &r.state.v)] {
                let name = format!("{c}_{tag}.txt");
                write(out, &name, &format_field(field))?;
                written.push(out.join(name));
            }
        }
    }
    if dual.complete {
        Ok(())
    } else {
        Err(CliError::incomplete(
            "partial",
            format!("dual solve incomplete: {}", dual.warnings.join("; ")),
        ))
    }
}

fn sweep(p: &Prepared, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let lambda1 = p.thresholds.map(|t| t.lambda1);
    let lambdas = match &p.config.sweep {
        SweepChoice::Absolute(v) => v.clone(),
        SweepChoice::Fractions(f) => {
            let l1 = lambda1.ok_or_else(|| {
                CliError::config(
                    Some("sweep_fractions"),
                    "λ₁ is unavailable for these weights",
                )
            })?;
            f.iter().map(|x| x * l1).collect()
        }
    };
    let exponents = p.config.exponents();
    let rows = lambda_sweep(&p.weights, &exponents, &lambdas, &p.config.options, lambda1)?;
    write(out, "sweep.csv", &sweep_to_csv(&rows))?;
    written.push(out.join("sweep.csv"));
    let failed = rows
        .iter()
        .filter(|r| !(r.conv_plus && r.conv_minus))
        .count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::incomplete(
            "partial",
            format!(
                "{failed} of {} rows did not converge on both branches",
                rows.len()
            ),
        ))
    }
}

#[derive(Serialize)]
struct InitialGeometry {
    triple: IntegralTriple,
    geometry: FiberingGeometry,
}

#[derive(Serialize)]
struct ClassifyOutput {
    schema: u32,
    lambda: f64,
    plus_initializer: InitialGeometry,
    minus_initializer: InitialGeometry,
}

fn classify(p: &Prepared, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let geometry = |branch| -> Result<InitialGeometry, CliError> {
        let init = default_initializer(&p.weights, branch);
        let triple = integral_triple(&p.weights, &p.params, &init);
        Ok(InitialGeometry {
            triple,
            geometry: classify_and_roots(&triple, &p.params)?,
        })
    };
    let output = ClassifyOutput {
        schema: SCHEMA,
        lambda: p.params.lambda,
        plus_initializer: geometry(NehariClass::Plus)?,
        minus_initializer: geometry(NehariClass::Minus)?,
    };
    write(out, "classify.json", &to_json(&output))?;
    written.push(out.join("classify.json"));
    Ok(())
}

#[derive(Serialize)]
struct ConstantsOutput {
    schema: u32,
    #[serde(flatten)]
    thresholds: Thresholds,
    lambda: f64,
    delta1: f64,
}

fn constants(p: &Prepared, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let thresholds = match p.thresholds {
        Some(t) => t,
        None => compute_thresholds(&p.weights, &p.config.exponents(), p.config.options.seed)?,
    };
    let output = ConstantsOutput {
        schema: SCHEMA,
        thresholds,
        lambda: p.params.lambda,
        delta1: thresholds.delta1(p.params.lambda),
    };
    write(out, "constants.json", &to_json(&output))?;
    written.push(out.join("constants.json"));
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    schema: u32,
    failed_invariants: usize,
    suites: &'a [SuiteReport],
}

fn verify(p: &Prepared, out: &Path, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let report = run_all(
        &p.weights,
        &p.params,
        p.config.options.seed,
        SuiteSizes::default(),
    )?;
    let failed = report.failed_invariants();
    let output = VerifyOutput {
        schema: SCHEMA,
        failed_invariants: failed,
        suites: &report.suites,
    };
    write(out, "verify.json", &to_json(&output))?;
    written.push(out.join("verify.json"));
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError {
            kind: "verify_failed",
            key: None,
            message: format!("{failed} invariants failed"),
            exit_code: 1,
        })
    }
}
