//! Flat TOML run configuration.

use std::path::{Path, PathBuf};

use nehari_core::energy::WeightSpec;
use nehari_core::solver::SolveOptions;
use nehari_core::{Grid, Params, Weights};
use serde::Serialize;
use toml::{Table, Value};

use crate::CliError;

/// How `λ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Absolute(f64),
    /// Multiple of the computed threshold `λ₁`.
    Fraction(f64),
}

/// Values to sweep over, in the same two flavours as [`LambdaChoice`].
#[derive(Debug, Clone, PartialEq)]
pub enum SweepChoice {
    Absolute(Vec<f64>),
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dimension: usize,
    pub n: usize,
    pub weight_a: WeightSpec,
    pub weight_b: WeightSpec,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: LambdaChoice,
    pub sweep: SweepChoice,
    pub options: SolveOptions,
    pub out_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "dimension",
    "n",
    "weight_a",
    "weight_b",
    "q",
    "alpha",
    "beta",
    "lambda",
    "lambda_fraction",
    "sweep_lambdas",
    "sweep_fractions",
    "max_outer_iterations",
    "step_size",
    "backtracking",
    "gradient_tolerance",
    "constraint_tolerance",
    "positivity",
    "restarts",
    "seed",
    "out_dir",
];

const DEFAULT_SWEEP: [f64; 3] = [0.1, 0.5, 0.9];

fn config_error(key: &str, message: impl Into<String>) -> CliError {
    CliError::config(Some(key), message)
}

fn float(t: &Table, key: &str) -> Result<Option<f64>, CliError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(*x)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(v) => Err(config_error(
            key,
            format!("expected a number, got {}", v.type_str()),
        )),
    }
}

fn int(t: &Table, key: &str) -> Result<Option<u64>, CliError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(v) => Err(config_error(
            key,
            format!("expected a non-negative integer, got {v}"),
        )),
    }
}

fn string<'a>(t: &'a Table, key: &str) -> Result<Option<&'a str>, CliError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(config_error(
            key,
            format!("expected a string, got {}", v.type_str()),
        )),
    }
}

fn floats(t: &Table, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    let Some(v) = t.get(key) else { return Ok(None) };
    let Value::Array(items) = v else {
        return Err(config_error(key, "expected an array of numbers"));
    };
    items
        .iter()
        .map(|x| match x {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(config_error(key, "expected an array of numbers")),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn required<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| config_error(key, "missing required key"))
}

fn weight(t: &Table, key: &str, base: &Path) -> Result<WeightSpec, CliError> {
    let raw = required(string(t, key)?, key)?;
    let spec: WeightSpec = raw.parse().map_err(|e| config_error(key, format!("{e}")))?;
    Ok(match spec {
        WeightSpec::File(p) => WeightSpec::File(absolute(base, &p, key)?),
        other => other,
    })
}

fn absolute(base: &Path, p: &Path, key: &str) -> Result<PathBuf, CliError> {
    std::path::absolute(base.join(p)).map_err(|e| config_error(key, e.to_string()))
}

fn positive(v: f64, key: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_error(
            key,
            format!("{v} must be positive and finite"),
        ))
    }
}

fn ascending_positive(values: Vec<f64>, key: &str) -> Result<Vec<f64>, CliError> {
    for &v in &values {
        positive(v, key)?;
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error(key, "values must be strictly ascending"));
    }
    Ok(values)
}

/// Reads and validates a configuration file. Relative weight-file paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config(None, e.message().to_string()))?;
    if let Some(unknown) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(config_error(unknown, "unknown key"));
    }

    let dimension = int(&table, "dimension")?.unwrap_or(1) as usize;
    let n = required(int(&table, "n")?, "n")? as usize;
    let grid = Grid::new(dimension, n).map_err(|e| {
        let key = if dimension == 1 || dimension == 2 {
            "n"
        } else {
            "dimension"
        };
        config_error(key, e.to_string())
    })?;

    let q = required(float(&table, "q")?, "q")?;
    let alpha = required(float(&table, "alpha")?, "alpha")?;
    let beta = required(float(&table, "beta")?, "beta")?;
    Params::exponents(q, alpha, beta).map_err(|e| match e {
        nehari_core::Error::Parameter { name, reason } => config_error(name, reason),
        other => CliError::config(None, other.to_string()),
    })?;

    let lambda = match (float(&table, "lambda")?, float(&table, "lambda_fraction")?) {
        (Some(_), Some(_)) => {
            return Err(config_error(
                "lambda_fraction",
                "set exactly one of `lambda` and `lambda_fraction`",
            ))
        }
        (Some(l), None) => LambdaChoice::Absolute(positive(l, "lambda")?),
        (None, Some(f)) => LambdaChoice::Fraction(positive(f, "lambda_fraction")?),
        (None, None) => {
            return Err(config_error(
                "lambda_fraction",
                "set exactly one of `lambda` and `lambda_fraction`",
            ))
        }
    };

    let sweep = match (
        floats(&table, "sweep_lambdas")?,
        floats(&table, "sweep_fractions")?,
    ) {
        (Some(_), Some(_)) => {
            return Err(config_error(
                "sweep_fractions",
                "set at most one of `sweep_lambdas` and `sweep_fractions`",
            ))
        }
        (Some(v), None) => SweepChoice::Absolute(ascending_positive(v, "sweep_lambdas")?),
        (None, Some(v)) => SweepChoice::Fractions(ascending_positive(v, "sweep_fractions")?),
        (None, None) => SweepChoice::Fractions(DEFAULT_SWEEP.to_vec()),
    };

    let d = SolveOptions::default();
    let options = SolveOptions {
        max_outer_iterations: int(&table, "max_outer_iterations")?
            .map_or(d.max_outer_iterations, |v| v as usize),
        step_size: float(&table, "step_size")?.unwrap_or(d.step_size),
        backtracking: float(&table, "backtracking")?.unwrap_or(d.backtracking),
        gradient_tolerance: float(&table, "gradient_tolerance")?.unwrap_or(d.gradient_tolerance),
        constraint_tolerance: float(&table, "constraint_tolerance")?
            .unwrap_or(d.constraint_tolerance),
        positivity: match table.get("positivity") {
            None => d.positivity,
            Some(Value::Boolean(b)) => *b,
            Some(_) => return Err(config_error("positivity", "expected true or false")),
        },
        seed: int(&table, "seed")?.unwrap_or(d.seed),
        restarts: int(&table, "restarts")?.map_or(d.restarts, |v| v as usize),
    };
    options.validate().map_err(|e| match e {
        nehari_core::Error::Parameter { name, reason } => config_error(name, reason),
        other => CliError::config(None, other.to_string()),
    })?;

    let weight_a = weight(&table, "weight_a", base)?;
    let weight_b = weight(&table, "weight_b", base)?;
    weight_a
        .sample(grid)
        .map_err(|e| config_error("weight_a", e.to_string()))?;
    weight_b
        .sample(grid)
        .map_err(|e| config_error("weight_b", e.to_string()))?;

    let out_dir = match string(&table, "out_dir")? {
        Some(s) => Some(absolute(base, Path::new(s), "out_dir")?),
        None => None,
    };

    Ok(RunConfig {
        dimension,
        n,
        weight_a,
        weight_b,
        q,
        alpha,
        beta,
        lambda,
        sweep,
        options,
        out_dir,
    })
}

#[derive(Serialize)]
struct Echo<'a> {
    dimension: usize,
    n: usize,
    weight_a: String,
    weight_b: String,
    q: f64,
    alpha: f64,
    beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_lambdas: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_fractions: Option<&'a [f64]>,
    max_outer_iterations: usize,
    step_size: f64,
    backtracking: f64,
    gradient_tolerance: f64,
    constraint_tolerance: f64,
    positivity: bool,
    restarts: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_dir: Option<String>,
}

impl RunConfig {
    /// The configuration with every default written out. Parsing the result
    /// gives back an equal `RunConfig`.
    pub fn echo(&self) -> String {
        let (lambda, lambda_fraction) = match self.lambda {
            LambdaChoice::Absolute(l) => (Some(l), None),
            LambdaChoice::Fraction(f) => (None, Some(f)),
        };
        let (sweep_lambdas, sweep_fractions) = match &self.sweep {
            SweepChoice::Absolute(v) => (Some(v.as_slice()), None),
            SweepChoice::Fractions(v) => (None, Some(v.as_slice())),
        };
        let o = &self.options;
        let echo = Echo {
            dimension: self.dimension,
            n: self.n,
            weight_a: self.weight_a.to_string(),
            weight_b: self.weight_b.to_string(),
            q: self.q,
            alpha: self.alpha,
            beta: self.beta,
            lambda,
            lambda_fraction,
            sweep_lambdas,
            sweep_fractions,
            max_outer_iterations: o.max_outer_iterations,
            step_size: o.step_size,
            backtracking: o.backtracking,
            gradient_tolerance: o.gradient_tolerance,
            constraint_tolerance: o.constraint_tolerance,
            positivity: o.positivity,
            restarts: o.restarts,
            seed: o.seed,
            out_dir: self.out_dir.as_ref().map(|p| p.display().to_string()),
        };
        toml::to_string(&echo).expect("flat config serialises")
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dimension, self.n).expect("validated at parse time")
    }

    pub fn exponents(&self) -> Params {
        Params::exponents(self.q, self.alpha, self.beta).expect("validated at parse time")
    }

    pub fn weights(&self) -> Result<Weights, CliError> {
        Weights::from_specs(self.grid(), &self.weight_a, &self.weight_b).map_err(CliError::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
n = 41
weight_a = "const:1"
weight_b = "const:1"
q = 1.5
alpha = 2
beta = 2
lambda_fraction = 0.5
"#;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config_str(text, Path::new("."))
    }

    fn key_of(text: &str) -> Option<String> {
        parse(text).unwrap_err().key
    }

    #[test]
    fn minimal_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.dimension, 1);
        assert_eq!(c.options, SolveOptions::default());
        assert_eq!(c.lambda, LambdaChoice::Fraction(0.5));
        assert_eq!(c.sweep, SweepChoice::Fractions(DEFAULT_SWEEP.to_vec()));
    }

    #[test]
    fn echo_round_trips() {
        let c = parse(MINIMAL).unwrap();
        let again = parse(&c.echo()).unwrap();
        assert_eq!(c, again);
        let text = MINIMAL.replace(
            "lambda_fraction = 0.5",
            "lambda = 0.7\nsweep_lambdas = [0.1, 0.2]\nout_dir = \"runs\"",
        );
        let c = parse(&text).unwrap();
        assert_eq!(c, parse(&c.echo()).unwrap());
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(
            key_of(&MINIMAL.replace("q = 1.5", "q = 2.5")).as_deref(),
            Some("q")
        );
        assert_eq!(
            key_of(&(MINIMAL.to_string() + "lambda = 1.0\n")).as_deref(),
            Some("lambda_fraction")
        );
        assert_eq!(
            key_of(&(MINIMAL.to_string() + "colour = 1\n")).as_deref(),
            Some("colour")
        );
        assert_eq!(
            key_of(&MINIMAL.replace("alpha = 2", "alpha = 0.5")).as_deref(),
            Some("alpha")
        );
        assert_eq!(
            key_of(&MINIMAL.replace("\"const:1\"\nweight_b", "\"nope\"\nweight_b")).as_deref(),
            Some("weight_a")
        );
        assert_eq!(
            key_of(&MINIMAL.replace("const:1\"\nq", "/no/such/file\"\nq")).as_deref(),
            Some("weight_b")
        );
        assert_eq!(key_of(&MINIMAL.replace("n = 41", "")).as_deref(), Some("n"));
        assert_eq!(
            key_of(&(MINIMAL.to_string() + "backtracking = 1.5\n")).as_deref(),
            Some("backtracking")
        );
        assert_eq!(
            key_of(&(MINIMAL.to_string() + "sweep_fractions = [0.5, 0.1]\n")).as_deref(),
            Some("sweep_fractions")
        );
    }
}
