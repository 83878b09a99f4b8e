//! TOML run configuration with four sections and `section.key=value`
//! overrides from the command line.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sodsim::baselines::{PgConfig, StepSize};
use sodsim::datagen::Example;
use sodsim::operators::SparsityLevel;
use sodsim::solver::SodSimConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Input dataset for `fit` and `gridmin`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Test dataset for `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
    pub p: usize,
    pub n_pos: usize,
    pub n_unl: usize,
    pub rho: f64,
    /// Lower-bound construction used by `gridmin` without an input file.
    pub example: u8,
    pub n: usize,
    pub epsilon: f64,
    /// Noise level; defaults to the chosen example's value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd2: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            input: None,
            test: None,
            p: 100,
            n_pos: 400,
            n_unl: 400,
            rho: 0.2,
            example: 1,
            n: 400,
            epsilon: 0.1,
            sigma: None,
            sd1: None,
            sd2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SodSimSection {
    pub s: usize,
    pub eta: f64,
    pub max_iter: usize,
    pub param_tol: f64,
}

impl Default for SodSimSection {
    fn default() -> Self {
        Self {
            s: 10,
            eta: SodSimConfig::DEFAULT_ETA,
            max_iter: SodSimConfig::DEFAULT_MAX_ITER,
            param_tol: SodSimConfig::DEFAULT_PARAM_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselinesSection {
    pub folds: usize,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for BaselinesSection {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_count: 100,
            lambda_ratio: 1e-3,
            tol: 1e-5,
            max_iter: 10_000,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub reps: usize,
    pub ps: Vec<usize>,
    pub ns: Vec<usize>,
    pub examples: Vec<u8>,
    pub increment: f64,
    pub threshold: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            reps: 100,
            ps: vec![100, 400, 800, 1600],
            ns: vec![100, 150, 200, 300, 400, 600, 800, 1200],
            examples: vec![1, 2],
            increment: 0.001,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub sodsim: SodSimSection,
    pub baselines: BaselinesSection,
    pub experiment: ExperimentSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn from_toml_error(path: &str, text: &str, e: toml::de::Error) -> CliError {
    let message = e.message().to_string();
    if let Some(key) = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
    {
        let line = e.span().map_or(0, |s| line_of(text, s.start));
        return CliError::Parse {
            path: path.to_string(),
            line,
            message: format!("unknown key `{key}`"),
        };
    }
    CliError::Parse {
        path: path.to_string(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message,
    }
}

/// Parses `section.key=value`. The value is read as a TOML value, falling
/// back to a bare string.
pub fn parse_override(spec: &str) -> CliResult<(String, String, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Usage(format!("override key `{key}` must be section.key")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((section.to_string(), field.to_string(), value))
}

const SECTIONS: [&str; 4] = ["data", "sodsim", "baselines", "experiment"];

/// Reads `path` (if any), applies `overrides` in order, and validates.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> CliResult<Config> {
    let (label, text) = match path {
        Some(p) => (
            p.display().to_string(),
            std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        ),
        None => ("<defaults>".to_string(), String::new()),
    };
    // typed pass over the raw text so errors carry line numbers
    toml::from_str::<Config>(&text).map_err(|e| from_toml_error(&label, &text, e))?;

    let mut table: toml::Table = toml::from_str(&text).map_err(|e| from_toml_error(&label, &text, e))?;
    for spec in overrides {
        let (section, field, value) = parse_override(spec)?;
        if !SECTIONS.contains(&section.as_str()) {
            return Err(CliError::UnknownKey(format!("{section}.{field}")));
        }
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(field, value);
            }
            _ => return Err(CliError::Usage(format!("`{section}` is not a section"))),
        }
    }
    let config: Config = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| {
            let message = e.message().to_string();
            match message
                .strip_prefix("unknown field `")
                .and_then(|rest| rest.split('`').next())
            {
                Some(key) => CliError::UnknownKey(key.to_string()),
                None => CliError::Usage(format!("invalid override: {message}")),
            }
        })?;
    config.validate()?;
    Ok(config)
}

fn range(key: &str, ok: bool, reason: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::RangeViolation {
            key: key.to_string(),
            reason: reason.to_string(),
        })
    }
}

impl Config {
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        range("data.p", d.p >= 1, "must be at least 1")?;
        range("data.n_pos", d.n_pos >= 1, "must be at least 1")?;
        range("data.n_unl", d.n_unl >= 1, "must be at least 1")?;
        range("data.rho", d.rho.abs() < 1.0, "must lie in (-1, 1)")?;
        range("data.example", matches!(d.example, 1 | 2), "must be 1 or 2")?;
        range("data.n", d.n >= 2, "must be at least 2")?;
        range("data.epsilon", d.epsilon > 0.0, "must be positive")?;
        range(
            "data.sigma",
            d.sigma.is_none_or(|s| s >= 0.0),
            "must be non-negative",
        )?;
        range("data.sd1", d.sd1.is_none_or(|s| s > 0.0), "must be positive")?;
        range("data.sd2", d.sd2.is_none_or(|s| s > 0.0), "must be positive")?;

        let s = &self.sodsim;
        range("sodsim.s", s.s >= 1, "must be at least 1")?;
        range("sodsim.eta", s.eta > 0.0 && s.eta.is_finite(), "must be positive")?;
        range("sodsim.max_iter", s.max_iter >= 1, "must be at least 1")?;
        range("sodsim.param_tol", s.param_tol > 0.0, "must be positive")?;

        let b = &self.baselines;
        range("baselines.folds", b.folds >= 2, "must be at least 2")?;
        range(
            "baselines.lambda_count",
            b.lambda_count >= 2,
            "must be at least 2",
        )?;
        range(
            "baselines.lambda_ratio",
            b.lambda_ratio > 0.0 && b.lambda_ratio < 1.0,
            "must lie in (0, 1)",
        )?;
        range("baselines.tol", b.tol > 0.0, "must be positive")?;
        range("baselines.max_iter", b.max_iter >= 1, "must be at least 1")?;

        let e = &self.experiment;
        range("experiment.reps", e.reps >= 1, "must be at least 1")?;
        range(
            "experiment.ps",
            !e.ps.is_empty() && e.ps.iter().all(|&p| p >= 2),
            "needs values ≥ 2",
        )?;
        range(
            "experiment.ns",
            e.ns.iter().all(|&n| n >= 2),
            "values must be at least 2",
        )?;
        range(
            "experiment.examples",
            !e.examples.is_empty() && e.examples.iter().all(|x| matches!(x, 1 | 2)),
            "values must be 1 or 2",
        )?;
        range("experiment.increment", e.increment > 0.0, "must be positive")?;
        range("experiment.threshold", e.threshold.is_finite(), "must be finite")?;
        Ok(())
    }

    pub fn sodsim_config(&self) -> CliResult<SodSimConfig> {
        let s = SparsityLevel::new(self.sodsim.s)?;
        Ok(SodSimConfig {
            eta: self.sodsim.eta,
            max_iter: self.sodsim.max_iter,
            param_tol: self.sodsim.param_tol,
            ..SodSimConfig::new(s)
        })
    }

    pub fn logistic_config(&self) -> PgConfig {
        PgConfig {
            step: StepSize::Auto,
            tol: self.baselines.tol,
            max_iter: self.baselines.max_iter,
            standardize: self.baselines.standardize,
        }
    }

    pub fn example(&self) -> Example {
        if self.data.example == 2 {
            Example::Two
        } else {
            Example::One
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
