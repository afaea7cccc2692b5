//! Experiment configuration file and flag overrides.

use std::path::{Path, PathBuf};

use kernel_sysid::checks::SuiteConfig;
use kernel_sysid::estimator::log_grid;
use kernel_sysid::{InputKind, InputParams, KernelSpec, LtiSystem, TimeDomain};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<GridSpec>,
    #[serde(default)]
    pub noise: NoiseBlock,
    #[serde(default)]
    pub estimate: EstimateBlock,
    #[serde(default)]
    pub verify: SuiteConfig,
}

/// Generated input (`kind`) or a signal CSV (`file`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<InputKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<TimeDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl InputBlock {
    pub fn params(&self) -> InputParams {
        let d = InputParams::default();
        InputParams {
            domain: self.domain.unwrap_or(d.domain),
            amplitude: self.amplitude.unwrap_or(d.amplitude),
            length: self.length.unwrap_or(d.length),
            start: self.start.unwrap_or(d.start),
            period: self.period.unwrap_or(d.period),
            dt: self.dt.unwrap_or(d.dt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    OnePole {
        a: f64,
    },
    Rational {
        num: Vec<f64>,
        den: Vec<f64>,
    },
    /// FIR when the tail fields are omitted.
    Table {
        values: Vec<f64>,
        #[serde(default)]
        tail_constant: f64,
        #[serde(default = "default_tail_rate")]
        tail_rate: f64,
    },
    Exponentials {
        coefficients: Vec<f64>,
        rates: Vec<f64>,
    },
}

fn default_tail_rate() -> f64 {
    0.5
}

impl SystemSpec {
    pub fn build(&self) -> kernel_sysid::Result<LtiSystem> {
        match self {
            SystemSpec::OnePole { a } => LtiSystem::one_pole(*a),
            SystemSpec::Rational { num, den } => LtiSystem::rational(num.clone(), den.clone()),
            SystemSpec::Table {
                values,
                tail_constant,
                tail_rate,
            } => LtiSystem::table(
                values.clone(),
                kernel_sysid::sim::GeometricTail::new(*tail_constant, *tail_rate)?,
            ),
            SystemSpec::Exponentials {
                coefficients,
                rates,
            } => {
                if coefficients.len() != rates.len() {
                    return Err(kernel_sysid::Error::InvalidArgument(
                        "system: coefficients and rates differ in length".into(),
                    ));
                }
                LtiSystem::exponentials(
                    coefficients
                        .iter()
                        .copied()
                        .zip(rates.iter().copied())
                        .collect(),
                )
            }
        }
    }
}

/// Explicit `times`, or `count` points `start + i·step`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl GridSpec {
    pub fn points(&self, what: &str) -> Result<Vec<f64>, CliError> {
        match (&self.times, self.count) {
            (Some(t), None) if self.start.is_none() && self.step.is_none() => Ok(t.clone()),
            (None, Some(n)) => {
                let start = self.start.unwrap_or(0.0);
                let step = self.step.unwrap_or(1.0);
                if !(step > 0.0) {
                    return Err(CliError::Config(format!("{what}: step must be positive")));
                }
                Ok((0..n).map(|i| start + i as f64 * step).collect())
            }
            _ => Err(CliError::Config(format!(
                "{what}: give either `times` or `count` (with optional `start`, `step`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `lambda = 0.1`, `lambda = [0.01, 0.1]` or `lambda = { lo, hi, count }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Scalar(f64),
    List(Vec<f64>),
    Log { lo: f64, hi: f64, count: usize },
}

impl LambdaSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            LambdaSpec::Scalar(x) => vec![*x],
            LambdaSpec::List(v) => v.clone(),
            LambdaSpec::Log { lo, hi, count } => {
                log_grid(*lo, *hi, *count).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(CliError::Config(
                "lambda values must be positive and finite".into(),
            ));
        }
        Ok(v)
    }
}

impl std::str::FromStr for LambdaSpec {
    type Err = String;

    /// `0.1`, `0.01,0.1,1` or `log:LO:HI:COUNT`.
    fn from_str(s: &str) -> Result<Self, String> {
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        };
        if let Some(rest) = s.strip_prefix("log:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err("expected log:LO:HI:COUNT".into());
            }
            let count = parts[2]
                .trim()
                .parse()
                .map_err(|_| format!("`{}` is not a count", parts[2]))?;
            return Ok(LambdaSpec::Log {
                lo: num(parts[0])?,
                hi: num(parts[1])?,
                count,
            });
        }
        if s.contains(',') {
            return Ok(LambdaSpec::List(
                s.split(',').map(num).collect::<Result<_, _>>()?,
            ));
        }
        Ok(LambdaSpec::Scalar(num(s)?))
    }
}

fn default_tail_tol() -> f64 {
    1e-8
}

fn default_stride() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSpec>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_stride")]
    pub holdout_stride: usize,
    /// Dataset CSV; defaults to `dataset.csv` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Input signal CSV; defaults to `input.csv` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_file: Option<PathBuf>,
    /// Where to export `ĝ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl Default for EstimateBlock {
    fn default() -> Self {
        Self {
            lambda: None,
            tail_tol: default_tail_tol(),
            holdout_stride: default_stride(),
            dataset: None,
            input_file: None,
            grid: None,
        }
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let msg = e.message().trim().to_string();
            match line {
                Some(l) => CliError::Config(format!("{}:{l}: {msg}", origin.display())),
                None => CliError::Config(format!("{}: {msg}", origin.display())),
            }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&text, path)?, text))
    }

    /// Noise seed: explicit, or derived from the run seed.
    pub fn noise_seed(&self) -> u64 {
        self.noise
            .seed
            .unwrap_or((self.seed ^ 0x1e37_79b9_7f4a_7c15) & i64::MAX as u64)
    }
}
