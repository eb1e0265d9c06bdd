use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values are snapped to this many decimals so `0:1:0.05` yields `0.15`, not
/// `0.15000000000000002`.
const GRID_DECIMALS: i32 = 12;

/// Strictly increasing, non-empty list of grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("grid contains a non-finite value".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid is not strictly increasing".into()));
        }
        Ok(Grid(values))
    }

    /// Inclusive linear grid `a, a + step, ...` up to `b`.
    pub fn linear(a: f64, b: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Config(format!("grid step must be > 0 (got {step})")));
        }
        if b < a {
            return Err(Error::Config(format!("grid is not increasing: {a} > {b}")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        Self::new((0..=n).map(|i| snap(a + i as f64 * step)).collect())
    }

    /// `n` points from `a` to `b` with constant ratio.
    pub fn geometric(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a > 0.0) || n == 0 {
            return Err(Error::Config("geometric grid needs a > 0 and n >= 1".into()));
        }
        if n == 1 {
            return Self::new(vec![a]);
        }
        if b <= a {
            return Err(Error::Config(format!("grid is not increasing: {a} >= {b}")));
        }
        let r = (b / a).ln() / (n - 1) as f64;
        Self::new((0..n).map(|i| if i == n - 1 { b } else { a * (r * i as f64).exp() }).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Grid::new(v)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

fn snap(x: f64) -> f64 {
    let k = 10f64.powi(GRID_DECIMALS);
    (x * k).round() / k
}

fn parse_parts(s: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != n {
        return Err(Error::Config(format!("expected {n} ':'-separated numbers, got '{s}'")));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number '{p}': {e}"))))
        .collect()
}

/// `a:b:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGridArg(pub Grid);

impl FromStr for LinearGridArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let p = parse_parts(s, 3)?;
        Grid::linear(p[0], p[1], p[2]).map(LinearGridArg)
    }
}

/// `[geometric:]a:b:n` or `linear:a:b:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGridArg(pub Grid);

impl FromStr for TimeGridArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("linear:") {
            return rest.parse::<LinearGridArg>().map(|g| TimeGridArg(g.0));
        }
        let rest = s.strip_prefix("geometric:").or_else(|| s.strip_prefix("geometric ")).unwrap_or(s);
        let p = parse_parts(rest, 3)?;
        if p[2].fract() != 0.0 || p[2] < 1.0 {
            return Err(Error::Config(format!("point count must be a positive integer (got {})", p[2])));
        }
        Grid::geometric(p[0], p[1], p[2] as usize).map(TimeGridArg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Model shape shared by the RHM experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub v: u32,
    pub s: u32,
    pub m: u32,
    #[serde(rename = "L")]
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub d: usize,
    pub sigma: f64,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Inversion times as fractions of `T`.
    pub t_fracs: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    DenoiseEps { model: ModelSpec, eps_grid: Grid },
    DenoiseTime { model: ModelSpec, t_grid: Grid },
    MeanfieldProfile { model: ModelSpec, eps_grid: Grid },
    PhaseDiagram { v: u32, s: u32, #[serde(rename = "L")] depth: u32, m_list: Vec<u32>, eps_grid: Grid },
    IterationMap { model: ModelSpec, points: usize },
    EpsMap { model: ModelSpec, t_grid: Grid },
    GaussianFlip(GaussianSpec),
    OracleCheck { model: ModelSpec },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::DenoiseEps { .. } => "denoise-eps",
            ExperimentSpec::DenoiseTime { .. } => "denoise-time",
            ExperimentSpec::MeanfieldProfile { .. } => "meanfield-profile",
            ExperimentSpec::PhaseDiagram { .. } => "phase-diagram",
            ExperimentSpec::IterationMap { .. } => "iteration-map",
            ExperimentSpec::EpsMap { .. } => "eps-map",
            ExperimentSpec::GaussianFlip(_) => "gaussian-flip",
            ExperimentSpec::OracleCheck { .. } => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: ExperimentSpec,
    pub trials: usize,
    pub seed: u64,
    /// Not echoed into results: output must not depend on it.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip, default = "default_format")]
    pub format: OutputFormat,
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if let ExperimentSpec::PhaseDiagram { m_list, .. } = &self.spec {
            if m_list.is_empty() {
                return Err(Error::Config("phase diagram needs at least one m".into()));
            }
        }
        if let ExperimentSpec::GaussianFlip(g) = &self.spec {
            if g.t_fracs.values().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Config("inversion times must be fractions of T in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grid() {
        let g: LinearGridArg = "0:1:0.05".parse().unwrap();
        let v = g.0.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[3], 0.15);
        assert_eq!(v[20], 1.0);
        assert!("1:0:0.1".parse::<LinearGridArg>().is_err());
        assert!("0:1:0".parse::<LinearGridArg>().is_err());
        assert!("0:1".parse::<LinearGridArg>().is_err());
        assert_eq!("0.5:0.5:0.1".parse::<LinearGridArg>().unwrap().0.values(), &[0.5]);
    }

    #[test]
    fn geometric_grid() {
        let g: TimeGridArg = "geometric:0.01:5:40".parse().unwrap();
        let v = g.0.values();
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.01);
        assert_eq!(v[39], 5.0);
        let ratio = v[1] / v[0];
        assert!(v.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
        assert_eq!("0.01:5:40".parse::<TimeGridArg>().unwrap(), g);
        assert!("5:0.01:40".parse::<TimeGridArg>().is_err());
        assert!("0:1:4".parse::<TimeGridArg>().is_err());
        assert_eq!("linear:0:1:0.5".parse::<TimeGridArg>().unwrap().0.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_serde_validates() {
        assert!(serde_json::from_str::<Grid>("[0.1, 0.2]").is_ok());
        assert!(serde_json::from_str::<Grid>("[0.2, 0.1]").is_err());
        assert!(serde_json::from_str::<Grid>("[]").is_err());
    }
}
