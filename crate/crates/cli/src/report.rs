use distlqr_core::DistLqrError;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` when set so
    /// that repeated runs stay byte-identical.
    pub timestamp: Option<u64>,
}

impl Metadata {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<I: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub input: I,
    pub result: R,
}

impl<I: Serialize, R: Serialize> ReportFile<I, R> {
    pub fn new(metadata: Metadata, input: I, result: R) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            metadata,
            input,
            result,
        }
    }
}

/// A bound that may not apply to the instance at hand.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Bound<T> {
    Applicable { value: T },
    NotApplicable { reason: String },
}

impl<T> Bound<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Bound::Applicable { value } => Some(value),
            Bound::NotApplicable { .. } => None,
        }
    }
}

/// Collects bounds that were skipped so `--strict` can fail on them.
#[derive(Debug, Default)]
pub struct Applicability {
    pub skipped: Vec<String>,
}

impl Applicability {
    /// Hypothesis failures become `NotApplicable`; other errors propagate.
    pub fn check<T>(&mut self, label: &str, res: distlqr_core::Result<T>) -> Result<Bound<T>, CliError> {
        match res {
            Ok(value) => Ok(Bound::Applicable { value }),
            Err(e @ (DistLqrError::NormTooLarge { .. } | DistLqrError::NonZeroMean)) => Ok(self.skip(label, e.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn skip<T>(&mut self, label: &str, reason: String) -> Bound<T> {
        self.skipped.push(format!("{label}: {reason}"));
        Bound::NotApplicable { reason }
    }
}

/// Row-major nested arrays for JSON output.
pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    pub quantiles: [(f64, f64); 5],
}

impl Summary {
    pub fn of(d: &distlqr_core::EmpiricalDistribution) -> Self {
        Self {
            samples: d.len(),
            mean: d.mean(),
            variance: d.variance(),
            std_error: d.std_error(),
            min: d.min(),
            max: d.max(),
            quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| (q, d.quantile(q))),
        }
    }
}
