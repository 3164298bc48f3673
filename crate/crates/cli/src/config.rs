//! JSON scenario files. Matrices are nested row-major arrays.

use std::path::Path;

use distlqr_core::linalg::DiscountedLqrProblem;
use distlqr_core::model_free::C3Variant;
use distlqr_core::noise::NoiseModel;
use distlqr_core::stats::BinRule;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemBlock,
    pub cost: CostBlock,
    #[serde(default)]
    pub policy: PolicyBlock,
    /// Process noise; standard normal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    /// Observation noise for output feedback; standard normal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs_noise: Option<NoiseSpec>,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "A")]
    pub a: Matrix,
    #[serde(rename = "B")]
    pub b: Matrix,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    pub gamma: f64,
}

/// `"riccati"` or an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Named(String),
    Matrix(Matrix),
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec::Named("riccati".into())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyBlock {
    #[serde(rename = "K", default)]
    pub k: GainSpec,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    StandardNormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<f64>>,
        cov: Matrix,
    },
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Matrix>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Modelbased,
    Modelfree,
    Lqg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub eps_a: f64,
    pub eps_b: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C3Choice {
    #[default]
    DiscountedRadius,
    SquaredRadius,
}

impl From<C3Choice> for C3Variant {
    fn from(c: C3Choice) -> Self {
        match c {
            C3Choice::DiscountedRadius => C3Variant::DiscountedRadius,
            C3Choice::SquaredRadius => C3Variant::SquaredRadius,
        }
    }
}

fn default_terms() -> usize {
    30
}
fn default_horizon() -> usize {
    100
}
fn default_samples() -> usize {
    100_000
}
fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationBlock {
    #[serde(default)]
    pub mode: Mode,
    /// Retained disturbance terms for model-based sampling.
    #[serde(rename = "N", default = "default_terms")]
    pub n_terms: usize,
    /// Rollout horizon.
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    /// Number of samples or trajectories.
    #[serde(rename = "M", default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hat0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Error level used for N and M planning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Fixed histogram bin count; Freedman–Diaconis when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub c3: C3Choice,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            n_terms: default_terms(),
            horizon: default_horizon(),
            samples: default_samples(),
            x0: None,
            x_hat0: None,
            seed: None,
            delta: default_delta(),
            target: None,
            bins: None,
            perturbation: None,
            c3: C3Choice::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::config(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn to_matrix(rows: &Matrix, field: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(CliError::config(format!(
            "{field}: row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn to_vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn context(field: &str) -> impl Fn(distlqr_core::DistLqrError) -> CliError + '_ {
    move |e| CliError::config(format!("{field}: {e}"))
}

impl NoiseSpec {
    pub fn build(&self, default_dim: usize, field: &str) -> Result<NoiseModel, CliError> {
        let model = match self {
            NoiseSpec::StandardNormal { dim } => NoiseModel::standard_normal(dim.unwrap_or(default_dim)),
            NoiseSpec::Gaussian { mean, cov } => {
                let cov = to_matrix(cov, &format!("{field}.cov"))?;
                let mean = mean.as_deref().map(to_vector).unwrap_or_else(|| DVector::zeros(cov.nrows()));
                NoiseModel::gaussian(mean, cov)
            }
            NoiseSpec::UniformBox { lo, hi } => NoiseModel::uniform_box(to_vector(lo), to_vector(hi)),
            NoiseSpec::GaussianMixture { weights, means, covs } => {
                let covs = covs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| to_matrix(c, &format!("{field}.covs[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                NoiseModel::gaussian_mixture(weights.clone(), means.iter().map(|m| to_vector(m)).collect(), covs)
            }
        }
        .map_err(context(field))?;
        if model.dim() != default_dim {
            return Err(CliError::config(format!(
                "{field}: dimension {} does not match the expected {default_dim}",
                model.dim()
            )));
        }
        Ok(model)
    }
}

/// Validated domain objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub lqr: DiscountedLqrProblem,
    pub gain: Option<DMatrix<f64>>,
    pub c: Option<DMatrix<f64>>,
    pub l: Option<DMatrix<f64>>,
    pub noise: NoiseModel,
    pub obs_noise: Option<NoiseModel>,
    pub x0: DVector<f64>,
    pub x_hat0: DVector<f64>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.lqr == other.lqr
            && self.gain == other.gain
            && self.c == other.c
            && self.l == other.l
            && self.noise == other.noise
            && self.obs_noise == other.obs_noise
            && self.x0 == other.x0
            && self.x_hat0 == other.x_hat0
    }
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, CliError> {
        let a = to_matrix(&self.system.a, "system.A")?;
        let b = to_matrix(&self.system.b, "system.B")?;
        let q = to_matrix(&self.cost.q, "cost.Q")?;
        let r = to_matrix(&self.cost.r, "cost.R")?;
        // A zero-column B arrives as rows of empty arrays.
        let b = if b.nrows() == 0 && a.nrows() > 0 { DMatrix::zeros(a.nrows(), 0) } else { b };
        let lqr = DiscountedLqrProblem::new(a, b, q, r, self.cost.gamma).map_err(context("system/cost"))?;
        let n = lqr.state_dim();

        let gain = match &self.policy.k {
            GainSpec::Named(name) if name == "riccati" => None,
            GainSpec::Named(other) => {
                return Err(CliError::config(format!(
                    "policy.K: expected \"riccati\" or a matrix, got \"{other}\""
                )))
            }
            GainSpec::Matrix(m) => {
                let k = to_matrix(m, "policy.K")?;
                if k.shape() != (lqr.input_dim(), n) {
                    return Err(CliError::config(format!(
                        "policy.K: expected {}x{n}, got {}x{}",
                        lqr.input_dim(),
                        k.nrows(),
                        k.ncols()
                    )));
                }
                Some(k)
            }
        };
        let c = self.system.c.as_ref().map(|c| to_matrix(c, "system.C")).transpose()?;
        let l = self.policy.l.as_ref().map(|l| to_matrix(l, "policy.L")).transpose()?;
        let noise = match &self.noise {
            Some(spec) => spec.build(n, "noise")?,
            None => NoiseModel::standard_normal(n).map_err(context("noise"))?,
        };
        let obs_noise = match (&c, &self.obs_noise) {
            (Some(c), Some(spec)) => Some(spec.build(c.nrows(), "obs_noise")?),
            (Some(c), None) => Some(NoiseModel::standard_normal(c.nrows()).map_err(context("obs_noise"))?),
            (None, Some(_)) => return Err(CliError::config("obs_noise: given without system.C")),
            (None, None) => None,
        };
        let ev = &self.evaluation;
        let vec_or = |v: &Option<Vec<f64>>, default: f64, field: &str| -> Result<DVector<f64>, CliError> {
            match v {
                Some(v) if v.len() != n => Err(CliError::config(format!(
                    "{field}: expected {n} entries, got {}",
                    v.len()
                ))),
                Some(v) => Ok(to_vector(v)),
                None => Ok(DVector::from_element(n, default)),
            }
        };
        let x0 = vec_or(&ev.x0, 1.0, "evaluation.x0")?;
        let x_hat0 = vec_or(&ev.x_hat0, 0.0, "evaluation.x_hat0")?;
        if ev.samples == 0 {
            return Err(CliError::config("evaluation.M: must be positive"));
        }
        if ev.horizon == 0 {
            return Err(CliError::config("evaluation.T: must be positive"));
        }
        if !(ev.delta > 0.0 && ev.delta < 1.0) {
            return Err(CliError::config("evaluation.delta: must lie in (0, 1)"));
        }
        Ok(Scenario {
            lqr,
            gain,
            c,
            l,
            noise,
            obs_noise,
            x0,
            x_hat0,
        })
    }

    pub fn bin_rule(&self) -> BinRule {
        match self.evaluation.bins {
            Some(k) => BinRule::Fixed(k),
            None => BinRule::FreedmanDiaconis,
        }
    }
}
