//! Rollout-based evaluation: simulate trajectories under `u = Kx`, collect
//! truncated discounted costs, and bound the EDF error.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DistLqrError, Result};
use crate::linalg::{spectral_norm, ClosedLoopModel, DiscountedLqrProblem};
use crate::noise::NoiseModel;
use crate::rng::substream;
use crate::stats::{dkw_epsilon, EmpiricalDistribution, Provenance};

/// Trajectories whose state norm exceeds this are reported as diverged.
pub const OVERFLOW_THRESHOLD: f64 = 1e12;
pub const DEFAULT_HORIZON: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub trajectories: usize,
    pub x0: Vec<f64>,
    pub master_seed: u64,
}

impl RolloutConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.horizon == 0 || self.trajectories == 0 {
            return Err(DistLqrError::InvalidModel(
                "rollouts need horizon >= 1 and at least one trajectory".into(),
            ));
        }
        if self.x0.len() != n {
            return Err(DistLqrError::dims("initial state", n, self.x0.len()));
        }
        Ok(())
    }
}

/// Simulates `x_{t+1} = Ax_t + Bu_t + v_t`, `u_t = Kx_t`, and returns
/// `Σ_{t=0}^{T} γᵗ (x_tᵀQx_t + u_tᵀRu_t)` for trajectory `index`.
pub fn rollout_cost(
    prob: &DiscountedLqrProblem,
    k: &DMatrix<f64>,
    noise: &NoiseModel,
    cfg: &RolloutConfig,
    index: usize,
) -> Result<f64> {
    let mut rng = substream(cfg.master_seed, index as u64);
    let mut x = DVector::from_column_slice(&cfg.x0);
    let mut v = DVector::zeros(prob.state_dim());
    let mut cost = 0.0;
    let mut disc = 1.0;
    for t in 0..=cfg.horizon {
        let norm = x.norm();
        if norm.is_nan() || norm > OVERFLOW_THRESHOLD {
            return Err(DistLqrError::Overflow {
                trajectory: index,
                step: t,
                threshold: OVERFLOW_THRESHOLD,
            });
        }
        let u = k * &x;
        cost += disc * (x.dot(&(&prob.q * &x)) + u.dot(&(&prob.r * &u)));
        if t == cfg.horizon {
            break;
        }
        noise.sample_into(&mut rng, v.as_mut_slice());
        x = &prob.a * &x + &prob.b * &u + &v;
        disc *= prob.gamma;
    }
    Ok(cost)
}

/// `M` rollout costs as an empirical distribution. On divergence the
/// lowest offending trajectory index is reported.
pub fn evaluate_model_free(
    prob: &DiscountedLqrProblem,
    k: &DMatrix<f64>,
    noise: &NoiseModel,
    cfg: &RolloutConfig,
) -> Result<EmpiricalDistribution> {
    let n = prob.state_dim();
    cfg.validate(n)?;
    if noise.dim() != n {
        return Err(DistLqrError::dims("noise dimension", n, noise.dim()));
    }
    if k.shape() != (prob.input_dim(), n) {
        return Err(DistLqrError::dims(
            "gain K",
            format!("{}x{n}", prob.input_dim()),
            format!("{}x{}", k.nrows(), k.ncols()),
        ));
    }
    let costs: Vec<Result<f64>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| rollout_cost(prob, k, noise, cfg, i))
        .collect();
    let costs = costs.into_iter().collect::<Result<Vec<f64>>>()?;
    EmpiricalDistribution::new(
        costs,
        Provenance {
            master_seed: Some(cfg.master_seed),
            description: format!("rollouts, T={}, M={}", cfg.horizon, cfg.trajectories),
        },
    )
}

/// Which denominator the constant-noise term `c₃` uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum C3Variant {
    /// `σ²/((1−γ)(1−γρ))`
    #[default]
    DiscountedRadius,
    /// `σ²/((1−γ)(1−ρ²))`
    SquaredRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelFreeBoundReport {
    pub dkw_term: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub truncation_term: f64,
    pub total: f64,
    pub delta: f64,
    pub horizon: usize,
    pub trajectories: usize,
    pub c3_variant: C3Variant,
}

fn constants(cl: &ClosedLoopModel, x0: &DVector<f64>, sigma2: f64, variant: C3Variant) -> Result<(f64, f64, f64)> {
    let rho = cl.require_contractive()?;
    let g = cl.gamma;
    let x_norm = x0.norm();
    let c1 = x_norm * x_norm / (1.0 - g * rho * rho);
    let c2 = 2.0 * x_norm * sigma2.sqrt() / ((1.0 - rho) * (1.0 - g * rho));
    let c3 = match variant {
        C3Variant::DiscountedRadius => sigma2 / ((1.0 - g) * (1.0 - g * rho)),
        C3Variant::SquaredRadius => sigma2 / ((1.0 - g) * (1.0 - rho * rho)),
    };
    Ok((c1, c2, c3))
}

/// `f_max‖Q_K‖γ^{T+1}(c₁ρ^{2(T+1)} + c₂ρ^{T+1} + c₃)`.
pub fn truncation_term(
    cl: &ClosedLoopModel,
    x0: &DVector<f64>,
    sigma2: f64,
    f_max: f64,
    horizon: usize,
    variant: C3Variant,
) -> Result<f64> {
    let (c1, c2, c3) = constants(cl, x0, sigma2, variant)?;
    Ok(truncation_from(cl, f_max, horizon, c1, c2, c3))
}

fn truncation_from(cl: &ClosedLoopModel, f_max: f64, horizon: usize, c1: f64, c2: f64, c3: f64) -> f64 {
    let e = (horizon + 1) as i32;
    let rho_t = cl.rho_k.powi(e);
    f_max * spectral_norm(&cl.q_k) * cl.gamma.powi(e) * (c1 * rho_t * rho_t + c2 * rho_t + c3)
}

#[allow(clippy::too_many_arguments)]
pub fn model_free_bound(
    cl: &ClosedLoopModel,
    x0: &DVector<f64>,
    sigma2: f64,
    f_max: f64,
    horizon: usize,
    trajectories: usize,
    delta: f64,
    variant: C3Variant,
) -> Result<ModelFreeBoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DistLqrError::InvalidModel(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (c1, c2, c3) = constants(cl, x0, sigma2, variant)?;
    let dkw_term = dkw_epsilon(trajectories, delta);
    let truncation_term = truncation_from(cl, f_max, horizon, c1, c2, c3);
    Ok(ModelFreeBoundReport {
        dkw_term,
        c1,
        c2,
        c3,
        truncation_term,
        total: dkw_term + truncation_term,
        delta,
        horizon,
        trajectories,
        c3_variant: variant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SamplePlan {
    pub m_raw: usize,
    /// `m_raw` rounded to the nearest thousand, at least 1000.
    pub m_rounded: usize,
}

/// Smallest `M` with `√(ln(1/δ)/(2M)) ≤ target − truncation`.
pub fn plan_sample_size(target_total: f64, delta: f64, truncation: f64) -> Result<SamplePlan> {
    let slack = target_total - truncation;
    if slack.is_nan() || slack <= 0.0 {
        return Err(DistLqrError::TargetTooSmall {
            target: target_total,
            truncation_term: truncation,
        });
    }
    let m_raw = ((1.0 / delta).ln() / (2.0 * slack * slack)).ceil().max(1.0) as usize;
    let m_rounded = ((m_raw + 500) / 1000 * 1000).max(1000);
    Ok(SamplePlan { m_raw, m_rounded })
}
