//! Output feedback through a Luenberger observer. The pair (state,
//! estimation error) evolves as a 2n-dimensional linear system driven by
//! i.i.d. noise, so every full-state tool applies to it unchanged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DistLqrError, Result};
use crate::linalg::{check_finite, symmetrize, ClosedLoopModel, DiscountedLqrProblem};
use crate::model_based::{self, TruncatedReturnSpec, TruncationBoundReport, VarianceBoundReport};
use crate::model_free::OVERFLOW_THRESHOLD;
use crate::noise::NoiseModel;
use crate::rng::substream;
use crate::sensitivity::{self, SensitivityReport};
use crate::stats::{EmpiricalDistribution, Provenance};

#[derive(Debug, Clone)]
pub struct PartiallyObservableProblem {
    pub lqr: DiscountedLqrProblem,
    /// Output matrix `C` (l×n).
    pub c: DMatrix<f64>,
    pub process_noise: NoiseModel,
    pub obs_noise: NoiseModel,
}

impl PartiallyObservableProblem {
    pub fn new(lqr: DiscountedLqrProblem, c: DMatrix<f64>, process_noise: NoiseModel, obs_noise: NoiseModel) -> Result<Self> {
        let n = lqr.state_dim();
        if c.ncols() != n {
            return Err(DistLqrError::dims("C columns", n, c.ncols()));
        }
        check_finite(&c, "C")?;
        if process_noise.dim() != n {
            return Err(DistLqrError::dims("process noise", n, process_noise.dim()));
        }
        if obs_noise.dim() != c.nrows() {
            return Err(DistLqrError::dims("observation noise", c.nrows(), obs_noise.dim()));
        }
        if !process_noise.is_zero_mean() || !obs_noise.is_zero_mean() {
            return Err(DistLqrError::NonZeroMean);
        }
        Ok(Self {
            lqr,
            c,
            process_noise,
            obs_noise,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    /// `[A+BK, −BK; 0, A−LC]`
    pub a_bar: DMatrix<f64>,
    /// `[Q+KᵀRK, −KᵀRK; −KᵀRK, KᵀRK]`
    pub q_bar: DMatrix<f64>,
    /// `[I, 0; I, −L]`, mapping `(v, s)` to the augmented disturbance.
    pub f: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub noise_bar: NoiseModel,
    pub sigma_bar2: f64,
    pub sigma_bar4_4: f64,
    /// Closed loop over the augmented state; its `p` and `rho_k` are the
    /// barred value matrix and spectral norm.
    pub closed_loop: ClosedLoopModel,
}

impl AugmentedSystem {
    pub fn p_bar(&self) -> &DMatrix<f64> {
        &self.closed_loop.p
    }

    pub fn rho_bar(&self) -> f64 {
        self.closed_loop.rho_k
    }

    pub fn return_spec(&self, x_bar0: DVector<f64>, n_terms: usize) -> Result<TruncatedReturnSpec> {
        TruncatedReturnSpec::new(self.closed_loop.clone(), self.noise_bar.clone(), x_bar0, n_terms)
    }
}

/// `[x₀; x₀ − x̂₀]`.
pub fn augmented_state(x0: &DVector<f64>, x_hat0: &DVector<f64>) -> DVector<f64> {
    let n = x0.len();
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(x0);
    out.rows_mut(n, n).copy_from(&(x0 - x_hat0));
    out
}

pub fn build_augmented(prob: &PartiallyObservableProblem, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<AugmentedSystem> {
    let lqr = &prob.lqr;
    let (n, p, m) = (lqr.state_dim(), lqr.input_dim(), prob.output_dim());
    if k.shape() != (p, n) {
        return Err(DistLqrError::dims("gain K", format!("{p}x{n}"), format!("{}x{}", k.nrows(), k.ncols())));
    }
    if l.shape() != (n, m) {
        return Err(DistLqrError::dims("observer gain L", format!("{n}x{m}"), format!("{}x{}", l.nrows(), l.ncols())));
    }
    check_finite(k, "K")?;
    check_finite(l, "L")?;

    let bk = &lqr.b * k;
    let mut a_bar = DMatrix::zeros(2 * n, 2 * n);
    a_bar.view_mut((0, 0), (n, n)).copy_from(&(&lqr.a + &bk));
    a_bar.view_mut((0, n), (n, n)).copy_from(&(-&bk));
    a_bar.view_mut((n, n), (n, n)).copy_from(&(&lqr.a - l * &prob.c));

    let krk = if p == 0 {
        DMatrix::zeros(n, n)
    } else {
        symmetrize(&(k.transpose() * &lqr.r * k))
    };
    let mut q_bar = DMatrix::zeros(2 * n, 2 * n);
    q_bar.view_mut((0, 0), (n, n)).copy_from(&(&lqr.q + &krk));
    q_bar.view_mut((0, n), (n, n)).copy_from(&(-&krk));
    q_bar.view_mut((n, 0), (n, n)).copy_from(&(-&krk));
    q_bar.view_mut((n, n), (n, n)).copy_from(&krk);

    let mut f = DMatrix::zeros(2 * n, n + m);
    f.view_mut((0, 0), (n, n)).fill_with_identity();
    f.view_mut((n, 0), (n, n)).fill_with_identity();
    f.view_mut((n, n), (n, m)).copy_from(&(-l));

    let noise_bar = NoiseModel::linear_pushforward(f.clone(), vec![prob.process_noise.clone(), prob.obs_noise.clone()])?;
    let moments = noise_bar.moment_bounds();
    let closed_loop = ClosedLoopModel::from_parts(a_bar.clone(), q_bar.clone(), lqr.gamma)?;
    Ok(AugmentedSystem {
        a_bar,
        q_bar,
        f,
        k: k.clone(),
        l: l.clone(),
        noise_bar,
        sigma_bar2: moments.sigma2,
        sigma_bar4_4: moments.sigma4_4,
        closed_loop,
    })
}

pub fn sample_lqg_return<R: rand::Rng + ?Sized>(spec: &TruncatedReturnSpec, rng: &mut R) -> f64 {
    model_based::sample_truncated_return(spec, rng)
}

#[derive(Debug, Clone, Serialize)]
pub struct LqgBoundsReport {
    pub rho_bar: f64,
    pub sigma_bar2: f64,
    pub sigma_bar4_4: f64,
    pub variance: VarianceBoundReport,
    pub truncation: TruncationBoundReport,
}

/// Variance and truncation bounds on the augmented system. Fails with
/// `NormTooLarge` whenever `‖Ā‖ ≥ 1`, which can happen for a perfectly
/// stable observer loop.
pub fn lqg_bounds(
    aug: &AugmentedSystem,
    x_bar0: &DVector<f64>,
    f_max: f64,
    n_terms: usize,
    target: Option<f64>,
) -> Result<LqgBoundsReport> {
    let cl = &aug.closed_loop;
    let variance = model_based::variance_bound_for(cl, x_bar0, &aug.noise_bar)?;
    let truncation = model_based::truncation_bound(cl, x_bar0, aug.sigma_bar2, f_max, n_terms, target)?;
    Ok(LqgBoundsReport {
        rho_bar: aug.rho_bar(),
        sigma_bar2: aug.sigma_bar2,
        sigma_bar4_4: aug.sigma_bar4_4,
        variance,
        truncation,
    })
}

/// Sensitivity constants for a shift `d_a_bar` of the augmented loop.
pub fn lqg_sensitivity(
    aug: &AugmentedSystem,
    d_a_bar: &DMatrix<f64>,
    x_bar0: &DVector<f64>,
    f_tilde_max: f64,
) -> Result<SensitivityReport> {
    let perturbed = sensitivity::shifted_closed_loop(&aug.closed_loop, d_a_bar)?;
    sensitivity::sensitivity_constants(&aug.closed_loop, &perturbed, d_a_bar, x_bar0, aug.sigma_bar2, f_tilde_max)
}

/// Discounted cost of one observer-loop trajectory, computed twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverCost {
    /// `Σγᵗ(x_tᵀQx_t + u_tᵀRu_t)` from the plant/observer recursion.
    pub direct: f64,
    /// `Σγᵗ x̄_tᵀQ̄x̄_t` from propagating the augmented state.
    pub augmented: f64,
}

/// Simulates `x_{t+1} = Ax + Bu + v`, `y = Cx + s`, `u = Kx̂`,
/// `x̂_{t+1} = Ax̂ + Bu + L(y − Cx̂)` for `t = 0..T` and, with the same
/// disturbances, the augmented recursion `x̄_{t+1} = Āx̄ + F[v; s]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_observer_loop(
    prob: &PartiallyObservableProblem,
    aug: &AugmentedSystem,
    x0: &DVector<f64>,
    x_hat0: &DVector<f64>,
    horizon: usize,
    seed: u64,
    index: usize,
) -> Result<ObserverCost> {
    let lqr = &prob.lqr;
    let (n, m) = (lqr.state_dim(), prob.output_dim());
    let mut rng = substream(seed, index as u64);
    let mut x = x0.clone();
    let mut x_hat = x_hat0.clone();
    let mut x_bar = augmented_state(x0, x_hat0);
    let mut v = DVector::zeros(n);
    let mut s = DVector::zeros(m);
    let mut vs = DVector::zeros(n + m);
    let (mut direct, mut augmented, mut disc) = (0.0, 0.0, 1.0);
    for t in 0..=horizon {
        if !(x.norm() <= OVERFLOW_THRESHOLD && x_hat.norm() <= OVERFLOW_THRESHOLD) {
            return Err(DistLqrError::Overflow {
                trajectory: index,
                step: t,
                threshold: OVERFLOW_THRESHOLD,
            });
        }
        let u = &aug.k * &x_hat;
        direct += disc * (x.dot(&(&lqr.q * &x)) + u.dot(&(&lqr.r * &u)));
        augmented += disc * x_bar.dot(&(&aug.q_bar * &x_bar));
        if t == horizon {
            break;
        }
        prob.process_noise.sample_into(&mut rng, v.as_mut_slice());
        prob.obs_noise.sample_into(&mut rng, s.as_mut_slice());
        let y = &prob.c * &x + &s;
        let x_next = &lqr.a * &x + &lqr.b * &u + &v;
        x_hat = &lqr.a * &x_hat + &lqr.b * &u + &aug.l * (y - &prob.c * &x_hat);
        x = x_next;
        vs.rows_mut(0, n).copy_from(&v);
        vs.rows_mut(n, m).copy_from(&s);
        x_bar = &aug.a_bar * &x_bar + &aug.f * &vs;
        disc *= lqr.gamma;
    }
    Ok(ObserverCost { direct, augmented })
}

/// Monte Carlo baseline: direct observer-loop costs of `trajectories`
/// seeded rollouts.
pub fn simulate_observer_costs(
    prob: &PartiallyObservableProblem,
    aug: &AugmentedSystem,
    x0: &DVector<f64>,
    x_hat0: &DVector<f64>,
    horizon: usize,
    trajectories: usize,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    let costs: Vec<Result<f64>> = (0..trajectories)
        .into_par_iter()
        .map(|i| simulate_observer_loop(prob, aug, x0, x_hat0, horizon, seed, i).map(|c| c.direct))
        .collect();
    EmpiricalDistribution::new(
        costs.into_iter().collect::<Result<Vec<_>>>()?,
        Provenance {
            master_seed: Some(seed),
            description: format!("observer-loop rollouts, T={horizon}, M={trajectories}"),
        },
    )
}

/// Steady-state predictor gain from the filter Riccati recursion
/// `Σ ← AΣAᵀ + W − AΣCᵀ(CΣCᵀ + V)⁻¹CΣAᵀ`, `L = AΣCᵀ(CΣCᵀ + V)⁻¹`, with
/// `W`, `V` the process and observation noise second moments.
///
/// A convenience for choosing `L`; evaluation never calls it.
pub fn steady_state_observer_gain(prob: &PartiallyObservableProblem) -> Result<DMatrix<f64>> {
    let a = &prob.lqr.a;
    let c = &prob.c;
    let w = prob.process_noise.second_moment_matrix();
    let v = prob.obs_noise.second_moment_matrix();
    let gain = |sigma: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = c * sigma * c.transpose() + &v;
        let inv = s
            .try_inverse()
            .ok_or_else(|| DistLqrError::InvalidModel("innovation covariance is singular".into()))?;
        Ok(a * sigma * c.transpose() * inv)
    };
    let mut sigma = w.clone();
    let max_iter = 100_000;
    let mut step = f64::INFINITY;
    for _ in 0..max_iter {
        let l = gain(&sigma)?;
        let next = symmetrize(&(a * &sigma * a.transpose() + &w - &l * c * &sigma * a.transpose()));
        step = (&next - &sigma).norm();
        if !step.is_finite() || next.norm() > 1e12 {
            return Err(DistLqrError::NotStabilizable("filter Riccati iterates diverged".into()));
        }
        sigma = next;
        if step < 1e-12 * sigma.norm().max(1.0) {
            return gain(&sigma);
        }
    }
    Err(DistLqrError::NoConvergence {
        iterations: max_iter,
        last_step: step,
    })
}
