//! Model-based sampling of the truncated random return and the bounds that
//! go with it (mean, truncation error, second moment).

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DistLqrError, Result};
use crate::linalg::{max_symmetric_eigenvalue, spectral_norm, ClosedLoopModel};
use crate::noise::{MomentBounds, NoiseModel};
use crate::rng::substream;
use crate::stats::{EmpiricalDistribution, Provenance};

/// Default number of return samples used to build a distribution.
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct TruncatedReturnSpec {
    pub closed_loop: ClosedLoopModel,
    pub noise: NoiseModel,
    pub x0: DVector<f64>,
    /// Number of retained disturbance terms.
    pub n_terms: usize,
}

impl TruncatedReturnSpec {
    pub fn new(
        closed_loop: ClosedLoopModel,
        noise: NoiseModel,
        x0: DVector<f64>,
        n_terms: usize,
    ) -> Result<Self> {
        let n = closed_loop.state_dim();
        if noise.dim() != n {
            return Err(DistLqrError::dims("noise dimension", n, noise.dim()));
        }
        if x0.len() != n {
            return Err(DistLqrError::dims("initial state", n, x0.len()));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(DistLqrError::NonFinite("initial state"));
        }
        Ok(Self {
            closed_loop,
            noise,
            x0,
            n_terms,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.closed_loop.gamma
    }
}

/// Truncated return with disturbances supplied by `next_noise`:
///
/// `xᵀPx + Σ_{k<N} γ^{k+1} (2wₖᵀP(aₖ + sₖ) + wₖᵀPwₖ)`
///
/// where `aₖ = A_K^{k+1}x` and `sₖ = Σ_{τ<k} A_K^{k−τ}w_τ`, both updated
/// recursively.
pub fn truncated_return_with<F>(cl: &ClosedLoopModel, x0: &DVector<f64>, n_terms: usize, mut next_noise: F) -> f64
where
    F: FnMut(&mut [f64]),
{
    let n = cl.state_dim();
    let (a_k, p, gamma) = (&cl.a_k, &cl.p, cl.gamma);
    let mut total = cl.value(x0);
    let mut a = a_k * x0;
    let mut s = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let mut disc = gamma;
    for _ in 0..n_terms {
        next_noise(w.as_mut_slice());
        let pw = p * &w;
        total += disc * (2.0 * (pw.dot(&a) + pw.dot(&s)) + pw.dot(&w));
        s += &w;
        s = a_k * &s;
        a = a_k * &a;
        disc *= gamma;
    }
    total
}

pub fn sample_truncated_return<R: rand::Rng + ?Sized>(spec: &TruncatedReturnSpec, rng: &mut R) -> f64 {
    truncated_return_with(&spec.closed_loop, &spec.x0, spec.n_terms, |w| {
        spec.noise.sample_into(rng, w)
    })
}

/// Draws `m` returns; sample `i` uses substream `i` of `seed`.
pub fn sample_returns(spec: &TruncatedReturnSpec, m: usize, seed: u64) -> Vec<f64> {
    (0..m)
        .into_par_iter()
        .map(|i| sample_truncated_return(spec, &mut substream(seed, i as u64)))
        .collect()
}

pub fn sample_distribution(spec: &TruncatedReturnSpec, m: usize, seed: u64) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::new(
        sample_returns(spec, m, seed),
        Provenance {
            master_seed: Some(seed),
            description: format!("model-based truncated return, N={}, M={m}", spec.n_terms),
        },
    )
}

/// One draw of the Bellman backup `xᵀQ_Kx + γ G_N(A_Kx + v)`.
pub fn sample_bellman_backup<R: rand::Rng + ?Sized>(spec: &TruncatedReturnSpec, rng: &mut R) -> f64 {
    let cl = &spec.closed_loop;
    let v = spec.noise.sample(rng);
    let next = &cl.a_k * &spec.x0 + v;
    let stage = spec.x0.dot(&(&cl.q_k * &spec.x0));
    stage + cl.gamma * truncated_return_with(cl, &next, spec.n_terms, |w| spec.noise.sample_into(rng, w))
}

pub fn sample_bellman_backups(spec: &TruncatedReturnSpec, m: usize, seed: u64) -> Vec<f64> {
    (0..m)
        .into_par_iter()
        .map(|i| sample_bellman_backup(spec, &mut substream(seed, i as u64)))
        .collect()
}

/// `xᵀPx + γ/(1−γ)·Tr(P·E[wwᵀ])`.
pub fn analytic_mean(cl: &ClosedLoopModel, x0: &DVector<f64>, noise: &NoiseModel) -> Result<f64> {
    if !noise.is_zero_mean() {
        return Err(DistLqrError::NonZeroMean);
    }
    if noise.dim() != cl.state_dim() || x0.len() != cl.state_dim() {
        return Err(DistLqrError::dims("analytic mean", cl.state_dim(), noise.dim().max(x0.len())));
    }
    let g = cl.gamma;
    Ok(cl.value(x0) + g / (1.0 - g) * (&cl.p * noise.second_moment_matrix()).trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationComponents {
    /// `λmax(P)σ²γ/(1−γ)`
    pub quadratic: f64,
    /// `2σ‖P‖‖x‖γ/(1−γρ)`
    pub initial_state: f64,
    /// `2σ²‖P‖γρ/((1−γ)(1−ρ))`
    pub accumulated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationBoundReport {
    pub c0: f64,
    pub f_max_used: f64,
    pub n_terms: usize,
    pub bound_at_n: f64,
    pub target: Option<f64>,
    pub n_required: Option<usize>,
    pub components: TruncationComponents,
}

/// Constant `c₀` of the `c₀γᴺ` truncation bound on the sup-CDF error.
pub fn truncation_bound(
    cl: &ClosedLoopModel,
    x0: &DVector<f64>,
    sigma2: f64,
    f_max: f64,
    n_terms: usize,
    target: Option<f64>,
) -> Result<TruncationBoundReport> {
    let rho = cl.require_contractive()?;
    let g = cl.gamma;
    let sigma = sigma2.sqrt();
    let p_norm = spectral_norm(&cl.p);
    let x_norm = x0.norm();
    let components = TruncationComponents {
        quadratic: max_symmetric_eigenvalue(&cl.p) * sigma2 * g / (1.0 - g),
        initial_state: 2.0 * sigma * p_norm * x_norm * g / (1.0 - g * rho),
        accumulated: 2.0 * sigma2 * p_norm * g * rho / ((1.0 - g) * (1.0 - rho)),
    };
    let c0 = f_max * (components.quadratic + components.initial_state + components.accumulated);
    Ok(TruncationBoundReport {
        c0,
        f_max_used: f_max,
        n_terms,
        bound_at_n: c0 * g.powi(n_terms as i32),
        target,
        n_required: target.map(|t| required_n(c0, t, g)),
        components,
    })
}

/// Smallest `N ≥ 0` with `c0·γᴺ ≤ target`.
pub fn required_n(c0: f64, target: f64, gamma: f64) -> usize {
    if c0 <= target {
        return 0;
    }
    let guess = ((target / c0).ln() / gamma.ln() * (1.0 - 1e-12)).ceil().max(0.0) as usize;
    let at = |n: usize| c0 * gamma.powi(n as i32);
    let mut n = guess;
    while at(n) > target {
        n += 1;
    }
    while n > 0 && at(n - 1) <= target {
        n -= 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceBoundReport {
    pub second_moment_bound: f64,
    pub variance_bound: f64,
    pub mean: f64,
}

/// Upper bound on `E[G²]` and the implied variance bound.
pub fn variance_bound(
    cl: &ClosedLoopModel,
    x0: &DVector<f64>,
    moments: &MomentBounds,
    mean: f64,
) -> Result<VarianceBoundReport> {
    moments.require_zero_mean()?;
    let rho = cl.require_contractive()?;
    let g = cl.gamma;
    let p2 = spectral_norm(&cl.p).powi(2);
    let x2 = x0.norm_squared();
    let s44 = moments.sigma4_4;
    let s42 = s44.sqrt();
    let second = 4.0 * x2 * x2 * p2
        + 4.0 * s44 * p2 * g * g / (1.0 - g).powi(2)
        + 16.0 * p2 * x2 * s42 * g * g * rho * rho / (1.0 - g * rho).powi(2)
        + 16.0 * p2 * s44 * rho * rho * g.powi(4) / ((1.0 - rho * rho) * (1.0 - g * g));
    Ok(VarianceBoundReport {
        second_moment_bound: second,
        variance_bound: second - mean * mean,
        mean,
    })
}

/// [`variance_bound`] with moments and mean taken from `noise`.
pub fn variance_bound_for(cl: &ClosedLoopModel, x0: &DVector<f64>, noise: &NoiseModel) -> Result<VarianceBoundReport> {
    let moments = noise.moment_bounds();
    moments.require_zero_mean()?;
    variance_bound(cl, x0, &moments, analytic_mean(cl, x0, noise)?)
}
