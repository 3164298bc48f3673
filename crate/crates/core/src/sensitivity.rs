//! Sensitivity of the value matrix and of the return distribution to
//! perturbations of `A` and `B`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{DistLqrError, Result};
use crate::linalg::{kron_gap, spectral_norm, ClosedLoopModel, DiscountedLqrProblem};
use crate::stats::{ks_distance, EmpiricalDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub d_a: DMatrix<f64>,
    pub d_b: DMatrix<f64>,
    /// `ΔA + ΔB·K`.
    pub d_a_k: DMatrix<f64>,
}

impl Perturbation {
    pub fn new(d_a: DMatrix<f64>, d_b: DMatrix<f64>, k: &DMatrix<f64>) -> Result<Self> {
        if d_b.ncols() != k.nrows() || d_a.ncols() != k.ncols() || d_a.nrows() != d_b.nrows() {
            return Err(DistLqrError::dims(
                "perturbation",
                format!("ΔA {0}x{0}, ΔB {0}x{1}", k.ncols(), k.nrows()),
                format!("ΔA {}x{}, ΔB {}x{}", d_a.nrows(), d_a.ncols(), d_b.nrows(), d_b.ncols()),
            ));
        }
        let d_a_k = &d_a + &d_b * k;
        Ok(Self { d_a, d_b, d_a_k })
    }

    /// Relative perturbation `ΔA = εA`, `ΔB = εB`.
    pub fn relative(prob: &DiscountedLqrProblem, k: &DMatrix<f64>, eps: f64) -> Result<Self> {
        Self::new(&prob.a * eps, &prob.b * eps, k)
    }

    pub fn zero(prob: &DiscountedLqrProblem, k: &DMatrix<f64>) -> Result<Self> {
        Self::relative(prob, k, 0.0)
    }
}

/// Closed loop of `(A + ΔA, B + ΔB)` under the same gain and cost.
pub fn perturbed_closed_loop(prob: &DiscountedLqrProblem, k: &DMatrix<f64>, pert: &Perturbation) -> Result<ClosedLoopModel> {
    let nominal_a_k = &prob.a + &prob.b * k;
    if pert.d_a_k.shape() != nominal_a_k.shape() {
        return Err(DistLqrError::dims(
            "ΔA_K",
            format!("{}x{}", nominal_a_k.nrows(), nominal_a_k.ncols()),
            format!("{}x{}", pert.d_a_k.nrows(), pert.d_a_k.ncols()),
        ));
    }
    let a_k = (&prob.a + &pert.d_a) + (&prob.b + &pert.d_b) * k;
    let mut model = ClosedLoopModel::from_parts(a_k, prob.stage_cost(k), prob.gamma)?;
    model.gain = Some(k.clone());
    Ok(model)
}

/// Same closed loop with `A_K` shifted by `d_a_k`.
pub fn shifted_closed_loop(cl: &ClosedLoopModel, d_a_k: &DMatrix<f64>) -> Result<ClosedLoopModel> {
    let mut model = ClosedLoopModel::from_parts(&cl.a_k + d_a_k, cl.q_k.clone(), cl.gamma)?;
    model.gain = cl.gain.clone();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovSensitivity {
    pub epsilon: f64,
    pub l: f64,
    pub applicable: bool,
    /// `2‖P‖_F ε/(l − 2ε)`; absent when `l ≤ 2ε`.
    pub bound_f: Option<f64>,
}

/// Frobenius-norm bound on `P − P̃` for a shift `d_a_k` of the closed loop.
pub fn lyapunov_sensitivity_bound(cl: &ClosedLoopModel, d_a_k: &DMatrix<f64>) -> Result<LyapunovSensitivity> {
    let g = cl.gamma;
    let l = kron_gap(&cl.a_k, g)?.l;
    let d = d_a_k.norm();
    let epsilon = g * cl.a_k.norm() * d + 0.5 * g * d * d;
    let applicable = l > 2.0 * epsilon;
    Ok(LyapunovSensitivity {
        epsilon,
        l,
        applicable,
        bound_f: applicable.then(|| 2.0 * cl.p.norm() * epsilon / (l - 2.0 * epsilon)),
    })
}

/// `max(1, ρ^{(1−ρ₀)/ρ₀}/ρ₀)` with `ρ₀ = ln(1/ρ)`, an upper bound on
/// `sup_k (k+1)ρᵏ`.
pub fn u_constant(rho: f64) -> f64 {
    if rho <= 0.0 {
        return 1.0;
    }
    let rho0 = (1.0 / rho).ln();
    (rho.powf((1.0 - rho0) / rho0) / rho0).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub l: f64,
    pub epsilon: f64,
    /// `max(‖A_K‖, ‖Ã_K‖)`.
    pub rho: f64,
    pub rho0: f64,
    pub u: f64,
    pub c3_tilde: f64,
    pub c4_tilde: f64,
    pub c1_tilde: Option<f64>,
    pub c2_tilde: Option<f64>,
    pub lemma_bound_p: Option<f64>,
    /// `c̃₁‖ΔA_K‖ + c̃₂‖ΔA_K‖²`.
    pub theorem_bound: Option<f64>,
    pub delta_norm: f64,
    pub f_tilde_max: f64,
    pub applicable: bool,
}

/// Constants of the sup-CDF sensitivity bound. When `l ≤ 2ε` the report
/// comes back with `applicable = false` and the dependent fields empty.
pub fn sensitivity_constants(
    cl: &ClosedLoopModel,
    perturbed: &ClosedLoopModel,
    d_a_k: &DMatrix<f64>,
    x0: &DVector<f64>,
    sigma2: f64,
    f_tilde_max: f64,
) -> Result<SensitivityReport> {
    let rho = cl.rho_k.max(perturbed.rho_k);
    if rho >= 1.0 {
        return Err(DistLqrError::NormTooLarge { norm: rho });
    }
    let g = cl.gamma;
    let n = cl.state_dim() as f64;
    let sigma = sigma2.sqrt();
    let x_norm = x0.norm();
    let p_norm = spectral_norm(&cl.p);
    let p_fro = cl.p.norm();
    let lemma = lyapunov_sensitivity_bound(cl, d_a_k)?;
    let u = u_constant(rho);
    let rho0 = if rho > 0.0 { (1.0 / rho).ln() } else { f64::INFINITY };

    let c3_tilde = x_norm * x_norm
        + sigma2 * g / (1.0 - g)
        + 2.0 * sigma * g * rho / (1.0 - g * rho)
        + 2.0 * sigma2 / ((1.0 - g) * (1.0 - rho));
    let c4_tilde = 2.0 * sigma * p_norm * x_norm * u * g / (1.0 - g)
        + 2.0 * sigma2 * p_norm * g * g / ((1.0 - g) * (1.0 - rho).powi(2));

    let gap = lemma.l - 2.0 * lemma.epsilon;
    let (c1_tilde, c2_tilde) = if lemma.applicable {
        (
            Some(f_tilde_max * (2.0 * c3_tilde * n.sqrt() * g * cl.a_k.norm() * p_fro / gap + c4_tilde)),
            Some(f_tilde_max * c3_tilde * n * g * p_fro / gap),
        )
    } else {
        (None, None)
    };
    let delta_norm = spectral_norm(d_a_k);
    let theorem_bound = c1_tilde
        .zip(c2_tilde)
        .map(|(c1, c2)| c1 * delta_norm + c2 * delta_norm * delta_norm);
    Ok(SensitivityReport {
        l: lemma.l,
        epsilon: lemma.epsilon,
        rho,
        rho0,
        u,
        c3_tilde,
        c4_tilde,
        c1_tilde,
        c2_tilde,
        lemma_bound_p: lemma.bound_f,
        theorem_bound,
        delta_norm,
        f_tilde_max,
        applicable: lemma.applicable,
    })
}

/// Sup-CDF distance between nominal and perturbed return samples.
pub fn measure_sup_difference(original: &EmpiricalDistribution, perturbed: &EmpiricalDistribution) -> f64 {
    ks_distance(original, perturbed)
}
