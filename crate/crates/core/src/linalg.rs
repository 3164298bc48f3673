//! Dense kernels for the discounted problem: Lyapunov and Riccati solvers,
//! norms, spectral radius and the Kronecker gap used by the sensitivity bound.
//!
//! Every symmetric result is returned as `(M + Mᵀ)/2`.

use nalgebra::{DMatrix, DVector, Schur};
use serde::Serialize;

use crate::error::{DistLqrError, Result};

/// "Stable" means a spectral radius below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Largest state dimension solved by the dense Kronecker system; bigger
/// problems use fixed-point iteration.
pub const DIRECT_LYAPUNOV_MAX_DIM: usize = 8;

/// Condition number of `H` above which it is treated as singular.
pub const MAX_KRON_CONDITION: f64 = 1e14;

const POSITIVE_DEFINITE_TOL: f64 = 1e-12;
const DIVERGENCE_NORM: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DistLqrError::NonFinite(what))
    }
}

pub(crate) fn check_square(m: &DMatrix<f64>, what: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(DistLqrError::dims(
            what,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(DistLqrError::InvalidModel(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    min_symmetric_eigenvalue(m) > POSITIVE_DEFINITE_TOL
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(m, "spectral radius")?;
    if n == 0 {
        return Ok(0.0);
    }
    check_finite(m, "spectral radius")?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or_else(|| {
        DistLqrError::InvalidModel("Schur iteration failed to converge".to_string())
    })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixNorms {
    pub spectral: f64,
    pub frobenius: f64,
    pub spec_radius: f64,
}

pub fn matrix_norms(m: &DMatrix<f64>) -> Result<MatrixNorms> {
    check_square(m, "matrix norms")?;
    check_finite(m, "matrix norms")?;
    Ok(MatrixNorms {
        spectral: spectral_norm(m),
        frobenius: m.norm(),
        spec_radius: spectral_radius(m)?,
    })
}

/// Checks that `sqrt(gamma) * a_k` is stable and returns its spectral radius.
pub fn discounted_radius(a_k: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    let radius = gamma.sqrt() * spectral_radius(a_k)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(DistLqrError::NotStable { radius });
    }
    Ok(radius)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(DistLqrError::InvalidModel(format!(
            "discount factor must lie in (0, 1), got {gamma}"
        )));
    }
    Ok(())
}

/// `H = I⊗I − γ A_Kᵀ⊗A_Kᵀ`, the operator of the vectorised (column-major)
/// discounted Lyapunov equation.
pub fn kron_operator(a_k: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let n = a_k.nrows();
    let at = a_k.transpose();
    DMatrix::identity(n * n, n * n) - at.kronecker(&at) * gamma
}

/// Solves `P = Q_K + γ A_Kᵀ P A_K`.
///
/// Uses a dense solve of the vectorised equation for `n <= 8` and
/// fixed-point iteration beyond that.
pub fn solve_discounted_lyapunov(
    a_k: &DMatrix<f64>,
    q_k: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let n = check_square(a_k, "Lyapunov A_K")?;
    if q_k.shape() != (n, n) {
        return Err(DistLqrError::dims(
            "Lyapunov Q_K",
            format!("{n}x{n}"),
            format!("{}x{}", q_k.nrows(), q_k.ncols()),
        ));
    }
    check_gamma(gamma)?;
    check_finite(a_k, "A_K")?;
    check_finite(q_k, "Q_K")?;
    discounted_radius(a_k, gamma)?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let q_sym = symmetrize(q_k);
    if n <= DIRECT_LYAPUNOV_MAX_DIM {
        let h = kron_operator(a_k, gamma);
        let rhs = DVector::from_column_slice(q_sym.as_slice());
        let vec_p = h.lu().solve(&rhs).ok_or(DistLqrError::SingularH {
            condition: f64::INFINITY,
        })?;
        Ok(symmetrize(&DMatrix::from_column_slice(n, n, vec_p.as_slice())))
    } else {
        lyapunov_fixed_point(a_k, &q_sym, gamma, 1e-13, 1_000_000)
    }
}

/// Fixed-point iteration `P ← Q_K + γ A_Kᵀ P A_K`, started from `Q_K`.
pub fn lyapunov_fixed_point(
    a_k: &DMatrix<f64>,
    q_k: &DMatrix<f64>,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    let at = a_k.transpose();
    let mut p = q_k.clone();
    let mut step = f64::INFINITY;
    for _ in 0..max_iter {
        let next = q_k + &at * &p * a_k * gamma;
        step = (&next - &p).norm();
        p = next;
        if step <= tol * p.norm().max(1.0) {
            return Ok(symmetrize(&p));
        }
    }
    Err(DistLqrError::NoConvergence {
        iterations: max_iter,
        last_step: step,
    })
}

#[derive(Debug, Clone)]
pub struct KronGap {
    /// `‖H⁻¹‖⁻¹`, i.e. the smallest singular value of `H`.
    pub l: f64,
    pub h: DMatrix<f64>,
}

pub fn kron_gap(a_k: &DMatrix<f64>, gamma: f64) -> Result<KronGap> {
    check_square(a_k, "Kronecker gap")?;
    check_gamma(gamma)?;
    check_finite(a_k, "A_K")?;
    let h = kron_operator(a_k, gamma);
    if h.is_empty() {
        return Ok(KronGap { l: 1.0, h });
    }
    let sv = h.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_KRON_CONDITION {
        return Err(DistLqrError::SingularH { condition });
    }
    Ok(KronGap { l: smin, h })
}

/// System, cost and discount of a discounted LQR problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedLqrProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub gamma: f64,
}

impl DiscountedLqrProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = check_square(&a, "A")?;
        if b.nrows() != n {
            return Err(DistLqrError::dims("B rows", n, b.nrows()));
        }
        let p = b.ncols();
        if q.shape() != (n, n) {
            return Err(DistLqrError::dims(
                "Q",
                format!("{n}x{n}"),
                format!("{}x{}", q.nrows(), q.ncols()),
            ));
        }
        if r.shape() != (p, p) {
            return Err(DistLqrError::dims(
                "R",
                format!("{p}x{p}"),
                format!("{}x{}", r.nrows(), r.ncols()),
            ));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&q, "Q"), (&r, "R")] {
            check_finite(m, name)?;
        }
        check_gamma(gamma)?;
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        if !is_positive_definite(&q) {
            return Err(DistLqrError::InvalidModel("Q is not positive definite".into()));
        }
        if p > 0 && !is_positive_definite(&r) {
            return Err(DistLqrError::InvalidModel("R is not positive definite".into()));
        }
        Ok(Self { a, b, q, r, gamma })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `Q + Kᵀ R K`.
    pub fn stage_cost(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        if self.input_dim() == 0 {
            return self.q.clone();
        }
        symmetrize(&(&self.q + k.transpose() * &self.r * k))
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

pub fn solve_discounted_riccati(prob: &DiscountedLqrProblem) -> Result<RiccatiSolution> {
    solve_discounted_riccati_with(prob, &RiccatiOptions::default())
}

/// Value iteration on
/// `P = Q + γAᵀPA − γ²AᵀPB(R + γBᵀPB)⁻¹BᵀPA`, started from `P = Q`,
/// with gain `K = −γ(R + γBᵀPB)⁻¹BᵀPA`.
///
/// The optimal gain must also stabilise `A + BK`; otherwise the problem is
/// reported as not stabilizable.
pub fn solve_discounted_riccati_with(
    prob: &DiscountedLqrProblem,
    opts: &RiccatiOptions,
) -> Result<RiccatiSolution> {
    let n = prob.state_dim();
    let p_dim = prob.input_dim();
    let (a, b, gamma) = (&prob.a, &prob.b, prob.gamma);

    if p_dim == 0 {
        let p = solve_discounted_lyapunov(a, &prob.q, gamma).map_err(|e| match e {
            DistLqrError::NotStable { radius } => DistLqrError::NotStabilizable(format!(
                "no inputs and sqrt(gamma)*A has spectral radius {radius:.6}"
            )),
            other => other,
        })?;
        check_closed_loop(a)?;
        return Ok(RiccatiSolution {
            p,
            k: DMatrix::zeros(0, n),
            iterations: 0,
        });
    }

    let at = a.transpose();
    let bt = b.transpose();
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = &prob.r + &bt * p * b * gamma;
        let rhs = &bt * p * a;
        s.lu()
            .solve(&rhs)
            .ok_or_else(|| DistLqrError::InvalidModel("R + γBᵀPB is singular".into()))
    };

    let mut p = prob.q.clone();
    let mut step = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let g = gain_of(&p)?;
        let next = symmetrize(
            &(&prob.q + &at * &p * a * gamma - &at * &p * b * g * (gamma * gamma)),
        );
        check_finite(&next, "Riccati iterate")
            .map_err(|_| DistLqrError::NotStabilizable("Riccati iterates diverged".into()))?;
        let norm = next.norm();
        if norm > DIVERGENCE_NORM {
            return Err(DistLqrError::NotStabilizable(format!(
                "Riccati iterate norm {norm:.3e} exceeds {DIVERGENCE_NORM:e}"
            )));
        }
        step = (&next - &p).norm();
        p = next;
        if step < opts.tol * norm.max(1.0) {
            let k = gain_of(&p)? * (-gamma);
            check_closed_loop(&(a + b * &k))?;
            return Ok(RiccatiSolution {
                p,
                k,
                iterations: iter,
            });
        }
    }
    Err(DistLqrError::NoConvergence {
        iterations: opts.max_iter,
        last_step: step,
    })
}

fn check_closed_loop(a_k: &DMatrix<f64>) -> Result<()> {
    let radius = spectral_radius(a_k)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(DistLqrError::NotStabilizable(format!(
            "optimal closed loop has spectral radius {radius:.6}"
        )));
    }
    Ok(())
}

/// A fixed linear policy together with everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopModel {
    /// `None` for closed loops built directly from `(A_K, Q_K)`, e.g. the
    /// augmented observer loop.
    pub gain: Option<DMatrix<f64>>,
    pub a_k: DMatrix<f64>,
    pub q_k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub gamma: f64,
    /// Spectral norm `‖A_K‖`.
    pub rho_k: f64,
    pub spec_radius: f64,
}

impl ClosedLoopModel {
    /// Closes the loop `u = Kx` on `prob`.
    pub fn new(prob: &DiscountedLqrProblem, k: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = (prob.state_dim(), prob.input_dim());
        if k.shape() != (p, n) {
            return Err(DistLqrError::dims(
                "gain K",
                format!("{p}x{n}"),
                format!("{}x{}", k.nrows(), k.ncols()),
            ));
        }
        check_finite(k, "K")?;
        let a_k = &prob.a + &prob.b * k;
        let q_k = prob.stage_cost(k);
        let mut model = Self::from_parts(a_k, q_k, prob.gamma)?;
        model.gain = Some(k.clone());
        Ok(model)
    }

    pub fn from_parts(a_k: DMatrix<f64>, q_k: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let p = solve_discounted_lyapunov(&a_k, &q_k, gamma)?;
        let norms = matrix_norms(&a_k)?;
        Ok(Self {
            gain: None,
            q_k: symmetrize(&q_k),
            a_k,
            p,
            gamma,
            rho_k: norms.spectral,
            spec_radius: norms.spec_radius,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_k.nrows()
    }

    /// `‖P − Q_K − γ A_Kᵀ P A_K‖_F`.
    pub fn lyapunov_residual(&self) -> f64 {
        (&self.p - &self.q_k - self.a_k.transpose() * &self.p * &self.a_k * self.gamma).norm()
    }

    /// `xᵀ P x`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.p * x))
    }

    /// Errors unless `‖A_K‖ < 1`, which every norm-based bound needs.
    pub fn require_contractive(&self) -> Result<f64> {
        if self.rho_k >= 1.0 {
            return Err(DistLqrError::NormTooLarge { norm: self.rho_k });
        }
        Ok(self.rho_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn lyapunov_zero_closed_loop_is_identity() {
        let p = solve_discounted_lyapunov(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3), 0.5)
            .unwrap();
        assert!((p - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn lyapunov_scalar_closed_form() {
        let p = solve_discounted_lyapunov(&scalar(0.5), &scalar(1.0), 0.8).unwrap();
        assert!((p[(0, 0)] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable_and_bad_shapes() {
        let err = solve_discounted_lyapunov(&scalar(1.2), &scalar(1.0), 0.9).unwrap_err();
        assert!(matches!(err, DistLqrError::NotStable { .. }));
        let err = solve_discounted_lyapunov(&DMatrix::zeros(2, 2), &scalar(1.0), 0.5).unwrap_err();
        assert!(matches!(err, DistLqrError::DimensionMismatch { .. }));
        let err = solve_discounted_lyapunov(&DMatrix::zeros(2, 3), &scalar(1.0), 0.5).unwrap_err();
        assert!(matches!(err, DistLqrError::DimensionMismatch { .. }));
    }

    #[test]
    fn lyapunov_fallback_matches_direct_above_cutoff() {
        let n = DIRECT_LYAPUNOV_MAX_DIM + 2;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.3 } else { 0.02 * ((i + 2 * j) % 5) as f64 });
        let q = DMatrix::identity(n, n);
        let p_iter = solve_discounted_lyapunov(&a, &q, 0.7).unwrap();
        let h = kron_operator(&a, 0.7);
        let vec_p = h.lu().solve(&DVector::from_column_slice(q.as_slice())).unwrap();
        let p_direct = DMatrix::from_column_slice(n, n, vec_p.as_slice());
        assert!((p_iter - p_direct).norm() < 1e-10);
    }

    #[test]
    fn kron_gap_trivial_cases() {
        let g = kron_gap(&DMatrix::zeros(3, 3), 0.5).unwrap();
        assert_eq!(g.h.shape(), (9, 9));
        assert!((g.h - DMatrix::<f64>::identity(9, 9)).norm() < 1e-15);
        assert!((g.l - 1.0).abs() < 1e-14);

        let g = kron_gap(&scalar(0.5), 0.8).unwrap();
        assert!((g.h[(0, 0)] - 0.8).abs() < 1e-15);
        assert!((g.l - 0.8).abs() < 1e-14);
    }

    #[test]
    fn kron_gap_singular() {
        // sqrt(γ)·a = 1 makes H exactly zero.
        let err = kron_gap(&scalar(2.0), 0.25).unwrap_err();
        assert!(matches!(err, DistLqrError::SingularH { .. }));
    }

    #[test]
    fn norms_examples() {
        let n = matrix_norms(&DMatrix::identity(3, 3)).unwrap();
        assert!((n.spectral - 1.0).abs() < 1e-14);
        assert!((n.frobenius - 3f64.sqrt()).abs() < 1e-14);
        assert!((n.spec_radius - 1.0).abs() < 1e-14);

        let n = matrix_norms(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]))).unwrap();
        assert!((n.spectral - 3.0).abs() < 1e-14);
        assert!((n.frobenius - 13f64.sqrt()).abs() < 1e-14);
        assert!((n.spec_radius - 3.0).abs() < 1e-14);

        let n = matrix_norms(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert!((n.spectral - 1.0).abs() < 1e-14);
        assert!((n.frobenius - 1.0).abs() < 1e-14);
        assert!(n.spec_radius.abs() < 1e-14);
    }

    #[test]
    fn norms_reject_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(matches!(matrix_norms(&m), Err(DistLqrError::NonFinite(_))));
    }

    #[test]
    fn riccati_scalar_quadratic_formula() {
        // 0.9P² − 0.8P − 1 = 0 at γ = 0.9.
        let prob = DiscountedLqrProblem::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), 0.9)
            .unwrap();
        let sol = solve_discounted_riccati(&prob).unwrap();
        let p_star = (0.8 + 4.24f64.sqrt()) / 1.8;
        assert!((sol.p[(0, 0)] - p_star).abs() < 1e-10);
        assert!((sol.k[(0, 0)] + 0.9 * p_star / (1.0 + 0.9 * p_star)).abs() < 1e-10);
    }

    #[test]
    fn riccati_without_inputs_is_lyapunov() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let q = DMatrix::identity(2, 2);
        let prob = DiscountedLqrProblem::new(a.clone(), DMatrix::zeros(2, 0), q.clone(), DMatrix::zeros(0, 0), 0.7)
            .unwrap();
        let sol = solve_discounted_riccati(&prob).unwrap();
        assert_eq!(sol.k.shape(), (0, 2));
        let p = solve_discounted_lyapunov(&a, &q, 0.7).unwrap();
        assert!((sol.p - p).norm() < 1e-14);
    }

    #[test]
    fn riccati_zero_input_on_unstable_plant_is_not_stabilizable() {
        let prob = DiscountedLqrProblem::new(scalar(1.0), scalar(0.0), scalar(1.0), scalar(1.0), 0.6)
            .unwrap();
        assert!(matches!(
            solve_discounted_riccati(&prob),
            Err(DistLqrError::NotStabilizable(_))
        ));
    }

    #[test]
    fn riccati_iteration_cap() {
        let prob = DiscountedLqrProblem::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), 0.6)
            .unwrap();
        let opts = RiccatiOptions { max_iter: 2, tol: 1e-12 };
        assert!(matches!(
            solve_discounted_riccati_with(&prob, &opts),
            Err(DistLqrError::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn problem_validation() {
        let bad_q = DiscountedLqrProblem::new(scalar(1.0), scalar(1.0), scalar(0.0), scalar(1.0), 0.6);
        assert!(matches!(bad_q, Err(DistLqrError::InvalidModel(_))));
        let bad_gamma = DiscountedLqrProblem::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), 1.0);
        assert!(matches!(bad_gamma, Err(DistLqrError::InvalidModel(_))));
        let bad_b = DiscountedLqrProblem::new(scalar(1.0), DMatrix::zeros(2, 1), scalar(1.0), scalar(1.0), 0.5);
        assert!(matches!(bad_b, Err(DistLqrError::DimensionMismatch { .. })));
    }

    #[test]
    fn closed_loop_invariants() {
        let prob = DiscountedLqrProblem::new(scalar(1.0), scalar(1.0), scalar(1.0), scalar(1.0), 0.6)
            .unwrap();
        let cl = ClosedLoopModel::new(&prob, &scalar(-0.4684)).unwrap();
        assert!(cl.lyapunov_residual() <= 1e-9 * cl.p.norm().max(1.0));
        assert!(cl.rho_k >= cl.spec_radius);
        assert!(is_positive_definite(&cl.p));
    }
}
