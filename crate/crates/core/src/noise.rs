//! I.i.d. disturbance models: sampling, exact low-order moments and densities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{DistLqrError, Result};
use crate::linalg::{check_finite, check_symmetric, min_symmetric_eigenvalue, symmetrize};

const MEAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        /// `factor * factorᵀ = cov`.
        factor: DMatrix<f64>,
    },
    /// Independent uniform components on `[lo_i, hi_i]`.
    UniformBox { lo: DVector<f64>, hi: DVector<f64> },
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<NoiseModel>,
    },
    /// `map · [u_1; u_2; ...]` with independent zero-mean blocks `u_b`.
    LinearPushforward {
        map: DMatrix<f64>,
        blocks: Vec<NoiseModel>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    dim: usize,
}

/// Moment envelopes consumed by the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentBounds {
    pub zero_mean: bool,
    /// `E‖w‖²`.
    pub sigma2: f64,
    /// `E‖w‖⁴`.
    pub sigma4_4: f64,
}

impl MomentBounds {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn require_zero_mean(&self) -> Result<()> {
        if self.zero_mean {
            Ok(())
        } else {
            Err(DistLqrError::NonZeroMean)
        }
    }
}

fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(cov).symmetric_eigen();
    let scale = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let mut f = eig.eigenvectors;
    for (j, s) in scale.iter().enumerate() {
        f.column_mut(j).scale_mut(*s);
    }
    f
}

impl NoiseModel {
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(DistLqrError::InvalidModel("noise dimension must be positive".into()));
        }
        if cov.shape() != (n, n) {
            return Err(DistLqrError::dims(
                "Gaussian covariance",
                format!("{n}x{n}"),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        check_finite(&DMatrix::from_column_slice(n, 1, mean.as_slice()), "Gaussian mean")?;
        check_finite(&cov, "Gaussian covariance")?;
        check_symmetric(&cov, "Gaussian covariance")?;
        if min_symmetric_eigenvalue(&cov) < -PSD_TOL * cov.norm().max(1.0) {
            return Err(DistLqrError::InvalidModel(
                "Gaussian covariance is not positive semidefinite".into(),
            ));
        }
        let cov = symmetrize(&cov);
        let factor = psd_factor(&cov);
        Ok(Self {
            kind: NoiseKind::Gaussian { mean, cov, factor },
            dim: n,
        })
    }

    pub fn standard_normal(n: usize) -> Result<Self> {
        Self::gaussian(DVector::zeros(n), DMatrix::identity(n, n))
    }

    pub fn uniform_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        let n = lo.len();
        if n == 0 {
            return Err(DistLqrError::InvalidModel("noise dimension must be positive".into()));
        }
        if hi.len() != n {
            return Err(DistLqrError::dims("uniform box bounds", n, hi.len()));
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(DistLqrError::NonFinite("uniform box bounds"));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l >= h) {
            return Err(DistLqrError::InvalidModel("uniform box needs lo < hi in every component".into()));
        }
        Ok(Self {
            kind: NoiseKind::UniformBox { lo, hi },
            dim: n,
        })
    }

    pub fn gaussian_mixture(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
            return Err(DistLqrError::InvalidModel(format!(
                "mixture needs matching non-empty weights/means/covs, got {}/{}/{}",
                weights.len(),
                means.len(),
                covs.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(DistLqrError::InvalidModel("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistLqrError::InvalidModel(format!("mixture weights sum to {total}, not 1")));
        }
        let components = means
            .into_iter()
            .zip(covs)
            .map(|(m, c)| Self::gaussian(m, c))
            .collect::<Result<Vec<_>>>()?;
        let dim = components[0].dim;
        if components.iter().any(|c| c.dim != dim) {
            return Err(DistLqrError::InvalidModel("mixture components differ in dimension".into()));
        }
        Ok(Self {
            kind: NoiseKind::GaussianMixture { weights, components },
            dim,
        })
    }

    /// Law of `map · [u_1; …; u_k]` for independent zero-mean `u_b`.
    pub fn linear_pushforward(map: DMatrix<f64>, blocks: Vec<NoiseModel>) -> Result<Self> {
        let inner: usize = blocks.iter().map(|b| b.dim).sum();
        if blocks.is_empty() || map.ncols() != inner || map.nrows() == 0 {
            return Err(DistLqrError::dims(
                "pushforward map",
                format!("?x{inner}"),
                format!("{}x{}", map.nrows(), map.ncols()),
            ));
        }
        check_finite(&map, "pushforward map")?;
        if blocks.iter().any(|b| !b.is_zero_mean()) {
            return Err(DistLqrError::NonZeroMean);
        }
        Ok(Self {
            dim: map.nrows(),
            kind: NoiseKind::LinearPushforward { map, blocks },
        })
    }

    /// The three scalar disturbances used to show that equal means can hide
    /// very different return laws: N(0,1), U[−√3, √3] and a two-bump mixture,
    /// all with unit variance.
    pub fn unit_variance_family() -> [(&'static str, NoiseModel); 3] {
        let one = |v: f64| DVector::from_element(1, v);
        let s = 3f64.sqrt();
        let var = 1.0 - 0.99f64 * 0.99;
        let cov = DMatrix::from_element(1, 1, var);
        [
            ("gaussian", Self::standard_normal(1).unwrap()),
            ("uniform", Self::uniform_box(one(-s), one(s)).unwrap()),
            (
                "bimodal",
                Self::gaussian_mixture(vec![0.5, 0.5], vec![one(-0.99), one(0.99)], vec![cov.clone(), cov])
                    .unwrap(),
            ),
        ]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    /// Writes one draw into `out` (length `dim`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            NoiseKind::Gaussian { mean, factor, .. } => {
                let n = self.dim;
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    let mut acc = mean[i];
                    for (j, zj) in z.iter().enumerate() {
                        acc += factor[(i, j)] * zj;
                    }
                    out[i] = acc;
                }
            }
            NoiseKind::UniformBox { lo, hi } => {
                for i in 0..self.dim {
                    let u: f64 = rng.random();
                    out[i] = lo[i] + (hi[i] - lo[i]) * u;
                }
            }
            NoiseKind::GaussianMixture { weights, components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                components[pick].sample_into(rng, out);
            }
            NoiseKind::LinearPushforward { map, blocks } => {
                let mut u = vec![0.0; map.ncols()];
                let mut off = 0;
                for b in blocks {
                    b.sample_into(rng, &mut u[off..off + b.dim]);
                    off += b.dim;
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = map.row(i).iter().zip(&u).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.sample_into(rng, out.as_mut_slice());
        out
    }

    pub fn mean(&self) -> DVector<f64> {
        match &self.kind {
            NoiseKind::Gaussian { mean, .. } => mean.clone(),
            NoiseKind::UniformBox { lo, hi } => (lo + hi) * 0.5,
            NoiseKind::GaussianMixture { weights, components } => weights
                .iter()
                .zip(components)
                .fold(DVector::zeros(self.dim), |acc, (w, c)| acc + c.mean() * *w),
            NoiseKind::LinearPushforward { .. } => DVector::zeros(self.dim),
        }
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean().amax() <= MEAN_TOL
    }

    /// `E[w wᵀ]`.
    pub fn second_moment_matrix(&self) -> DMatrix<f64> {
        match &self.kind {
            NoiseKind::Gaussian { mean, cov, .. } => cov + mean * mean.transpose(),
            NoiseKind::UniformBox { lo, hi } => {
                let m = self.mean();
                let mut s = &m * m.transpose();
                for i in 0..self.dim {
                    s[(i, i)] = (lo[i] * lo[i] + lo[i] * hi[i] + hi[i] * hi[i]) / 3.0;
                }
                s
            }
            NoiseKind::GaussianMixture { weights, components } => weights
                .iter()
                .zip(components)
                .fold(DMatrix::zeros(self.dim, self.dim), |acc, (w, c)| {
                    acc + c.second_moment_matrix() * *w
                }),
            NoiseKind::LinearPushforward { map, blocks } => {
                map * block_diag(blocks.iter().map(|b| b.second_moment_matrix())) * map.transpose()
            }
        }
    }

    /// `E[(wᵀ M w)²]` for symmetric `M`.
    pub fn quartic_moment(&self, m: &DMatrix<f64>) -> f64 {
        let m = symmetrize(m);
        match &self.kind {
            NoiseKind::Gaussian { mean, cov, .. } => {
                let mu_m_mu = mean.dot(&(&m * mean));
                let ms = &m * cov;
                let tr_ms = ms.trace();
                let cross = mean.dot(&(&m * cov * &m * mean));
                mu_m_mu * mu_m_mu + 4.0 * cross + tr_ms * tr_ms + 2.0 * (&ms * &ms).trace()
                    + 2.0 * mu_m_mu * tr_ms
            }
            NoiseKind::UniformBox { lo, hi } => {
                let raw = |i: usize, k: i32| -> f64 {
                    let (a, b) = (lo[i], hi[i]);
                    (b.powi(k + 1) - a.powi(k + 1)) / ((k + 1) as f64 * (b - a))
                };
                independent_quartic(&m, raw)
            }
            NoiseKind::GaussianMixture { weights, components } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.quartic_moment(&m))
                .sum(),
            NoiseKind::LinearPushforward { map, blocks } => {
                let mp = symmetrize(&(map.transpose() * &m * map));
                let offsets: Vec<usize> = blocks
                    .iter()
                    .scan(0, |off, b| {
                        let o = *off;
                        *off += b.dim;
                        Some(o)
                    })
                    .collect();
                let seconds: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.second_moment_matrix()).collect();
                let sub = |b: usize, c: usize| {
                    mp.view((offsets[b], offsets[c]), (blocks[b].dim, blocks[c].dim)).into_owned()
                };
                let firsts: Vec<f64> = (0..blocks.len()).map(|b| (sub(b, b) * &seconds[b]).trace()).collect();
                let mut total = 0.0;
                for b in 0..blocks.len() {
                    total += blocks[b].quartic_moment(&sub(b, b));
                    for c in 0..blocks.len() {
                        if c != b {
                            total += firsts[b] * firsts[c];
                        }
                        if c > b {
                            let mbc = sub(b, c);
                            total += 4.0 * (&mbc * &seconds[c] * mbc.transpose() * &seconds[b]).trace();
                        }
                    }
                }
                total
            }
        }
    }

    pub fn moment_bounds(&self) -> MomentBounds {
        let eye = DMatrix::identity(self.dim, self.dim);
        MomentBounds {
            zero_mean: self.is_zero_mean(),
            sigma2: self.second_moment_matrix().trace(),
            sigma4_4: self.quartic_moment(&eye),
        }
    }

    /// Density at `x`. Point masses, singular covariances and non-square
    /// pushforwards have no density.
    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(DistLqrError::dims("pdf argument", self.dim, x.len()));
        }
        match &self.kind {
            NoiseKind::Gaussian { mean, cov, .. } => {
                let chol = cov.clone().cholesky().ok_or(DistLqrError::Degenerate)?;
                let det = chol.l().diagonal().iter().map(|d| d * d).product::<f64>();
                if det <= 0.0 || min_symmetric_eigenvalue(cov) <= PSD_TOL {
                    return Err(DistLqrError::Degenerate);
                }
                let d = x - mean;
                let q = d.dot(&chol.solve(&d));
                let norm = (2.0 * std::f64::consts::PI).powi(self.dim as i32) * det;
                Ok((-0.5 * q).exp() / norm.sqrt())
            }
            NoiseKind::UniformBox { lo, hi } => {
                let inside = (0..self.dim).all(|i| x[i] >= lo[i] && x[i] <= hi[i]);
                if inside {
                    Ok(1.0 / (hi - lo).product())
                } else {
                    Ok(0.0)
                }
            }
            NoiseKind::GaussianMixture { weights, components } => {
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w * c.pdf(x)?;
                }
                Ok(acc)
            }
            NoiseKind::LinearPushforward { map, blocks } => {
                if !map.is_square() {
                    return Err(DistLqrError::Degenerate);
                }
                let det = map.determinant().abs();
                if det < 1e-300 {
                    return Err(DistLqrError::Degenerate);
                }
                let u = map.clone().lu().solve(x).ok_or(DistLqrError::Degenerate)?;
                let mut off = 0;
                let mut dens = 1.0 / det;
                for b in blocks {
                    dens *= b.pdf(&u.rows(off, b.dim).into_owned())?;
                    off += b.dim;
                }
                Ok(dens)
            }
        }
    }
}

fn block_diag(blocks: impl Iterator<Item = DMatrix<f64>>) -> DMatrix<f64> {
    let blocks: Vec<_> = blocks.collect();
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(&b);
        off += k;
    }
    out
}

/// `Σ_{ijkl} M_ij M_kl E[w_i w_j w_k w_l]` for independent components with
/// raw moments `raw(i, k) = E[w_i^k]`.
fn independent_quartic(m: &DMatrix<f64>, raw: impl Fn(usize, i32) -> f64) -> f64 {
    let n = m.nrows();
    let joint = |idx: [usize; 4]| -> f64 {
        let mut prod = 1.0;
        let mut seen = [false; 4];
        for a in 0..4 {
            if seen[a] {
                continue;
            }
            let mut count = 0;
            for b in a..4 {
                if idx[b] == idx[a] {
                    seen[b] = true;
                    count += 1;
                }
            }
            prod *= raw(idx[a], count);
        }
        prod
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] == 0.0 {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    total += m[(i, j)] * m[(k, l)] * joint([i, j, k, l]);
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn one(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn zero_covariance_samples_are_zero() {
        let noise = NoiseModel::gaussian(DVector::zeros(3), DMatrix::zeros(3, 3)).unwrap();
        let mut rng = substream(1, 0);
        for _ in 0..10 {
            assert_eq!(noise.sample(&mut rng), DVector::zeros(3));
        }
        let mb = noise.moment_bounds();
        assert!(mb.zero_mean);
        assert_eq!((mb.sigma2, mb.sigma4_4), (0.0, 0.0));
        assert_eq!(noise.pdf(&DVector::zeros(3)), Err(DistLqrError::Degenerate));
    }

    #[test]
    fn uniform_samples_stay_in_box() {
        let s = 3f64.sqrt();
        let noise = NoiseModel::uniform_box(one(-s), one(s)).unwrap();
        let mut rng = substream(2, 0);
        for _ in 0..10_000 {
            let v = noise.sample(&mut rng)[0];
            assert!((-s..=s).contains(&v));
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mb = NoiseModel::standard_normal(3).unwrap().moment_bounds();
        assert!((mb.sigma2 - 3.0).abs() < 1e-12);
        assert!((mb.sigma4_4 - 15.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_moments() {
        let s = 3f64.sqrt();
        let mb = NoiseModel::uniform_box(one(-s), one(s)).unwrap().moment_bounds();
        assert!((mb.sigma2 - 1.0).abs() < 1e-12);
        assert!((mb.sigma4_4 - 1.8).abs() < 1e-12);
    }

    #[test]
    fn gaussian_with_mean_fourth_moment() {
        // Scalar N(μ, s²): E w⁴ = μ⁴ + 6μ²s² + 3s⁴.
        let (mu, s2) = (0.7, 0.3);
        let noise = NoiseModel::gaussian(one(mu), DMatrix::from_element(1, 1, s2)).unwrap();
        let mb = noise.moment_bounds();
        assert!(!mb.zero_mean);
        let expect = mu.powi(4) + 6.0 * mu * mu * s2 + 3.0 * s2 * s2;
        assert!((mb.sigma4_4 - expect).abs() < 1e-12);
    }

    #[test]
    fn pdf_values() {
        let std = NoiseModel::standard_normal(1).unwrap();
        assert!((std.pdf(&one(0.0)).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let s = 3f64.sqrt();
        let uni = NoiseModel::uniform_box(one(-s), one(s)).unwrap();
        assert!((uni.pdf(&one(0.0)).unwrap() - 1.0 / (2.0 * s)).abs() < 1e-15);
        assert_eq!(uni.pdf(&one(2.0)).unwrap(), 0.0);

        let [_, _, (_, mix)] = NoiseModel::unit_variance_family();
        let var: f64 = 1.0 - 0.99 * 0.99;
        let expect = (-0.99f64 * 0.99 / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        assert!((mix.pdf(&one(0.0)).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn scalar_densities_integrate_to_one() {
        for (name, noise) in NoiseModel::unit_variance_family() {
            let (a, b, n) = (-8.0, 8.0, 160_000);
            let h = (b - a) / n as f64;
            let total: f64 = (0..n)
                .map(|i| noise.pdf(&one(a + (i as f64 + 0.5) * h)).unwrap() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-4, "{name}: {total}");
        }
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(NoiseModel::uniform_box(one(1.0), one(1.0)).is_err());
        assert!(NoiseModel::gaussian(one(0.0), DMatrix::from_element(1, 1, -1.0)).is_err());
        assert!(NoiseModel::gaussian_mixture(
            vec![0.6, 0.6],
            vec![one(0.0), one(0.0)],
            vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)]
        )
        .is_err());
        let shifted = NoiseModel::gaussian(one(1.0), DMatrix::identity(1, 1)).unwrap();
        assert_eq!(
            NoiseModel::linear_pushforward(DMatrix::identity(1, 1), vec![shifted]),
            Err(DistLqrError::NonZeroMean)
        );
    }

    #[test]
    fn pushforward_moments_match_brute_force_identity_map() {
        // Identity map over two blocks equals a single stacked model.
        let a = NoiseModel::standard_normal(2).unwrap();
        let s = 3f64.sqrt();
        let b = NoiseModel::uniform_box(one(-s), one(s)).unwrap();
        let push = NoiseModel::linear_pushforward(DMatrix::identity(3, 3), vec![a, b]).unwrap();
        let mb = push.moment_bounds();
        assert!((mb.sigma2 - 3.0).abs() < 1e-12);
        // E(g1²+g2²+u²)² = 8 + 1.8 + 2·2·1 = 13.8
        assert!((mb.sigma4_4 - 13.8).abs() < 1e-12);
    }

    #[test]
    fn pushforward_gaussian_matches_closed_form() {
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, -0.5, 0.3, 2.0]);
        let blocks = vec![
            NoiseModel::gaussian(one(0.0), DMatrix::from_element(1, 1, 0.4)).unwrap(),
            NoiseModel::gaussian(one(0.0), DMatrix::from_element(1, 1, 1.7)).unwrap(),
        ];
        let push = NoiseModel::linear_pushforward(f.clone(), blocks).unwrap();
        let cov = &f * DMatrix::from_diagonal(&DVector::from_vec(vec![0.4, 1.7])) * f.transpose();
        let direct = NoiseModel::gaussian(DVector::zeros(3), cov).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, -0.3, 0.0, -0.3, 0.5]);
        assert!((push.quartic_moment(&m) - direct.quartic_moment(&m)).abs() < 1e-10);
        assert!((push.second_moment_matrix() - direct.second_moment_matrix()).norm() < 1e-12);
    }
}
