use distlqr_core::error::DistLqrError;
use distlqr_core::linalg::{solve_discounted_riccati, DiscountedLqrProblem};
use distlqr_core::lqg::{
    augmented_state, build_augmented, lqg_bounds, simulate_observer_costs, simulate_observer_loop, AugmentedSystem,
    PartiallyObservableProblem,
};
use distlqr_core::model_based::{analytic_mean, sample_bellman_backups, sample_distribution, sample_returns};
use distlqr_core::noise::NoiseModel;
use distlqr_core::rng::{derive_seed, substream};
use distlqr_core::scenarios;
use distlqr_core::stats::{ks_distance, EmpiricalDistribution};
use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

const SEED: u64 = 0x1A6;

fn observer_instance(gamma: f64) -> (PartiallyObservableProblem, AugmentedSystem) {
    let lqr = scenarios::data_center(gamma).unwrap();
    let k = solve_discounted_riccati(&lqr).unwrap().k;
    let prob = PartiallyObservableProblem::new(
        lqr,
        scenarios::data_center_output(),
        NoiseModel::standard_normal(3).unwrap(),
        NoiseModel::standard_normal(2).unwrap(),
    )
    .unwrap();
    let aug = build_augmented(&prob, &k, &scenarios::published_observer_gain()).unwrap();
    (prob, aug)
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().schur().complex_eigenvalues().iter().cloned().collect()
}

#[test]
fn eigenvalues_are_block_union() {
    let mut rng = substream(SEED, 0);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(1..=3);
        let p = rng.random_range(1..=2);
        let m = rng.random_range(1..=2);
        let mut rand_m = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..s));
        let a = rand_m(n, n, 0.5);
        let b = rand_m(n, p, 0.5);
        let c = rand_m(m, n, 0.5);
        let k = rand_m(p, n, 0.5);
        let l = rand_m(n, m, 0.5);
        let lqr = DiscountedLqrProblem::new(a.clone(), b.clone(), DMatrix::identity(n, n), DMatrix::identity(p, p), 0.9)
            .unwrap();
        let prob = PartiallyObservableProblem::new(
            lqr,
            c.clone(),
            NoiseModel::standard_normal(n).unwrap(),
            NoiseModel::standard_normal(m).unwrap(),
        )
        .unwrap();
        let Ok(aug) = build_augmented(&prob, &k, &l) else { continue };
        let mut blocks = eigenvalues(&(&a + &b * &k));
        blocks.extend(eigenvalues(&(&a - &l * &c)));
        let mut whole = eigenvalues(&aug.a_bar);
        for z in blocks {
            let (idx, dist) = whole
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (w - z).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(dist < 1e-8, "{z} unmatched ({dist})");
            whole.swap_remove(idx);
        }
        assert!(aug.a_bar.view((n, 0), (n, n)).iter().all(|&v| v == 0.0));
        checked += 1;
    }
}

#[test]
fn published_observer_loop_is_stable_but_not_contractive() {
    let (_, aug) = observer_instance(0.6);
    assert!(aug.closed_loop.spec_radius < 1.0);
    assert!(aug.rho_bar() > 1.0);
    let x_bar = augmented_state(&scenarios::ones3(), &DVector::zeros(3));
    let err = lqg_bounds(&aug, &x_bar, 0.1, 30, Some(0.01)).unwrap_err();
    assert!(matches!(err, DistLqrError::NormTooLarge { .. }));
}

#[test]
fn augmented_noise_moments() {
    let (_, aug) = observer_instance(0.6);
    let cov = &aug.f * aug.f.transpose();
    assert!((aug.noise_bar.second_moment_matrix() - &cov).norm() < 1e-12);
    let m = 1_000_000;
    let mut rng = substream(SEED, 1);
    let draws: Vec<DVector<f64>> = (0..m).map(|_| aug.noise_bar.sample(&mut rng)).collect();
    let mean = draws.iter().fold(DVector::zeros(6), |acc, d| acc + d) / m as f64;
    for i in 0..6 {
        let se = (cov[(i, i)] / m as f64).sqrt();
        assert!(mean[i].abs() <= 5.0 * se, "mean[{i}] = {}", mean[i]);
        for j in 0..6 {
            let prods: Vec<f64> = draws.iter().map(|d| d[i] * d[j]).collect();
            let d = EmpiricalDistribution::from_samples(prods).unwrap();
            assert!((d.mean() - cov[(i, j)]).abs() <= 5.0 * d.std_error() + 1e-12, "cov[{i},{j}]");
        }
    }
}

#[test]
fn augmented_return_mean() {
    let (_, aug) = observer_instance(0.6);
    let x_bar = augmented_state(&scenarios::ones3(), &DVector::zeros(3));
    let expect = analytic_mean(&aug.closed_loop, &x_bar, &aug.noise_bar).unwrap();
    let spec = aug.return_spec(x_bar, 30).unwrap();
    let d = EmpiricalDistribution::from_samples(sample_returns(&spec, 100_000, SEED)).unwrap();
    assert!((d.mean() - expect).abs() <= 4.0 * d.std_error(), "{} vs {expect}", d.mean());
}

#[test]
fn cost_identity_per_trajectory() {
    let (prob, aug) = observer_instance(0.6);
    for i in 0..200 {
        let c = simulate_observer_loop(&prob, &aug, &scenarios::ones3(), &DVector::zeros(3), 100, SEED, i).unwrap();
        assert!((c.direct - c.augmented).abs() <= 1e-9 * c.direct.abs().max(1.0), "{c:?}");
    }
}

#[test]
fn observer_rollouts_agree_with_model_based_samples() {
    let (prob, aug) = observer_instance(0.6);
    let x0 = scenarios::ones3();
    let mc = simulate_observer_costs(&prob, &aug, &x0, &DVector::zeros(3), 100, 30_000, SEED).unwrap();
    let spec = aug.return_spec(augmented_state(&x0, &DVector::zeros(3)), 30).unwrap();
    let based = sample_distribution(&spec, 30_000, SEED + 1).unwrap();
    let ks = ks_distance(&mc, &based);
    assert!(ks <= 0.03, "{ks}");
}

#[test]
fn augmented_bellman_fixed_point() {
    let (_, aug) = observer_instance(0.6);
    let spec = aug.return_spec(augmented_state(&scenarios::ones3(), &DVector::zeros(3)), 30).unwrap();
    let longer = distlqr_core::TruncatedReturnSpec { n_terms: 31, ..spec.clone() };
    let lhs = sample_distribution(&longer, 200_000, derive_seed(SEED, 1)).unwrap();
    let rhs = EmpiricalDistribution::from_samples(sample_bellman_backups(&spec, 200_000, derive_seed(SEED, 2))).unwrap();
    let ks = ks_distance(&lhs, &rhs);
    assert!(ks <= 0.02, "{ks}");
}
