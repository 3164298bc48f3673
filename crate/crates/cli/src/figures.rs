//! Figure data as CSV. Plotting is left to external tools.

use distlqr_core::linalg::{solve_discounted_riccati, ClosedLoopModel};
use distlqr_core::lqg::{augmented_state, build_augmented, simulate_observer_costs};
use distlqr_core::model_based::{sample_distribution, truncation_bound};
use distlqr_core::model_free::{evaluate_model_free, RolloutConfig};
use distlqr_core::rng::derive_seed;
use distlqr_core::scenarios::{self, TABLE3, TABLE3_SAMPLES, TABLE3_TERMS};
use distlqr_core::sensitivity::{perturbed_closed_loop, Perturbation};
use distlqr_core::stats::{histogram_density, ks_distance, BinRule};
use distlqr_core::{EmpiricalDistribution, HistogramDensity, NoiseModel, PartiallyObservableProblem, TruncatedReturnSpec};
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;
use crate::output::{edf_grid, fmt, Output};

pub const FIG1_SAMPLES: usize = 100_000;
pub const FIG1_BINS: usize = 60;
pub const FIG1_TERMS: usize = 30;
pub const SWEEP_SAMPLES: usize = 30_000;
pub const SWEEP_HORIZON: usize = 100;
pub const SWEEP_TERMS: [usize; 8] = [3, 7, 11, 15, 19, 23, 27, 31];
const GRID_POINTS: usize = 201;

pub struct NoiseHistogram {
    pub label: &'static str,
    pub distribution: EmpiricalDistribution,
    pub histogram: HistogramDensity,
}

/// Scalar example under the three unit-variance noise families.
pub fn fig1_data(seed: u64) -> Result<Vec<NoiseHistogram>, CliError> {
    let prob = scenarios::scalar_example(scenarios::SCALAR_EXAMPLE_GAMMA)?;
    let k = DMatrix::from_element(1, 1, scenarios::SCALAR_EXAMPLE_GAIN);
    let cl = ClosedLoopModel::new(&prob, &k)?;
    let x0 = DVector::from_element(1, 1.0);
    NoiseModel::unit_variance_family()
        .into_iter()
        .map(|(label, noise)| {
            let spec = TruncatedReturnSpec::new(cl.clone(), noise, x0.clone(), FIG1_TERMS)?;
            let d = sample_distribution(&spec, FIG1_SAMPLES, seed)?;
            let h = histogram_density(&d, BinRule::Fixed(FIG1_BINS))?;
            Ok(NoiseHistogram {
                label,
                distribution: d,
                histogram: h,
            })
        })
        .collect()
}

pub struct Sweep {
    pub label: String,
    pub baseline: EmpiricalDistribution,
    pub terms: Vec<usize>,
    pub ks: Vec<f64>,
    /// `c₀γᴺ`, NaN where the bound does not apply.
    pub bound: Vec<f64>,
    pub approximations: Vec<EmpiricalDistribution>,
}

/// Model-based approximations for growing `N` against rollouts.
pub fn fig2_data(gamma: f64, seed: u64) -> Result<Sweep, CliError> {
    let prob = scenarios::data_center(gamma)?;
    let k = solve_discounted_riccati(&prob)?.k;
    let cl = ClosedLoopModel::new(&prob, &k)?;
    let noise = NoiseModel::standard_normal(3)?;
    let x0 = scenarios::ones3();
    let rc = RolloutConfig {
        horizon: SWEEP_HORIZON,
        trajectories: SWEEP_SAMPLES,
        x0: x0.as_slice().to_vec(),
        master_seed: derive_seed(seed, 1),
    };
    let baseline = evaluate_model_free(&prob, &k, &noise, &rc)?;
    let f_max = histogram_density(&baseline, BinRule::FreedmanDiaconis)?.f_max;
    sweep(format!("gamma={gamma}"), baseline, &cl, &noise, &x0, f_max, seed)
}

fn sweep(
    label: String,
    baseline: EmpiricalDistribution,
    cl: &ClosedLoopModel,
    noise: &NoiseModel,
    x0: &DVector<f64>,
    f_max: f64,
    seed: u64,
) -> Result<Sweep, CliError> {
    let sigma2 = noise.moment_bounds().sigma2;
    let mut s = Sweep {
        label,
        baseline,
        terms: SWEEP_TERMS.to_vec(),
        ks: Vec::new(),
        bound: Vec::new(),
        approximations: Vec::new(),
    };
    for (i, n) in SWEEP_TERMS.into_iter().enumerate() {
        let spec = TruncatedReturnSpec::new(cl.clone(), noise.clone(), x0.clone(), n)?;
        let d = sample_distribution(&spec, SWEEP_SAMPLES, derive_seed(seed, 100 + i as u64))?;
        s.ks.push(ks_distance(&d, &s.baseline));
        s.bound
            .push(truncation_bound(cl, x0, sigma2, f_max, n, None).map_or(f64::NAN, |r| r.bound_at_n));
        s.approximations.push(d);
    }
    Ok(s)
}

/// Observer loop at γ = 0.6 with the published observer gain.
pub fn fig4_data(seed: u64) -> Result<Sweep, CliError> {
    let gamma = 0.6;
    let lqr = scenarios::data_center(gamma)?;
    let k = solve_discounted_riccati(&lqr)?.k;
    let prob = PartiallyObservableProblem::new(
        lqr,
        scenarios::data_center_output(),
        NoiseModel::standard_normal(3)?,
        NoiseModel::standard_normal(2)?,
    )?;
    let aug = build_augmented(&prob, &k, &scenarios::published_observer_gain())?;
    let x0 = scenarios::ones3();
    let x_hat0 = DVector::zeros(3);
    let baseline =
        simulate_observer_costs(&prob, &aug, &x0, &x_hat0, SWEEP_HORIZON, SWEEP_SAMPLES, derive_seed(seed, 1))?;
    let f_max = histogram_density(&baseline, BinRule::FreedmanDiaconis)?.f_max;
    sweep(
        format!("lqg;gamma={gamma}"),
        baseline,
        &aug.closed_loop,
        &aug.noise_bar,
        &augmented_state(&x0, &x_hat0),
        f_max,
        seed,
    )
}

pub struct PerturbationPair {
    pub gamma: f64,
    pub eps: f64,
    pub nominal: EmpiricalDistribution,
    pub perturbed: EmpiricalDistribution,
}

pub fn fig3_data(seed: u64) -> Result<Vec<PerturbationPair>, CliError> {
    let noise = NoiseModel::standard_normal(3)?;
    let x0 = scenarios::ones3();
    TABLE3
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let prob = scenarios::data_center(r.gamma)?;
            let k = solve_discounted_riccati(&prob)?.k;
            let cl = ClosedLoopModel::new(&prob, &k)?;
            let pcl = perturbed_closed_loop(&prob, &k, &Perturbation::relative(&prob, &k, r.eps)?)?;
            let row_seed = derive_seed(seed, 30 + row as u64);
            let draw = |cl: ClosedLoopModel| -> Result<EmpiricalDistribution, CliError> {
                let spec = TruncatedReturnSpec::new(cl, noise.clone(), x0.clone(), TABLE3_TERMS)?;
                Ok(sample_distribution(&spec, TABLE3_SAMPLES, row_seed)?)
            };
            Ok(PerturbationPair {
                gamma: r.gamma,
                eps: r.eps,
                nominal: draw(cl)?,
                perturbed: draw(pcl)?,
            })
        })
        .collect()
}

pub fn fig1(out: &mut Output, seed: u64) -> Result<(), CliError> {
    let data = fig1_data(seed)?;
    let mut summary = Vec::new();
    for h in &data {
        out.histogram(&format!("figures/fig1_{}_histogram.csv", h.label), &h.histogram)?;
        let peak = h
            .histogram
            .densities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| 0.5 * (h.histogram.bin_edges[i] + h.histogram.bin_edges[i + 1]))
            .unwrap_or(f64::NAN);
        println!(
            "fig1 {:<9} mean {:.4}  var {:.4}  peak at {:.4}  local maxima {}",
            h.label,
            h.distribution.mean(),
            h.distribution.variance(),
            peak,
            h.histogram.local_maxima()
        );
        summary.push(vec![
            h.label.to_string(),
            fmt(h.distribution.mean()),
            fmt(h.distribution.variance()),
            fmt(peak),
            fmt(h.histogram.f_max),
            h.histogram.local_maxima().to_string(),
        ]);
    }
    out.csv("figures/fig1_summary.csv", "noise,mean,variance,peak_location,f_max,local_maxima", &summary)?;
    Ok(())
}

fn write_sweep(out: &mut Output, stem: &str, s: &Sweep) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = s
        .terms
        .iter()
        .zip(&s.ks)
        .zip(&s.bound)
        .map(|((n, ks), b)| vec![n.to_string(), fmt(*ks), fmt(*b)])
        .collect();
    out.csv(&format!("figures/{stem}_ks.csv"), "N,ks,truncation_bound", &rows)?;
    let mut dists = vec![&s.baseline];
    dists.extend(s.approximations.iter());
    let header = std::iter::once("z,baseline".to_string())
        .chain(s.terms.iter().map(|n| format!("N{n}")))
        .collect::<Vec<_>>()
        .join(",");
    out.csv(&format!("figures/{stem}_edf.csv"), &header, &edf_grid(&dists, GRID_POINTS))?;
    for (n, ks) in s.terms.iter().zip(&s.ks) {
        println!("{stem} {}: N = {n:>2}  KS = {ks:.4}", s.label);
    }
    Ok(())
}

pub fn fig2(out: &mut Output, seed: u64) -> Result<(), CliError> {
    for (i, gamma) in [0.6, 0.8].into_iter().enumerate() {
        let s = fig2_data(gamma, derive_seed(seed, i as u64))?;
        write_sweep(out, &format!("fig2_gamma{gamma}"), &s)?;
    }
    Ok(())
}

pub fn fig3(out: &mut Output, seed: u64) -> Result<(), CliError> {
    for p in fig3_data(seed)? {
        let rows = edf_grid(&[&p.nominal, &p.perturbed], GRID_POINTS);
        out.csv(&format!("figures/fig3_gamma{}_eps{}_edf.csv", p.gamma, p.eps), "z,nominal,perturbed", &rows)?;
        println!(
            "fig3 gamma={} eps={}: sup difference {:.4}",
            p.gamma,
            p.eps,
            ks_distance(&p.nominal, &p.perturbed)
        );
    }
    Ok(())
}

pub fn fig4(out: &mut Output, seed: u64) -> Result<(), CliError> {
    let s = fig4_data(seed)?;
    write_sweep(out, "fig4_lqg", &s)
}
