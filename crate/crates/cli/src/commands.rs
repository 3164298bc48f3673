//! Config-driven subcommands.

use distlqr_core::linalg::{solve_discounted_riccati, ClosedLoopModel};
use distlqr_core::lqg::{augmented_state, build_augmented, lqg_bounds, simulate_observer_costs, steady_state_observer_gain};
use distlqr_core::model_based::{analytic_mean, sample_distribution, truncation_bound, variance_bound_for};
use distlqr_core::model_free::{evaluate_model_free, model_free_bound, plan_sample_size, RolloutConfig};
use distlqr_core::rng::derive_seed;
use distlqr_core::sensitivity::{measure_sup_difference, perturbed_closed_loop, sensitivity_constants, Perturbation};
use distlqr_core::stats::{histogram_density, ks_distance};
use distlqr_core::{PartiallyObservableProblem, TruncatedReturnSpec};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{Mode, Scenario, ScenarioConfig};
use crate::error::CliError;
use crate::report::{rows, Bound, Metadata, ReportFile, Summary};
use crate::Session;

fn resolve_gain(s: &Scenario) -> Result<(DMatrix<f64>, &'static str), CliError> {
    match &s.gain {
        Some(k) => Ok((k.clone(), "config")),
        None => Ok((solve_discounted_riccati(&s.lqr)?.k, "riccati")),
    }
}

/// Input echo: the parsed config with the effective seed filled in.
fn echo(cfg: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    let mut e = cfg.clone();
    e.evaluation.seed = Some(seed);
    e
}

pub fn artifacts(command: &str, cfg: &ScenarioConfig) -> Vec<String> {
    let mode = match command {
        "modelfree" => Mode::Modelfree,
        "lqg" => Mode::Lqg,
        _ => cfg.evaluation.mode,
    };
    let names: &[&str] = match command {
        "riccati" => &["riccati/riccati.json"],
        "perturb" => &["perturb/edf_nominal.csv", "perturb/edf_perturbed.csv", "perturb/perturb.json"],
        _ => match mode {
            Mode::Modelbased => &["modelbased/edf.csv", "modelbased/histogram.csv", "modelbased/report.json"],
            Mode::Modelfree => &["modelfree/edf.csv", "modelfree/histogram.csv", "modelfree/report.json"],
            Mode::Lqg => &["lqg/edf.csv", "lqg/edf_rollouts.csv", "lqg/histogram.csv", "lqg/report.json"],
        },
    };
    names
        .iter()
        .filter(|n| {
            let json = n.ends_with(".json");
            cfg.output.wants(if json { crate::config::Format::Json } else { crate::config::Format::Csv })
        })
        .map(|n| n.to_string())
        .collect()
}

#[derive(Serialize)]
struct RiccatiResult {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    iterations: usize,
    spectral_radius: f64,
    closed_loop_norm: f64,
    lyapunov_residual: f64,
}

pub fn riccati(session: &mut Session, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let s = cfg.build()?;
    let sol = solve_discounted_riccati(&s.lqr)?;
    let cl = ClosedLoopModel::new(&s.lqr, &sol.k)?;
    println!("P* =\n{:.6}", sol.p);
    println!("K* =\n{:.6}", sol.k);
    println!("spectral radius of A + BK*: {:.6}", cl.spec_radius);
    let result = RiccatiResult {
        p: rows(&sol.p),
        k: rows(&sol.k),
        iterations: sol.iterations,
        spectral_radius: cl.spec_radius,
        closed_loop_norm: cl.rho_k,
        lyapunov_residual: cl.lyapunov_residual(),
    };
    let report = ReportFile::new(Metadata::new("riccati", session.seed), echo(cfg, session.seed), result);
    session.out.json("riccati/riccati.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct ModelBasedResult {
    mode: Mode,
    gain_source: &'static str,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    n_terms: usize,
    summary: Summary,
    analytic_mean: Bound<f64>,
    variance_bound: Bound<distlqr_core::model_based::VarianceBoundReport>,
    truncation_bound: Bound<distlqr_core::TruncationBoundReport>,
    f_max: f64,
    histogram_bins: usize,
}

#[derive(Serialize)]
struct ModelFreeResult {
    mode: Mode,
    gain_source: &'static str,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    summary: Summary,
    analytic_mean: Bound<f64>,
    bound: Bound<distlqr_core::ModelFreeBoundReport>,
    sample_plan: Option<Bound<distlqr_core::model_free::SamplePlan>>,
    f_max: f64,
    histogram_bins: usize,
}

#[derive(Serialize)]
struct LqgResult {
    mode: Mode,
    gain_source: &'static str,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    observer_gain_source: &'static str,
    augmented_spectral_radius: f64,
    augmented_norm: f64,
    n_terms: usize,
    horizon: usize,
    summary: Summary,
    rollout_summary: Summary,
    ks_model_vs_rollouts: f64,
    analytic_mean: Bound<f64>,
    bounds: Bound<distlqr_core::lqg::LqgBoundsReport>,
    f_max: f64,
}

pub fn evaluate(session: &mut Session, cfg: &ScenarioConfig, mode: Mode) -> Result<(), CliError> {
    let s = cfg.build()?;
    let ev = &cfg.evaluation;
    let seed = session.seed;
    let (k, gain_source) = resolve_gain(&s)?;
    let input = echo(cfg, seed);
    let sigma2 = s.noise.moment_bounds().sigma2;
    match mode {
        Mode::Modelbased => {
            let cl = ClosedLoopModel::new(&s.lqr, &k)?;
            let spec = TruncatedReturnSpec::new(cl.clone(), s.noise.clone(), s.x0.clone(), ev.n_terms)?;
            let d = sample_distribution(&spec, ev.samples, seed)?;
            let h = histogram_density(&d, cfg.bin_rule())?;
            let result = ModelBasedResult {
                mode,
                gain_source,
                k: rows(&k),
                n_terms: ev.n_terms,
                summary: Summary::of(&d),
                analytic_mean: session.na.check("analytic mean", analytic_mean(&cl, &s.x0, &s.noise))?,
                variance_bound: session.na.check("variance bound", variance_bound_for(&cl, &s.x0, &s.noise))?,
                truncation_bound: session.na.check(
                    "truncation bound",
                    truncation_bound(&cl, &s.x0, sigma2, h.f_max, ev.n_terms, ev.target),
                )?,
                f_max: h.f_max,
                histogram_bins: h.bins(),
            };
            println!("model-based: M = {}, N = {}, mean = {:.6}", d.len(), ev.n_terms, d.mean());
            session.out.edf("modelbased/edf.csv", &d)?;
            session.out.histogram("modelbased/histogram.csv", &h)?;
            let report = ReportFile::new(Metadata::new("evaluate", seed), input, result);
            session.out.json("modelbased/report.json", &report)?;
        }
        Mode::Modelfree => {
            let rc = RolloutConfig {
                horizon: ev.horizon,
                trajectories: ev.samples,
                x0: s.x0.as_slice().to_vec(),
                master_seed: seed,
            };
            let d = evaluate_model_free(&s.lqr, &k, &s.noise, &rc)?;
            let h = histogram_density(&d, cfg.bin_rule())?;
            let cl = ClosedLoopModel::new(&s.lqr, &k);
            let bound = match &cl {
                Ok(cl) => session.na.check(
                    "model-free bound",
                    model_free_bound(cl, &s.x0, sigma2, h.f_max, ev.horizon, ev.samples, ev.delta, ev.c3.into()),
                )?,
                Err(e) => session.na.skip("model-free bound", e.to_string()),
            };
            let analytic = match &cl {
                Ok(cl) => session.na.check("analytic mean", analytic_mean(cl, &s.x0, &s.noise))?,
                Err(e) => session.na.skip("analytic mean", e.to_string()),
            };
            let sample_plan = match ev.target {
                Some(t) => Some(match bound.value() {
                    Some(b) => Bound::Applicable {
                        value: plan_sample_size(t, ev.delta, b.truncation_term)?,
                    },
                    None => session.na.skip("sample plan", "model-free bound not applicable".into()),
                }),
                None => None,
            };
            println!("model-free: M = {}, T = {}, mean = {:.6}", d.len(), ev.horizon, d.mean());
            let result = ModelFreeResult {
                mode,
                gain_source,
                k: rows(&k),
                summary: Summary::of(&d),
                analytic_mean: analytic,
                bound,
                sample_plan,
                f_max: h.f_max,
                histogram_bins: h.bins(),
            };
            session.out.edf("modelfree/edf.csv", &d)?;
            session.out.histogram("modelfree/histogram.csv", &h)?;
            let report = ReportFile::new(Metadata::new("modelfree", seed), input, result);
            session.out.json("modelfree/report.json", &report)?;
        }
        Mode::Lqg => {
            let c = s
                .c
                .clone()
                .ok_or_else(|| CliError::config("system.C: required for lqg evaluation"))?;
            let obs = s.obs_noise.clone().expect("observation noise is built whenever C is present");
            let prob = PartiallyObservableProblem::new(s.lqr.clone(), c, s.noise.clone(), obs)
                .map_err(|e| CliError::config(format!("system.C/obs_noise: {e}")))?;
            let (l, observer_gain_source) = match &s.l {
                Some(l) => (l.clone(), "config"),
                None => (steady_state_observer_gain(&prob)?, "steady_state_filter"),
            };
            let aug = build_augmented(&prob, &k, &l)?;
            let x_bar = augmented_state(&s.x0, &s.x_hat0);
            let spec = aug.return_spec(x_bar.clone(), ev.n_terms)?;
            let d = sample_distribution(&spec, ev.samples, seed)?;
            let mc = simulate_observer_costs(&prob, &aug, &s.x0, &s.x_hat0, ev.horizon, ev.samples, derive_seed(seed, 1))?;
            let h = histogram_density(&d, cfg.bin_rule())?;
            let result = LqgResult {
                mode,
                gain_source,
                k: rows(&k),
                l: rows(&l),
                observer_gain_source,
                augmented_spectral_radius: aug.closed_loop.spec_radius,
                augmented_norm: aug.rho_bar(),
                n_terms: ev.n_terms,
                horizon: ev.horizon,
                summary: Summary::of(&d),
                rollout_summary: Summary::of(&mc),
                ks_model_vs_rollouts: ks_distance(&d, &mc),
                analytic_mean: session
                    .na
                    .check("analytic mean", analytic_mean(&aug.closed_loop, &x_bar, &aug.noise_bar))?,
                bounds: session
                    .na
                    .check("augmented bounds", lqg_bounds(&aug, &x_bar, h.f_max, ev.n_terms, ev.target))?,
                f_max: h.f_max,
            };
            println!(
                "lqg: M = {}, N = {}, mean = {:.6}, rollout mean = {:.6}, KS = {:.4}",
                d.len(),
                ev.n_terms,
                d.mean(),
                mc.mean(),
                result.ks_model_vs_rollouts
            );
            session.out.edf("lqg/edf.csv", &d)?;
            session.out.edf("lqg/edf_rollouts.csv", &mc)?;
            session.out.histogram("lqg/histogram.csv", &h)?;
            let report = ReportFile::new(Metadata::new("lqg", seed), input, result);
            session.out.json("lqg/report.json", &report)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PerturbResult {
    gain_source: &'static str,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    eps_a: f64,
    eps_b: f64,
    n_terms: usize,
    samples: usize,
    nominal: Summary,
    perturbed: Summary,
    measured_sup_difference: f64,
    sensitivity: Bound<distlqr_core::SensitivityReport>,
    theorem_bound_dominates: Option<bool>,
}

pub fn perturb(session: &mut Session, cfg: &ScenarioConfig) -> Result<(), CliError> {
    let s = cfg.build()?;
    let ev = &cfg.evaluation;
    let p = ev
        .perturbation
        .ok_or_else(|| CliError::config("evaluation.perturbation: required for perturb"))?;
    let seed = session.seed;
    let (k, gain_source) = resolve_gain(&s)?;
    let pert = Perturbation::new(&s.lqr.a * p.eps_a, &s.lqr.b * p.eps_b, &k)?;
    let cl = ClosedLoopModel::new(&s.lqr, &k)?;
    let pcl = perturbed_closed_loop(&s.lqr, &k, &pert)?;
    // Both sample sets share one seed.
    let nominal = sample_distribution(
        &TruncatedReturnSpec::new(cl.clone(), s.noise.clone(), s.x0.clone(), ev.n_terms)?,
        ev.samples,
        seed,
    )?;
    let perturbed = sample_distribution(
        &TruncatedReturnSpec::new(pcl.clone(), s.noise.clone(), s.x0.clone(), ev.n_terms)?,
        ev.samples,
        seed,
    )?;
    let sup = measure_sup_difference(&nominal, &perturbed);
    let f_tilde = histogram_density(&perturbed, cfg.bin_rule())?.f_max;
    let sigma2 = s.noise.moment_bounds().sigma2;
    let sensitivity = session.na.check(
        "sensitivity bound",
        sensitivity_constants(&cl, &pcl, &pert.d_a_k, &s.x0, sigma2, f_tilde),
    )?;
    let theorem = sensitivity.value().and_then(|r| r.theorem_bound);
    if sensitivity.value().is_some_and(|r| !r.applicable) {
        session
            .na
            .skipped
            .push("sensitivity bound: perturbation too large for the Lyapunov lemma".into());
    }
    println!("measured sup difference: {sup:.4}");
    if let Some(b) = theorem {
        println!("theorem bound: {b:.4}");
    }
    let result = PerturbResult {
        gain_source,
        k: rows(&k),
        eps_a: p.eps_a,
        eps_b: p.eps_b,
        n_terms: ev.n_terms,
        samples: ev.samples,
        nominal: Summary::of(&nominal),
        perturbed: Summary::of(&perturbed),
        measured_sup_difference: sup,
        sensitivity,
        theorem_bound_dominates: theorem.map(|b| sup <= b),
    };
    session.out.edf("perturb/edf_nominal.csv", &nominal)?;
    session.out.edf("perturb/edf_perturbed.csv", &perturbed)?;
    let report = ReportFile::new(Metadata::new("perturb", seed), echo(cfg, seed), result);
    session.out.json("perturb/perturb.json", &report)?;
    Ok(())
}
