//! Recomputation of the published data-centre tables.

use distlqr_core::linalg::{solve_discounted_riccati, ClosedLoopModel};
use distlqr_core::model_based::{required_n, sample_distribution, truncation_bound};
use distlqr_core::model_free::{plan_sample_size, truncation_term, C3Variant};
use distlqr_core::rng::derive_seed;
use distlqr_core::scenarios::{self, TABLE1, TABLE1_HORIZON, TABLE2, TABLE2_TARGET, TABLE3, TABLE3_SAMPLES, TABLE3_TERMS};
use distlqr_core::sensitivity::{measure_sup_difference, perturbed_closed_loop, sensitivity_constants, Perturbation};
use distlqr_core::stats::{histogram_density, BinRule};
use distlqr_core::{NoiseModel, TruncatedReturnSpec};
use nalgebra::DVector;

use crate::error::CliError;
use crate::output::{fmt, Output};

pub const HEADER: &str = "table,row,label,quantity,paper_value,computed_value,abs_dev";

/// Samples used for the density estimate behind `f_max`.
pub const F_MAX_SAMPLES: usize = 100_000;
pub const F_MAX_TERMS: usize = 30;
/// `E‖w‖²` for three-dimensional standard normal noise.
const SIGMA2: f64 = 3.0;
const DELTAS: [f64; 2] = [0.05, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub table: &'static str,
    pub row: usize,
    pub label: String,
    pub quantity: &'static str,
    /// NaN where no published value exists.
    pub paper_value: f64,
    pub computed_value: f64,
}

impl TableRow {
    pub fn abs_dev(&self) -> f64 {
        (self.computed_value - self.paper_value).abs()
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.table.to_string(),
            self.row.to_string(),
            self.label.clone(),
            self.quantity.to_string(),
            fmt(self.paper_value),
            fmt(self.computed_value),
            fmt(self.abs_dev()),
        ]
    }
}

/// Lookup helper for callers that inspect specific cells.
pub fn cell<'a>(rows: &'a [TableRow], row: usize, quantity: &str) -> Option<&'a TableRow> {
    rows.iter().find(|r| r.row == row && r.quantity == quantity)
}

fn optimal_loop(gamma: f64) -> Result<(distlqr_core::DiscountedLqrProblem, ClosedLoopModel), CliError> {
    let prob = scenarios::data_center(gamma)?;
    let k = solve_discounted_riccati(&prob)?.k;
    let cl = ClosedLoopModel::new(&prob, &k)?;
    Ok((prob, cl))
}

/// Freedman–Diaconis peak density of the truncated return from `x0`.
pub fn estimate_f_max(cl: &ClosedLoopModel, x0: &DVector<f64>, seed: u64) -> Result<f64, CliError> {
    let spec = TruncatedReturnSpec::new(cl.clone(), NoiseModel::standard_normal(3)?, x0.clone(), F_MAX_TERMS)?;
    let d = sample_distribution(&spec, F_MAX_SAMPLES, seed)?;
    Ok(histogram_density(&d, BinRule::FreedmanDiaconis)?.f_max)
}

/// Sample sizes from DKW inversion at `T = 100`; the truncation term is
/// evaluated at both discount factors and the larger one is used.
pub fn table1(seed: u64) -> Result<Vec<TableRow>, CliError> {
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for (i, gamma) in [0.6, 0.8].into_iter().enumerate() {
        let (_, cl) = optimal_loop(gamma)?;
        let x0 = scenarios::ones3();
        let f_max = estimate_f_max(&cl, &x0, derive_seed(seed, 10 + i as u64))?;
        let t = truncation_term(&cl, &x0, SIGMA2, f_max, TABLE1_HORIZON, C3Variant::DiscountedRadius)?;
        worst = worst.max(t);
        out.push(TableRow {
            table: "table1",
            row: i,
            label: format!("gamma={gamma};T={TABLE1_HORIZON}"),
            quantity: "truncation_term",
            paper_value: f64::NAN,
            computed_value: t,
        });
    }
    let mut row = 2;
    for (ub, m95, m99) in TABLE1 {
        for (delta, published) in DELTAS.into_iter().zip([m95, m99]) {
            let plan = plan_sample_size(ub, delta, worst)?;
            let label = format!("UB={ub};delta={delta}");
            out.push(TableRow {
                table: "table1",
                row,
                label: label.clone(),
                quantity: "M_raw",
                paper_value: f64::NAN,
                computed_value: plan.m_raw as f64,
            });
            out.push(TableRow {
                table: "table1",
                row,
                label,
                quantity: "M_rounded",
                paper_value: published as f64,
                computed_value: plan.m_rounded as f64,
            });
            row += 1;
        }
    }
    Ok(out)
}

/// Truncation constants `c₀` and the implied `N₀` for a 0.01 error level.
pub fn table2(seed: u64) -> Result<Vec<TableRow>, CliError> {
    let mut out = Vec::new();
    for (row, (gamma, entry, c0_published, n0_published)) in TABLE2.into_iter().enumerate() {
        let (_, cl) = optimal_loop(gamma)?;
        let x0 = DVector::from_element(3, entry);
        let f_max = estimate_f_max(&cl, &x0, derive_seed(seed, 20 + row as u64))?;
        let rep = truncation_bound(&cl, &x0, SIGMA2, f_max, F_MAX_TERMS, Some(TABLE2_TARGET))?;
        let label = format!("gamma={gamma};x0={entry}");
        let mk = |quantity, paper_value, computed_value| TableRow {
            table: "table2",
            row,
            label: label.clone(),
            quantity,
            paper_value,
            computed_value,
        };
        out.push(mk("f_max", f64::NAN, f_max));
        out.push(mk("c0", c0_published, rep.c0));
        out.push(mk("N0", n0_published as f64, rep.n_required.unwrap_or(0) as f64));
        out.push(mk(
            "N0_from_published_c0",
            n0_published as f64,
            required_n(c0_published, TABLE2_TARGET, gamma) as f64,
        ));
    }
    Ok(out)
}

/// Sup-CDF differences under relative model perturbations and the bound
/// constants, with nominal and perturbed samples drawn from one seed.
pub fn table3(seed: u64) -> Result<Vec<TableRow>, CliError> {
    let mut out = Vec::new();
    let x0 = scenarios::ones3();
    let noise = NoiseModel::standard_normal(3)?;
    for (row, r) in TABLE3.iter().enumerate() {
        let (prob, cl) = optimal_loop(r.gamma)?;
        let k = cl.gain.clone().expect("closed loop built from a gain");
        let pert = Perturbation::relative(&prob, &k, r.eps)?;
        let pcl = perturbed_closed_loop(&prob, &k, &pert)?;
        let row_seed = derive_seed(seed, 30 + row as u64);
        let nominal = sample_distribution(
            &TruncatedReturnSpec::new(cl.clone(), noise.clone(), x0.clone(), TABLE3_TERMS)?,
            TABLE3_SAMPLES,
            row_seed,
        )?;
        let perturbed = sample_distribution(
            &TruncatedReturnSpec::new(pcl.clone(), noise.clone(), x0.clone(), TABLE3_TERMS)?,
            TABLE3_SAMPLES,
            row_seed,
        )?;
        let sup = measure_sup_difference(&nominal, &perturbed);
        let f_tilde = histogram_density(&perturbed, BinRule::FreedmanDiaconis)?.f_max;
        let rep = sensitivity_constants(&cl, &pcl, &pert.d_a_k, &x0, SIGMA2, f_tilde)?;
        let label = format!("gamma={};eps={}", r.gamma, r.eps);
        let mk = |quantity, paper_value, computed_value: Option<f64>| TableRow {
            table: "table3",
            row,
            label: label.clone(),
            quantity,
            paper_value,
            computed_value: computed_value.unwrap_or(f64::NAN),
        };
        out.push(mk("c1_tilde", r.c1_tilde, rep.c1_tilde));
        out.push(mk("c2_tilde", r.c2_tilde, rep.c2_tilde));
        out.push(mk("sup_difference", r.sup_difference, Some(sup)));
        out.push(mk("upper_bound", r.upper_bound, rep.theorem_bound));
        out.push(mk("f_tilde_max", f64::NAN, Some(f_tilde)));
    }
    Ok(out)
}

pub fn write(out: &mut Output, name: &str, rows: &[TableRow]) -> Result<(), CliError> {
    let cells: Vec<Vec<String>> = rows.iter().map(TableRow::cells).collect();
    out.csv(&format!("tables/{name}.csv"), HEADER, &cells)?;
    Ok(())
}

pub fn print(rows: &[TableRow]) {
    println!("{:<8} {:>3} {:<22} {:<18} {:>14} {:>14} {:>12}", "table", "row", "label", "quantity", "published", "computed", "abs_dev");
    for r in rows {
        println!(
            "{:<8} {:>3} {:<22} {:<18} {:>14} {:>14.6} {:>12}",
            r.table,
            r.row,
            r.label,
            r.quantity,
            if r.paper_value.is_nan() { "-".to_string() } else { format!("{}", r.paper_value) },
            r.computed_value,
            if r.paper_value.is_nan() { "-".to_string() } else { format!("{:.4}", r.abs_dev()) },
        );
    }
}
