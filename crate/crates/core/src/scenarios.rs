//! Built-in instances: the three-zone data-centre cooling model, the scalar
//! unit-variance example and the published reference numbers used by the
//! table reproductions.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::DiscountedLqrProblem;

pub fn data_center_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01])
}

/// Data-centre model with `B = Q = R = I`.
pub fn data_center(gamma: f64) -> Result<DiscountedLqrProblem> {
    let eye = DMatrix::identity(3, 3);
    DiscountedLqrProblem::new(data_center_a(), eye.clone(), eye.clone(), eye, gamma)
}

/// Published data-centre gain, reproduced by the Riccati solver at γ = 0.8.
pub fn published_gain() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[56.19, 0.7692, 0.0027, 0.7692, 56.20, 0.7692, 0.0027, 0.7692, 56.19],
    ) * -0.01
}

/// Output matrix measuring the first two zones.
pub fn data_center_output() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
}

pub fn published_observer_gain() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[0.21, 0.01, 0.01, 0.32, 0.0, 2.32])
}

pub fn ones3() -> DVector<f64> {
    DVector::from_element(3, 1.0)
}

/// Scalar `a = b = q = r = 1`.
pub fn scalar_example(gamma: f64) -> Result<DiscountedLqrProblem> {
    let one = DMatrix::from_element(1, 1, 1.0);
    DiscountedLqrProblem::new(one.clone(), one.clone(), one.clone(), one, gamma)
}

pub const SCALAR_EXAMPLE_GAMMA: f64 = 0.6;
pub const SCALAR_EXAMPLE_GAIN: f64 = -0.4684;

/// `(UB, M at 95%, M at 99%)`.
pub const TABLE1: [(f64, usize, usize); 2] = [(0.02, 4000, 6000), (0.01, 15000, 23000)];
pub const TABLE1_HORIZON: usize = 100;

/// `(γ, x₀ entry, c₀, N₀)`.
pub const TABLE2: [(f64, f64, f64, usize); 4] = [
    (0.6, 1.0, 0.5447, 8),
    (0.8, 1.0, 0.5917, 19),
    (0.6, 6.0, 1.7550, 11),
    (0.8, 6.0, 2.6134, 25),
];
pub const TABLE2_TARGET: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub struct Table3Row {
    pub gamma: f64,
    pub eps: f64,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
    pub sup_difference: f64,
    pub upper_bound: f64,
}

pub const TABLE3: [Table3Row; 4] = [
    Table3Row { gamma: 0.6, eps: 0.1, c1_tilde: 6.5, c2_tilde: 4.6, sup_difference: 0.051, upper_bound: 0.33 },
    Table3Row { gamma: 0.6, eps: 0.4, c1_tilde: 20.3, c2_tilde: 11.9, sup_difference: 0.24, upper_bound: 0.52 },
    Table3Row { gamma: 0.8, eps: 0.1, c1_tilde: 12.4, c2_tilde: 9.9, sup_difference: 0.056, upper_bound: 0.53 },
    Table3Row { gamma: 0.8, eps: 0.4, c1_tilde: 30.5, c2_tilde: 20.9, sup_difference: 0.26, upper_bound: 0.80 },
];
pub const TABLE3_TERMS: usize = 30;
pub const TABLE3_SAMPLES: usize = 30_000;
