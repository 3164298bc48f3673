//! Distributional policy evaluation for discounted linear-quadratic control.
//!
//! The return of a fixed linear policy under i.i.d. disturbances is a random
//! variable; this crate samples it (model-based and from rollouts), builds
//! empirical distributions, and evaluates the analytical bounds on variance,
//! truncation error, sample complexity and model-perturbation sensitivity.

pub mod error;
pub mod linalg;
pub mod lqg;
pub mod model_based;
pub mod model_free;
pub mod noise;
pub mod rng;
pub mod scenarios;
pub mod sensitivity;
pub mod stats;

pub use error::{DistLqrError, Result};
pub use linalg::{
    kron_gap, matrix_norms, solve_discounted_lyapunov, solve_discounted_riccati, ClosedLoopModel,
    DiscountedLqrProblem, KronGap, MatrixNorms, RiccatiSolution,
};
pub use lqg::{build_augmented, AugmentedSystem, PartiallyObservableProblem};
pub use model_based::{TruncatedReturnSpec, TruncationBoundReport};
pub use model_free::{ModelFreeBoundReport, RolloutConfig};
pub use noise::{MomentBounds, NoiseModel};
pub use sensitivity::{Perturbation, SensitivityReport};
pub use stats::{BinRule, EmpiricalDistribution, HistogramDensity};
