//! Numerical laboratory for mixed-sign moments of centered multivariate
//! Gaussian vectors and statistical verification of Gaussian product
//! inequality (GPI) bounds.
//!
//! The crate computes `E[prod_J |X_j|^(-2 nu_j) * prod_Jc |X_i|^(2 nu_i)]`
//! for `X ~ N_d(0, Sigma)` by several independent routes, evaluates the
//! right-hand sides of the mixed-sign lower and upper bounds (Schur
//! complement shrink factors, convex upper bounds, AM-GM corollary), and
//! runs randomized sweeps that check each inequality at configurable
//! statistical confidence.
//!
//! Module map:
//! - [`linalg`]: dense symmetric linear algebra, block partitions, Schur
//!   complements, block-inverse formulas, Loewner tests, random correlations.
//! - [`special`]: gamma function.
//! - [`quad`]: adaptive Gauss-Kronrod quadrature and the transformed-axis
//!   integrator for the endpoint-singular s-space integrals.
//! - [`moments`]: the four moment computation routes.
//! - [`bounds`]: bound evaluators, inequality verdicts, convex-order and
//!   elliptical checks.
//! - [`harness`]: randomized sweeps, escalation, reports, regeneration.
//! - [`rng`]: deterministic seeded substreams.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod moments;
pub mod quad;
pub mod rng;
pub mod special;

pub use error::{BoundError, HarnessError, LinalgError, MomentError};
pub use linalg::{
    block_inverse, block_inverse_variant2, loewner_leq, random_correlation, schur_complement,
    BlockView, CovMatrix, IndexPartition, Matrix,
};
pub use moments::{
    auto_mixed_moment, gaussian_laplace_factor, mc_mixed_moment, s_representation_moment,
    transformed_covariance, univariate_abs_moment, wick_moment, ExponentSpec, InnerMethod,
    MomentEstimate, MomentMethod,
};
