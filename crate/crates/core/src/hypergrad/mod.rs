//! Randomized-truncation Neumann estimator of the bilevel hypergradient and
//! Monte-Carlo certification of its bias and variance bounds.

mod certify;
mod estimator;
mod matrix_product;

pub use certify::{certify_bias_variance, BiasVarianceReport};
pub use estimator::{
    expected_hypergradient, neumann_hypergradient, neumann_hypergradient_with_p,
    surrogate_gradient_exact, HypergradSample,
};
pub use matrix_product::{matrix_product_norm_check, MatrixProductReport};
