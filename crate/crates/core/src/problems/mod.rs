//! Concrete bilevel problems: a quadratic family with closed-form ground truth
//! and logistic-regression data hyper-cleaning.

mod dataset;
mod hyperclean;
mod quadratic;

pub use dataset::Dataset;
pub use hyperclean::{make_hyperclean, HyperCleanProblem, HyperCleanSpec};
pub use quadratic::{
    make_quadratic, quadratic_oracles, NoiseLevels, QuadraticBilevel, QuadraticRegime, QuadraticSpec,
};
