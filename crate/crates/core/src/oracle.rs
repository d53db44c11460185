//! Oracle interfaces.
//!
//! A problem hands out stochastic first- and second-order information through
//! [`StochasticBilevelOracle`]; each `sample_*` call consumes draws from the
//! supplied stream and nothing else, so oracles are stateless and `Sync`.

use crate::constants::ProblemConstants;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::projection::Constraint;
use crate::rng::Stream;

pub trait StochasticBilevelOracle: Sync {
    /// (d1, d2): outer and inner dimensions.
    fn dims(&self) -> (usize, usize);

    /// Unbiased estimate of `grad_y g(x, y)`.
    fn sample_inner_grad(&self, x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> DenseVector;

    /// One draw giving `(grad_x f, grad_y f)` at `(x, y)`.
    fn sample_outer_grads(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        rng: &mut Stream,
    ) -> (DenseVector, DenseVector);

    /// One draw of the cross Jacobian `grad_xy g` (d1 x d2) applied to `v`.
    fn sample_jacobian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector;

    /// One draw of the inner Hessian `grad_yy g` applied to `v`.
    fn sample_hessian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector;

    fn constraint(&self) -> &Constraint;

    fn project(&self, x: &DenseVector) -> DenseVector {
        self.constraint().project(x)
    }

    fn constants(&self) -> &ProblemConstants;
}

/// Ground truth for verification problems.
pub trait ExactOracle: Sync {
    fn y_star(&self, x: &DenseVector) -> DenseVector;
    fn grad_ell(&self, x: &DenseVector) -> DenseVector;
    fn ell(&self, x: &DenseVector) -> f64;
    /// Global minimizer over the feasible set when known.
    fn x_star(&self) -> Option<DenseVector>;
    /// Curvature modulus of the outer objective; `None` when unknown.
    fn mu_ell(&self) -> Option<f64>;
    /// Lipschitz constant of `grad ell`, used as the prox solver's step.
    fn grad_ell_lipschitz(&self) -> f64;
    /// Exact `grad_y g(x, y)`.
    fn inner_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector;
}

/// Exact dense derivatives at a point.
pub trait DenseDerivatives {
    fn grad_x_f(&self, x: &DenseVector, y: &DenseVector) -> DenseVector;
    fn grad_y_f(&self, x: &DenseVector, y: &DenseVector) -> DenseVector;
    /// `grad_xy g`, shape d1 x d2.
    fn jacobian_xy(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix;
    /// `grad_yy g`, shape d2 x d2.
    fn hessian_yy(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix;
}

/// Oracles whose second-order draws can be materialized as matrices.
///
/// Implementors guarantee that `sample_hessian_apply(x, y, v, rng)` performs
/// the same stream consumption and arithmetic as
/// `sample_hessian_matrix(x, y, rng) * v` (likewise for the Jacobian).
pub trait DenseSampling: StochasticBilevelOracle {
    fn sample_hessian_matrix(&self, x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> DenseMatrix;
    fn sample_jacobian_matrix(&self, x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> DenseMatrix;
}
