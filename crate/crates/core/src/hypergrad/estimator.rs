use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ensure_len, DenseVector};
use crate::oracle::{DenseDerivatives, StochasticBilevelOracle};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq)]
pub struct HypergradSample {
    pub value: DenseVector,
    /// One outer draw, one Jacobian draw and `p` Hessian draws.
    pub draws_used: usize,
    pub p: usize,
}

fn check_args(tmax: usize, c_h: f64) -> Result<()> {
    if tmax < 1 {
        return Err(Error::invalid("tmax must be at least 1"));
    }
    if !(c_h > 0.0 && c_h <= 1.0) {
        return Err(Error::invalid(format!("c_h must lie in (0,1], got {c_h}")));
    }
    Ok(())
}

/// Draw `p` uniformly from `{0, .., tmax-1}` and realize the truncated
/// Neumann estimate of `grad_x f - grad_xy g [grad_yy g]^{-1} grad_y f`.
pub fn neumann_hypergradient<O: StochasticBilevelOracle + ?Sized>(
    oracle: &O,
    x: &DenseVector,
    y: &DenseVector,
    tmax: usize,
    c_h: f64,
    rng: &mut Stream,
) -> Result<HypergradSample> {
    check_args(tmax, c_h)?;
    let p = rng.gen_range(0..tmax);
    neumann_hypergradient_with_p(oracle, x, y, tmax, c_h, p, rng)
}

/// The estimator conditioned on a given truncation index `p < tmax`.
///
/// Stream order: outer draw, `p` Hessian draws (applied right to left), then the Jacobian draw.
pub fn neumann_hypergradient_with_p<O: StochasticBilevelOracle + ?Sized>(
    oracle: &O,
    x: &DenseVector,
    y: &DenseVector,
    tmax: usize,
    c_h: f64,
    p: usize,
    rng: &mut Stream,
) -> Result<HypergradSample> {
    check_args(tmax, c_h)?;
    if p >= tmax {
        return Err(Error::invalid(format!("truncation index {p} must be below tmax {tmax}")));
    }
    let (d1, d2) = oracle.dims();
    let l_g = oracle.constants().l_g;
    let step = c_h / l_g;

    let (gx, gy) = oracle.sample_outer_grads(x, y, rng);
    ensure_len(&gx, d1, "outer gradient grad_x f")?;
    ensure_len(&gy, d2, "outer gradient grad_y f")?;

    let mut v = gy;
    for _ in 0..p {
        let hv = oracle.sample_hessian_apply(x, y, &v, rng);
        ensure_len(&hv, d2, "Hessian-vector product")?;
        v -= &hv * step;
    }
    v *= tmax as f64 * step;
    let jv = oracle.sample_jacobian_apply(x, y, &v, rng);
    ensure_len(&jv, d1, "Jacobian-vector product")?;

    Ok(HypergradSample {
        value: gx - jv,
        draws_used: 2 + p,
        p,
    })
}

/// `grad_x f - grad_xy g [grad_yy g]^{-1} grad_y f` by a direct solve.
pub fn surrogate_gradient_exact<P: DenseDerivatives + ?Sized>(
    problem: &P,
    x: &DenseVector,
    y: &DenseVector,
) -> Result<DenseVector> {
    let gx = problem.grad_x_f(x, y);
    let gy = problem.grad_y_f(x, y);
    let j = problem.jacobian_xy(x, y);
    let h = problem.hessian_yy(x, y);
    if h.nrows() != gy.len() || h.ncols() != gy.len() || j.ncols() != gy.len() || j.nrows() != gx.len() {
        return Err(Error::DimensionMismatch {
            context: "dense derivatives",
            expected: gy.len(),
            got: h.nrows(),
        });
    }
    if gy.iter().all(|&v| v == 0.0) {
        return Ok(gx);
    }
    let w = match h.clone().cholesky() {
        Some(ch) => ch.solve(&gy),
        None => h
            .lu()
            .solve(&gy)
            .ok_or_else(|| Error::Singular("inner Hessian".into()))?,
    };
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("inner Hessian".into()));
    }
    Ok(gx - j * w)
}

/// Exact `E[h]` for oracles whose second-order draws are independent and
/// unbiased: `grad_x f - J (c_h/L_g) sum_{p<tmax} (I - c_h H / L_g)^p grad_y f`.
pub fn expected_hypergradient<P: DenseDerivatives + ?Sized>(
    problem: &P,
    l_g: f64,
    x: &DenseVector,
    y: &DenseVector,
    tmax: usize,
    c_h: f64,
) -> Result<DenseVector> {
    check_args(tmax, c_h)?;
    let gx = problem.grad_x_f(x, y);
    let gy = problem.grad_y_f(x, y);
    let j = problem.jacobian_xy(x, y);
    let h = problem.hessian_yy(x, y);
    let step = c_h / l_g;
    let mut acc = DenseVector::zeros(gy.len());
    let mut v = gy;
    for _ in 0..tmax {
        acc += &v;
        let hv = &h * &v;
        v -= hv * step;
    }
    Ok(gx - j * (acc * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::problems::QuadraticBilevel;
    use crate::projection::Constraint;
    use crate::rng::stream;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_vec(x.to_vec())
    }

    /// g = 1/2 y' diag(1,2) y + y'x (so grad_xy g = I), f = (1,1)'y.
    fn diag_problem() -> QuadraticBilevel {
        QuadraticBilevel::from_parts(
            DenseMatrix::from_diagonal(&v(&[1.0, 2.0])),
            -DenseMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            DenseMatrix::zeros(2, 2),
            v(&[1.0, 1.0]),
            Constraint::Unconstrained,
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_hessian_single_term_is_exact() {
        // g = 1/2 |y - x|^2, f = 1/2 |x|^2 + (0,2)'y at x = (1,0)
        let p = QuadraticBilevel::from_parts(
            DenseMatrix::identity(2, 2),
            DenseMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            DenseMatrix::identity(2, 2),
            v(&[0.0, 2.0]),
            Constraint::Unconstrained,
            Default::default(),
        )
        .unwrap();
        let x = v(&[1.0, 0.0]);
        let y = v(&[0.3, -0.2]);
        let mut rng = stream(0);
        let s = neumann_hypergradient(&p, &x, &y, 1, 1.0, &mut rng).unwrap();
        assert_eq!(s.value, v(&[1.0, 2.0]));
        assert_eq!(s.p, 0);
        assert_eq!(s.draws_used, 2);
        assert_eq!(surrogate_gradient_exact(&p, &x, &y).unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn diag_example_enumeration() {
        let p = diag_problem();
        let x = v(&[0.0, 0.0]);
        let y = v(&[0.0, 0.0]);
        let mut rng = stream(1);
        let h0 = neumann_hypergradient_with_p(&p, &x, &y, 2, 1.0, 0, &mut rng).unwrap();
        let h1 = neumann_hypergradient_with_p(&p, &x, &y, 2, 1.0, 1, &mut rng).unwrap();
        assert_eq!(h0.value, v(&[-1.0, -1.0]));
        assert_eq!(h1.value, v(&[-0.5, 0.0]));
        let mean = (h0.value + h1.value) * 0.5;
        assert_eq!(mean, v(&[-0.75, -0.5]));
        let exact = surrogate_gradient_exact(&p, &x, &y).unwrap();
        assert!((exact.clone() - v(&[-1.0, -0.5])).norm() < 1e-15);
        assert!(((mean.clone() - exact).norm() - 0.25).abs() < 1e-15);
        let e = expected_hypergradient(&p, 2.0, &x, &y, 2, 1.0).unwrap();
        assert!((e - mean).norm() < 1e-15);
    }

    #[test]
    fn zero_outer_y_gradient_returns_grad_x() {
        let p = QuadraticBilevel::from_parts(
            DenseMatrix::from_diagonal(&v(&[1.0, 3.0])),
            DenseMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            DenseMatrix::identity(2, 2),
            v(&[0.0, 0.0]),
            Constraint::Unconstrained,
            Default::default(),
        )
        .unwrap();
        let x = v(&[0.4, -1.0]);
        assert_eq!(surrogate_gradient_exact(&p, &x, &x).unwrap(), x);
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = diag_problem();
        let x = v(&[0.0, 0.0]);
        let mut rng = stream(0);
        assert!(neumann_hypergradient(&p, &x, &x, 0, 1.0, &mut rng).is_err());
        assert!(neumann_hypergradient(&p, &x, &x, 2, 0.0, &mut rng).is_err());
        assert!(neumann_hypergradient(&p, &x, &x, 2, 1.5, &mut rng).is_err());
        assert!(neumann_hypergradient_with_p(&p, &x, &x, 2, 1.0, 2, &mut rng).is_err());
    }

    #[test]
    fn p_is_uniform_and_below_tmax() {
        let p = diag_problem();
        let x = v(&[0.0, 0.0]);
        let mut rng = stream(3);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            let s = neumann_hypergradient(&p, &x, &x, 4, 1.0, &mut rng).unwrap();
            assert_eq!(s.draws_used, 2 + s.p);
            counts[s.p] += 1;
        }
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 4.0 * (4000.0f64 * 0.25 * 0.75).sqrt());
        }
    }
}
