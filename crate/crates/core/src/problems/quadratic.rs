use serde::{Deserialize, Serialize};

use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::linalg::{logspace, spectral_norm, symmetric_extremes, DenseMatrix, DenseVector};
use crate::oracle::{DenseDerivatives, DenseSampling, ExactOracle, StochasticBilevelOracle};
use crate::projection::Constraint;
use crate::rng::{gaussian_vector, standard_normal, stream, Stream};

/// Noise levels as total second moments: e.g. `E |h_g - grad_y g|^2 = sigma_g^2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseLevels {
    #[serde(default)]
    pub sigma_g: f64,
    #[serde(default)]
    pub sigma_fx: f64,
    #[serde(default)]
    pub sigma_fy: f64,
    #[serde(default)]
    pub sigma_gxy: f64,
}

impl NoiseLevels {
    pub fn uniform(sigma: f64) -> Self {
        NoiseLevels {
            sigma_g: sigma,
            sigma_fx: sigma,
            sigma_fy: sigma,
            sigma_gxy: sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("sigma_g", self.sigma_g),
            ("sigma_fx", self.sigma_fx),
            ("sigma_fy", self.sigma_fy),
            ("sigma_gxy", self.sigma_gxy),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("noise level {n} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadraticRegime {
    #[serde(rename = "sc")]
    StronglyConvex,
    #[serde(rename = "cvx")]
    Convex,
    #[serde(rename = "wc")]
    WeaklyConvex,
}

impl QuadraticRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuadraticRegime::StronglyConvex => "sc",
            QuadraticRegime::Convex => "cvx",
            QuadraticRegime::WeaklyConvex => "wc",
        }
    }
}

fn default_coupling() -> f64 {
    0.1
}
fn default_outer_scale() -> f64 {
    1.0
}
fn default_box() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub regime: QuadraticRegime,
    pub d1: usize,
    pub d2: usize,
    /// Condition number of the inner Hessian; also the top of the outer spectrum.
    pub condition_number: f64,
    #[serde(default)]
    pub noise: NoiseLevels,
    #[serde(default)]
    pub seed: u64,
    /// Spectral norm of B (the x-y coupling).
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    /// Norm of the outer linear term d.
    #[serde(default = "default_outer_scale")]
    pub outer_scale: f64,
    /// Half-width of the box used by the convex and weakly convex regimes.
    #[serde(default = "default_box")]
    pub box_halfwidth: f64,
}

impl QuadraticSpec {
    pub fn new(regime: QuadraticRegime, d1: usize, d2: usize, condition_number: f64) -> Self {
        QuadraticSpec {
            regime,
            d1,
            d2,
            condition_number,
            noise: NoiseLevels::default(),
            seed: 0,
            coupling: default_coupling(),
            outer_scale: default_outer_scale(),
            box_halfwidth: default_box(),
        }
    }
}

/// `g(x,y) = 1/2 y'Ay - y'(Bx + c)`, `f(x,y) = 1/2 x'Rx + d'y` over `x in X`.
#[derive(Clone, Debug)]
pub struct QuadraticBilevel {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseVector,
    r: DenseMatrix,
    d: DenseVector,
    constraint: Constraint,
    noise: NoiseLevels,
    jac: DenseMatrix,
    a_inv_b: DenseMatrix,
    a_inv_c: DenseVector,
    /// `B' A^{-1} d`, the linear part of `grad ell`.
    g0: DenseVector,
    ell_offset: f64,
    r_min: f64,
    r_diagonal: bool,
    constants: ProblemConstants,
    x_star: Option<DenseVector>,
    global_min: Option<DenseVector>,
}

fn random_orthogonal(n: usize, rng: &mut Stream) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}

fn spectral_matrix(eigs: &[f64], rng: &mut Stream) -> DenseMatrix {
    let n = eigs.len();
    let q = random_orthogonal(n, rng);
    let m = &q * DenseMatrix::from_diagonal(&DenseVector::from_vec(eigs.to_vec())) * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn is_diagonal(m: &DenseMatrix) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Exact global minimizer of `1/2 x'diag(r)x + g'x` over the box (separable).
fn diag_box_minimizer(r: &[f64], g: &DenseVector, lo: f64, hi: f64) -> DenseVector {
    DenseVector::from_fn(r.len(), |i, _| {
        let (ri, gi) = (r[i], g[i]);
        let phi = |t: f64| 0.5 * ri * t * t + gi * t;
        if ri > 0.0 {
            (-gi / ri).clamp(lo, hi)
        } else if phi(lo) <= phi(hi) {
            lo
        } else {
            hi
        }
    })
}

impl QuadraticBilevel {
    /// Assemble a problem from explicit matrices. `A` must be symmetric positive definite.
    pub fn from_parts(
        a: DenseMatrix,
        b: DenseMatrix,
        c: DenseVector,
        r: DenseMatrix,
        d: DenseVector,
        constraint: Constraint,
        noise: NoiseLevels,
    ) -> Result<Self> {
        let d2 = a.nrows();
        let d1 = r.nrows();
        if a.ncols() != d2 || b.nrows() != d2 || b.ncols() != d1 || c.len() != d2 || r.ncols() != d1 || d.len() != d2
        {
            return Err(Error::DimensionMismatch {
                context: "quadratic problem parts",
                expected: d2,
                got: b.nrows(),
            });
        }
        if d1 == 0 || d2 == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        for m in [&a, &b, &r] {
            crate::linalg::ensure_finite_matrix(m, "quadratic problem matrix")?;
        }
        crate::linalg::ensure_finite(&c, "quadratic problem vector c")?;
        crate::linalg::ensure_finite(&d, "quadratic problem vector d")?;
        if (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0)
            || (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0)
        {
            return Err(Error::invalid("A and R must be symmetric"));
        }
        constraint.validate()?;
        noise.validate()?;

        let (mu_g, l_max) = symmetric_extremes(&a);
        if !(mu_g > 0.0) {
            return Err(Error::invalid(format!("A must be positive definite, smallest eigenvalue {mu_g}")));
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("inner Hessian A".into()))?;
        let a_inv_b = chol.solve(&b);
        let a_inv_c = chol.solve(&c);
        let a_inv_d = chol.solve(&d);
        let g0 = b.transpose() * &a_inv_d;
        let ell_offset = d.dot(&a_inv_c);
        let (r_min, _) = symmetric_extremes(&r);
        let r_norm = spectral_norm(&r);
        let b_norm = spectral_norm(&b);
        let r_diagonal = is_diagonal(&r);

        let x_star = if r_min >= 0.0 {
            match constraint {
                Constraint::Unconstrained if r_min > 0.0 => Some(
                    r.clone()
                        .cholesky()
                        .ok_or_else(|| Error::Singular("outer curvature R".into()))?
                        .solve(&(-&g0)),
                ),
                Constraint::Box { lo, hi } if r_diagonal => {
                    Some(diag_box_minimizer(r.diagonal().as_slice(), &g0, lo, hi))
                }
                Constraint::Unconstrained => None,
                _ => Some(projected_gradient_qp(&r, &g0, &constraint, r_norm)?),
            }
        } else {
            None
        };
        let global_min = match (&x_star, &constraint) {
            (Some(x), _) => Some(x.clone()),
            (None, &Constraint::Box { lo, hi }) if r_diagonal => {
                Some(diag_box_minimizer(r.diagonal().as_slice(), &g0, lo, hi))
            }
            _ => None,
        };

        let sup_grad_ell = sup_affine_norm(&r, &g0, &constraint, r_norm);

        let mut constants = ProblemConstants {
            l_fx: r_norm,
            l_fy: 0.0,
            lbar_fy: 0.0,
            c_fy: d.norm(),
            l_g: l_max.max(1.0),
            mu_g,
            l_gxy: 0.0,
            l_gyy: 0.0,
            lbar_gxy: 0.0,
            lbar_gyy: 0.0,
            c_gxy: b_norm,
            mu_ell: r_min,
            sigma_g: noise.sigma_g,
            sigma_f: 0.0,
            sigma_fx: noise.sigma_fx,
            sigma_fy: noise.sigma_fy,
            sigma_gxy: noise.sigma_gxy,
            c_y: d.norm(),
            c_g: b_norm,
            b0: 0.0,
            sup_grad_ell,
            sigma_f_tilde_sq_bound: None,
        };
        constants.sigma_f = constants.variance_bound(d1).sqrt();
        constants.b0 = constants.bias_scale();
        constants.validate()?;

        Ok(QuadraticBilevel {
            jac: -b.transpose(),
            a,
            b,
            c,
            r,
            d,
            constraint,
            noise,
            a_inv_b,
            a_inv_c,
            g0,
            ell_offset,
            r_min,
            r_diagonal,
            constants,
            x_star,
            global_min,
        })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }
    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }
    pub fn c(&self) -> &DenseVector {
        &self.c
    }
    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }
    pub fn d(&self) -> &DenseVector {
        &self.d
    }
    pub fn noise(&self) -> &NoiseLevels {
        &self.noise
    }
    pub fn is_outer_diagonal(&self) -> bool {
        self.r_diagonal
    }

    /// Global minimizer of the outer objective over X when computable
    /// (always for diagonal R on a box, even when R is indefinite).
    pub fn global_minimizer(&self) -> Option<&DenseVector> {
        self.global_min.as_ref()
    }

    /// Same problem with different noise levels.
    pub fn with_noise(&self, noise: NoiseLevels) -> Result<Self> {
        QuadraticBilevel::from_parts(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.r.clone(),
            self.d.clone(),
            self.constraint.clone(),
            noise,
        )
    }

    /// Closed-form prox of the outer objective for diagonal R on a box:
    /// `argmin_{x in X} ell(x) + rho/2 |x - z|^2`.
    pub fn diag_box_prox(&self, z: &DenseVector, rho: f64) -> Option<DenseVector> {
        match (self.r_diagonal, &self.constraint) {
            (true, Constraint::Box { lo, hi }) => {
                let r: Vec<f64> = self.r.diagonal().iter().map(|v| v + rho).collect();
                let g = &self.g0 - z * rho;
                Some(diag_box_minimizer(&r, &g, *lo, *hi))
            }
            _ => None,
        }
    }

    /// `|x_hat(x) - x|^2` through [`Self::diag_box_prox`].
    pub fn near_stationarity(&self, x: &DenseVector, rho: f64) -> Option<f64> {
        self.diag_box_prox(x, rho).map(|xh| (xh - x).norm_squared())
    }

    fn hessian_noise_scale(&self) -> f64 {
        let n = self.a.nrows() as f64;
        self.noise.sigma_gxy / (n * (n + 1.0)).sqrt()
    }

    fn jacobian_noise_scale(&self) -> f64 {
        self.noise.sigma_gxy / ((self.r.nrows() * self.a.nrows()) as f64).sqrt()
    }
}

/// `sup_{x in X} |R x + g|`: exact on boxes (vertex enumeration up to 16 dims) and simplices.
fn sup_affine_norm(r: &DenseMatrix, g: &DenseVector, c: &Constraint, r_norm: f64) -> Option<f64> {
    let n = r.nrows();
    match *c {
        Constraint::Unconstrained => None,
        Constraint::Box { lo, hi } if n <= 16 => {
            let mut best: f64 = 0.0;
            for mask in 0u32..(1u32 << n) {
                let x = DenseVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { hi } else { lo });
                best = best.max((r * x + g).norm());
            }
            Some(best)
        }
        Constraint::Box { lo, hi } => Some(r_norm * (n as f64).sqrt() * lo.abs().max(hi.abs()) + g.norm()),
        Constraint::Ball { radius } => Some(r_norm * radius + g.norm()),
        Constraint::Simplex => Some(
            (0..n)
                .map(|i| (r.column(i) + g).norm())
                .fold(0.0, f64::max),
        ),
    }
}

/// Projected gradient for a convex QP on a general constraint set.
fn projected_gradient_qp(r: &DenseMatrix, g: &DenseVector, c: &Constraint, r_norm: f64) -> Result<DenseVector> {
    let step = 1.0 / r_norm.max(1e-12);
    let mut x = c.project(&DenseVector::zeros(r.nrows()));
    for _ in 0..1_000_000 {
        let grad = r * &x + g;
        let next = c.project(&(&x - grad * step));
        let moved = (&next - &x).norm();
        x = next;
        if moved <= 1e-14 * (1.0 + x.norm()) {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what: "outer QP minimizer",
        iterations: 1_000_000,
    })
}

/// Random instance of the quadratic family.
pub fn make_quadratic(spec: &QuadraticSpec) -> Result<QuadraticBilevel> {
    let kappa = spec.condition_number;
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("condition number must be >= 1, got {kappa}")));
    }
    if spec.d1 == 0 || spec.d2 == 0 {
        return Err(Error::invalid("dimensions must be positive"));
    }
    if !(spec.coupling > 0.0) || !(spec.outer_scale >= 0.0) || !(spec.box_halfwidth > 0.0) {
        return Err(Error::invalid("coupling and box half-width must be positive"));
    }
    let (d1, d2) = (spec.d1, spec.d2);
    let mut rng = stream(spec.seed);

    let a = spectral_matrix(&logspace(1.0, kappa, d2), &mut rng);

    let g = DenseMatrix::from_fn(d2, d1, |_, _| standard_normal(&mut rng));
    let b = &g * (spec.coupling / spectral_norm(&g));
    let c = gaussian_vector(&mut rng, d2, 1.0 / (d2 as f64).sqrt());
    let dv = gaussian_vector(&mut rng, d2, 1.0);
    let dv = &dv * (spec.outer_scale / dv.norm());

    let (r, constraint) = match spec.regime {
        QuadraticRegime::StronglyConvex => (
            spectral_matrix(&logspace(1.0, kappa, d1), &mut rng),
            Constraint::Unconstrained,
        ),
        QuadraticRegime::Convex | QuadraticRegime::WeaklyConvex => {
            let floor = if spec.regime == QuadraticRegime::Convex { 0.0 } else { -1.0 };
            let mut eigs = vec![floor];
            eigs.extend(logspace(1.0, kappa, d1 - 1));
            (
                DenseMatrix::from_diagonal(&DenseVector::from_vec(eigs)),
                Constraint::Box {
                    lo: -spec.box_halfwidth,
                    hi: spec.box_halfwidth,
                },
            )
        }
    };
    QuadraticBilevel::from_parts(a, b, c, r, dv, constraint, spec.noise.clone())
}

/// Re-noised copy of a quadratic problem.
pub fn quadratic_oracles(problem: &QuadraticBilevel, noise: NoiseLevels) -> Result<QuadraticBilevel> {
    problem.with_noise(noise)
}

impl StochasticBilevelOracle for QuadraticBilevel {
    fn dims(&self) -> (usize, usize) {
        (self.r.nrows(), self.a.nrows())
    }

    fn sample_inner_grad(&self, x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> DenseVector {
        let mut g = &self.a * y - &self.b * x - &self.c;
        if self.noise.sigma_g > 0.0 {
            let n = g.len();
            g += gaussian_vector(rng, n, self.noise.sigma_g / (n as f64).sqrt());
        }
        g
    }

    fn sample_outer_grads(&self, x: &DenseVector, _y: &DenseVector, rng: &mut Stream) -> (DenseVector, DenseVector) {
        let mut gx = &self.r * x;
        let mut gy = self.d.clone();
        if self.noise.sigma_fx > 0.0 {
            let n = gx.len();
            gx += gaussian_vector(rng, n, self.noise.sigma_fx / (n as f64).sqrt());
        }
        if self.noise.sigma_fy > 0.0 {
            let n = gy.len();
            gy += gaussian_vector(rng, n, self.noise.sigma_fy / (n as f64).sqrt());
        }
        (gx, gy)
    }

    fn sample_jacobian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector {
        if self.noise.sigma_gxy > 0.0 {
            self.sample_jacobian_matrix(x, y, rng) * v
        } else {
            &self.jac * v
        }
    }

    fn sample_hessian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector {
        if self.noise.sigma_gxy > 0.0 {
            self.sample_hessian_matrix(x, y, rng) * v
        } else {
            &self.a * v
        }
    }

    fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
}

impl DenseSampling for QuadraticBilevel {
    fn sample_hessian_matrix(&self, _x: &DenseVector, _y: &DenseVector, rng: &mut Stream) -> DenseMatrix {
        let mut h = self.a.clone();
        if self.noise.sigma_gxy > 0.0 {
            let n = h.nrows();
            let s = self.hessian_noise_scale();
            let z = gaussian_vector(rng, n, 1.0);
            for j in 0..n {
                for i in 0..n {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    h[(i, j)] += s * (z[i] * z[j] - delta);
                }
            }
        }
        h
    }

    fn sample_jacobian_matrix(&self, _x: &DenseVector, _y: &DenseVector, rng: &mut Stream) -> DenseMatrix {
        let mut j = self.jac.clone();
        if self.noise.sigma_gxy > 0.0 {
            let s = self.jacobian_noise_scale();
            let u = gaussian_vector(rng, j.nrows(), 1.0);
            let w = gaussian_vector(rng, j.ncols(), 1.0);
            for c in 0..j.ncols() {
                for r in 0..j.nrows() {
                    j[(r, c)] += s * u[r] * w[c];
                }
            }
        }
        j
    }
}

impl ExactOracle for QuadraticBilevel {
    fn y_star(&self, x: &DenseVector) -> DenseVector {
        &self.a_inv_b * x + &self.a_inv_c
    }

    fn grad_ell(&self, x: &DenseVector) -> DenseVector {
        &self.r * x + &self.g0
    }

    fn ell(&self, x: &DenseVector) -> f64 {
        0.5 * x.dot(&(&self.r * x)) + self.g0.dot(x) + self.ell_offset
    }

    fn x_star(&self) -> Option<DenseVector> {
        self.x_star.clone()
    }

    fn mu_ell(&self) -> Option<f64> {
        Some(self.r_min)
    }

    fn grad_ell_lipschitz(&self) -> f64 {
        self.constants.derived().map(|d| d.l_f).unwrap_or(self.constants.l_fx)
    }

    fn inner_grad(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        &self.a * y - &self.b * x - &self.c
    }
}

impl DenseDerivatives for QuadraticBilevel {
    fn grad_x_f(&self, x: &DenseVector, _y: &DenseVector) -> DenseVector {
        &self.r * x
    }
    fn grad_y_f(&self, _x: &DenseVector, _y: &DenseVector) -> DenseVector {
        self.d.clone()
    }
    fn jacobian_xy(&self, _x: &DenseVector, _y: &DenseVector) -> DenseMatrix {
        self.jac.clone()
    }
    fn hessian_yy(&self, _x: &DenseVector, _y: &DenseVector) -> DenseMatrix {
        self.a.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergrad::surrogate_gradient_exact;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_vec(x.to_vec())
    }

    fn m1(x: f64) -> DenseMatrix {
        DenseMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_instance_closed_forms() {
        let p = QuadraticBilevel::from_parts(
            m1(1.0),
            m1(1.0),
            v(&[0.0]),
            m1(1.0),
            v(&[1.0]),
            Constraint::Unconstrained,
            NoiseLevels::default(),
        )
        .unwrap();
        for x in [-2.0, 0.0, 0.7] {
            let xv = v(&[x]);
            assert_eq!(p.y_star(&xv)[0], x);
            assert_eq!(p.ell(&xv), 0.5 * x * x + x);
        }
        assert_eq!(p.x_star().unwrap()[0], -1.0);
    }

    #[test]
    fn noiseless_inner_gradient_is_exact() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::StronglyConvex, 3, 4, 5.0)).unwrap();
        let x = v(&[0.1, -0.2, 0.3]);
        let y = v(&[1.0, 0.0, -1.0, 2.0]);
        let mut rng = stream(0);
        let g = p.sample_inner_grad(&x, &y, &mut rng);
        assert_eq!(g, p.a() * &y - p.b() * &x - p.c());
    }

    #[test]
    fn spectra_follow_regime() {
        for (regime, lo) in [
            (QuadraticRegime::StronglyConvex, 1.0),
            (QuadraticRegime::Convex, 0.0),
            (QuadraticRegime::WeaklyConvex, -1.0),
        ] {
            let p = make_quadratic(&QuadraticSpec::new(regime, 5, 6, 10.0)).unwrap();
            let (a_lo, a_hi) = symmetric_extremes(p.a());
            assert!((a_lo - 1.0).abs() < 1e-10 && (a_hi - 10.0).abs() < 1e-10);
            let c = p.constants();
            assert!((c.mu_g - 1.0).abs() < 1e-10 && (c.l_g - 10.0).abs() < 1e-10);
            assert!((c.mu_ell - lo).abs() < 1e-10, "{regime:?}: {}", c.mu_ell);
            assert!((c.c_gxy - 0.1).abs() < 1e-12);
            assert_eq!(p.constraint().is_bounded(), regime != QuadraticRegime::StronglyConvex);
            assert_eq!(p.x_star().is_some(), regime != QuadraticRegime::WeaklyConvex);
            assert!(p.global_minimizer().is_some());
        }
    }

    #[test]
    fn rejects_bad_condition_number() {
        assert!(make_quadratic(&QuadraticSpec::new(QuadraticRegime::StronglyConvex, 2, 2, 0.5)).is_err());
    }

    #[test]
    fn surrogate_matches_grad_ell_at_y_star() {
        for regime in [QuadraticRegime::StronglyConvex, QuadraticRegime::WeaklyConvex] {
            let mut spec = QuadraticSpec::new(regime, 6, 4, 10.0);
            spec.seed = 9;
            let p = make_quadratic(&spec).unwrap();
            let mut rng = stream(4);
            for _ in 0..20 {
                let x = gaussian_vector(&mut rng, 6, 2.0);
                let s = surrogate_gradient_exact(&p, &x, &p.y_star(&x)).unwrap();
                let g = p.grad_ell(&x);
                assert!((s - &g).norm() <= 1e-9 * g.norm().max(1.0));
            }
        }
    }

    #[test]
    fn y_star_zeroes_inner_gradient() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::Convex, 4, 5, 10.0)).unwrap();
        let x = v(&[1.0, -3.0, 2.0, 0.5]);
        let y = p.y_star(&x);
        let res = p.inner_grad(&x, &y).norm();
        assert!(res <= 1e-10 * (p.b() * &x + p.c()).norm());
    }

    #[test]
    fn box_minimizers_are_optimal_on_a_grid() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::WeaklyConvex, 2, 3, 4.0)).unwrap();
        let xs = p.global_minimizer().unwrap().clone();
        let best = p.ell(&xs);
        for i in 0..=40 {
            for j in 0..=40 {
                let x = v(&[-10.0 + i as f64 * 0.5, -10.0 + j as f64 * 0.5]);
                assert!(p.ell(&x) >= best - 1e-12);
            }
        }
    }

    #[test]
    fn sup_grad_is_attained_at_a_vertex() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::Convex, 3, 3, 5.0)).unwrap();
        let sup = p.constants().sup_grad_ell.unwrap();
        let mut rng = stream(8);
        for _ in 0..200 {
            let x = p.project(&gaussian_vector(&mut rng, 3, 20.0));
            assert!(p.grad_ell(&x).norm() <= sup + 1e-12);
        }
    }

    #[test]
    fn lipschitz_ratios_respect_closed_forms() {
        let p = make_quadratic(&QuadraticSpec::new(QuadraticRegime::StronglyConvex, 5, 5, 10.0)).unwrap();
        let d = p.constants().derived().unwrap();
        let mut rng = stream(21);
        for _ in 0..200 {
            let x1 = gaussian_vector(&mut rng, 5, 3.0);
            let x2 = gaussian_vector(&mut rng, 5, 3.0);
            let dx = (&x1 - &x2).norm();
            assert!((p.grad_ell(&x1) - p.grad_ell(&x2)).norm() / dx <= d.l_f * (1.0 + 1e-12));
            assert!((p.y_star(&x1) - p.y_star(&x2)).norm() / dx <= d.l_y * (1.0 + 1e-12));
        }
    }
}
