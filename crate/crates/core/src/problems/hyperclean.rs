use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::constants::ProblemConstants;
use crate::error::{Error, Result};
use crate::hypergrad::surrogate_gradient_exact;
use crate::linalg::{symmetric_extremes, DenseMatrix, DenseVector};
use crate::oracle::{DenseDerivatives, StochasticBilevelOracle};
use crate::projection::Constraint;
use crate::rng::{gaussian_vector, stream, Stream};

/// Max of |L'''| for the logistic loss, also max |sigma''|.
const THIRD_DERIV_MAX: f64 = 0.096_225_044_864_937_6;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic loss `log(1 + e^z) - b z` and its first two derivatives in z.
fn logistic(z: f64, b: f64) -> (f64, f64, f64) {
    let s = sigmoid(z);
    (softplus(z) - b * z, s - b, s * (1.0 - s))
}

fn default_batch() -> usize {
    16
}
fn default_separation() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperCleanSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub d2: usize,
    pub corruption_p: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub inner_batch: usize,
    #[serde(default = "default_batch")]
    pub outer_batch: usize,
    /// Distance of each blob centre from the origin along the true separator.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

impl HyperCleanSpec {
    pub fn new(n_train: usize, n_val: usize, d2: usize, corruption_p: f64) -> Self {
        HyperCleanSpec {
            n_train,
            n_val,
            d2,
            corruption_p,
            lambda: default_lambda(),
            seed: 0,
            inner_batch: default_batch(),
            outer_batch: default_batch(),
            separation: default_separation(),
        }
    }
}

/// Data hyper-cleaning: one weight `sigma(x_i)` per training sample, tuned so the
/// resulting logistic-regression classifier does well on a clean validation set.
///
/// Inner: `lambda |y|^2 + sum_i sigma(x_i) L(a_i'y, b_i)`; outer: `sum_j L(a_j'y, b_j)` over validation.
/// The outer objective's curvature modulus is unknown.
#[derive(Clone, Debug)]
pub struct HyperCleanProblem {
    train: Dataset,
    val: Dataset,
    flipped: Vec<bool>,
    lambda: f64,
    inner_batch: usize,
    outer_batch: usize,
    train_rows: Vec<DenseVector>,
    val_rows: Vec<DenseVector>,
    constraint: Constraint,
    constants: ProblemConstants,
}

fn flip_labels(ds: &mut Dataset, p: f64, rng: &mut Stream) -> Vec<bool> {
    ds.labels
        .iter_mut()
        .map(|b| {
            let flip = rng.r#gen::<f64>() < p;
            if flip {
                *b = 1.0 - *b;
            }
            flip
        })
        .collect()
}

/// Synthetic corrupted two-blob instance.
pub fn make_hyperclean(spec: &HyperCleanSpec) -> Result<HyperCleanProblem> {
    if spec.n_train < 10 || spec.n_val < 10 {
        return Err(Error::invalid("n_train and n_val must be at least 10"));
    }
    if !(0.0..1.0).contains(&spec.corruption_p) {
        return Err(Error::invalid(format!("corruption_p must lie in [0, 1), got {}", spec.corruption_p)));
    }
    if spec.d2 == 0 {
        return Err(Error::invalid("d2 must be positive"));
    }
    let mut rng = stream(spec.seed);
    let w = gaussian_vector(&mut rng, spec.d2, 1.0);
    let w = &w / w.norm();
    let mut train = Dataset::blobs(spec.n_train, &w, spec.separation, &mut rng);
    let val = Dataset::blobs(spec.n_val, &w, spec.separation, &mut rng);
    let flipped = flip_labels(&mut train, spec.corruption_p, &mut rng);
    HyperCleanProblem::new(train, val, flipped, spec.lambda, spec.inner_batch, spec.outer_batch)
}

impl HyperCleanProblem {
    /// `flipped` marks corrupted training labels when known (may be all false).
    pub fn new(
        train: Dataset,
        val: Dataset,
        flipped: Vec<bool>,
        lambda: f64,
        inner_batch: usize,
        outer_batch: usize,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        if inner_batch == 0 || outer_batch == 0 {
            return Err(Error::invalid("batch sizes must be at least 1"));
        }
        if train.dim() != val.dim() {
            return Err(Error::DimensionMismatch {
                context: "train vs validation features",
                expected: train.dim(),
                got: val.dim(),
            });
        }
        if flipped.len() != train.len() {
            return Err(Error::DimensionMismatch {
                context: "corruption mask",
                expected: train.len(),
                got: flipped.len(),
            });
        }
        train.ensure_two_classes("training set")?;
        val.ensure_two_classes("validation set")?;
        let train_rows = (0..train.len()).map(|i| train.row(i)).collect();
        let val_rows = (0..val.len()).map(|i| val.row(i)).collect();
        let mut p = HyperCleanProblem {
            train,
            val,
            flipped,
            lambda,
            inner_batch,
            outer_batch,
            train_rows,
            val_rows,
            constraint: Constraint::Unconstrained,
            constants: ProblemConstants::default(),
        };
        p.constants = p.bound_constants();
        p.constants.validate()?;
        Ok(p)
    }

    /// Labelled table split into train (first `n_train` rows after a seeded shuffle,
    /// labels flipped with probability `corruption_p`) and clean validation.
    pub fn from_labelled(
        data: &Dataset,
        n_train: usize,
        corruption_p: f64,
        lambda: f64,
        seed: u64,
        inner_batch: usize,
        outer_batch: usize,
    ) -> Result<Self> {
        if n_train < 10 || data.len() < n_train + 10 {
            return Err(Error::invalid(format!(
                "need at least 10 training and 10 validation rows, have {} rows for n_train={n_train}",
                data.len()
            )));
        }
        if !(0.0..1.0).contains(&corruption_p) {
            return Err(Error::invalid(format!("corruption_p must lie in [0, 1), got {corruption_p}")));
        }
        let mut rng = stream(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let pick = |idx: &[usize]| -> Result<Dataset> {
            let rows: Vec<_> = idx.iter().map(|&i| data.features.row(i)).collect();
            Dataset::new(DenseMatrix::from_rows(&rows), idx.iter().map(|&i| data.labels[i]).collect())
        };
        let mut train = pick(&order[..n_train])?;
        let val = pick(&order[n_train..])?;
        let flipped = flip_labels(&mut train, corruption_p, &mut rng);
        HyperCleanProblem::new(train, val, flipped, lambda, inner_batch, outer_batch)
    }

    /// Same data with different minibatch sizes. A batch at least as large as the
    /// corresponding set means exact full-batch oracles.
    pub fn with_batches(&self, inner_batch: usize, outer_batch: usize) -> Result<Self> {
        HyperCleanProblem::new(
            self.train.clone(),
            self.val.clone(),
            self.flipped.clone(),
            self.lambda,
            inner_batch,
            outer_batch,
        )
    }

    fn bound_constants(&self) -> ProblemConstants {
        let n = self.train.len() as f64;
        let nv = self.val.len() as f64;
        let sq: Vec<f64> = self.train_rows.iter().map(|a| a.norm_squared()).collect();
        let max_norm = sq.iter().cloned().fold(0.0, f64::max).sqrt();
        let val_max_norm = self.val_rows.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let sum_sq: f64 = sq.iter().sum();
        let sum_sq2: f64 = sq.iter().map(|s| s * s).sum::<f64>().sqrt();
        let sum_cube: f64 = sq.iter().map(|s| s * s.sqrt()).sum();
        let gram = self.train.features.transpose() * &self.train.features;
        let gram_val = self.val.features.transpose() * &self.val.features;
        let mu_g = 2.0 * self.lambda;
        let l_g = (mu_g + 0.25 * symmetric_extremes(&gram).1).max(1.0);
        let c_gxy = 0.25 * sum_sq.sqrt();
        let c_fy: f64 = self.val_rows.iter().map(|a| a.norm()).sum();
        let l_fy = 0.25 * symmetric_extremes(&gram_val).1;
        let full_in = self.inner_batch >= self.train.len();
        let full_out = self.outer_batch >= self.val.len();
        let bi = (self.inner_batch as f64).sqrt();
        let bo = (self.outer_batch as f64).sqrt();
        let sigma_g = if full_in { 0.0 } else { n * max_norm / bi };
        let sigma_fy = if full_out { 0.0 } else { nv * val_max_norm / bo };
        let sampled_gxy = if full_in { 0.0 } else { 0.25 * n * max_norm * max_norm / bi };
        // Floor keeps mu_g/(mu_g^2 + sigma_gxy^2) <= 1.
        let sigma_gxy = sampled_gxy.max((mu_g - mu_g * mu_g).max(0.0).sqrt());
        let l_gxy = sum_sq2 / 16.0;
        let l_gyy = THIRD_DERIV_MAX * sum_cube;
        let mut c = ProblemConstants {
            l_fx: 0.0,
            l_fy,
            lbar_fy: l_fy,
            c_fy,
            l_g,
            mu_g,
            l_gxy,
            l_gyy,
            lbar_gxy: l_gxy + THIRD_DERIV_MAX * max_norm,
            lbar_gyy: l_gyy + sum_sq2 / 16.0,
            c_gxy,
            mu_ell: 0.0,
            sigma_g,
            sigma_f: 0.0,
            sigma_fx: 0.0,
            sigma_fy,
            sigma_gxy,
            c_y: c_fy,
            c_g: c_gxy,
            b0: 0.0,
            sup_grad_ell: None,
            sigma_f_tilde_sq_bound: None,
        };
        c.sigma_f = c.variance_bound(self.train.len()).sqrt();
        c.b0 = c.bias_scale();
        c
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }
    pub fn val(&self) -> &Dataset {
        &self.val
    }
    pub fn flipped(&self) -> &[bool] {
        &self.flipped
    }
    pub fn n_flipped(&self) -> usize {
        self.flipped.iter().filter(|&&f| f).count()
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn batches(&self) -> (usize, usize) {
        (self.inner_batch, self.outer_batch)
    }

    /// Neumann scaling used for this problem. The default `mu_g/(mu_g^2+sigma_gxy^2)`
    /// collapses for `mu_g = 2 lambda` small, so the step is the plain `1/L_g`.
    pub fn recommended_c_h(&self) -> f64 {
        1.0
    }

    fn check_x(&self, x: &DenseVector) {
        assert_eq!(x.len(), self.train.len(), "hyper-cleaning weight vector length");
    }

    pub fn inner_objective(&self, x: &DenseVector, y: &DenseVector) -> f64 {
        self.check_x(x);
        let mut v = self.lambda * y.norm_squared();
        for (i, a) in self.train_rows.iter().enumerate() {
            v += sigmoid(x[i]) * logistic(a.dot(y), self.train.labels[i]).0;
        }
        v
    }

    pub fn inner_grad_full(&self, x: &DenseVector, y: &DenseVector) -> DenseVector {
        self.check_x(x);
        let mut g = y * (2.0 * self.lambda);
        for (i, a) in self.train_rows.iter().enumerate() {
            let (_, l1, _) = logistic(a.dot(y), self.train.labels[i]);
            g.axpy(sigmoid(x[i]) * l1, a, 1.0);
        }
        g
    }

    pub fn inner_hessian_full(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        self.check_x(x);
        let d = y.len();
        let mut h = DenseMatrix::identity(d, d) * (2.0 * self.lambda);
        for (i, a) in self.train_rows.iter().enumerate() {
            let (_, _, l2) = logistic(a.dot(y), self.train.labels[i]);
            h.ger(sigmoid(x[i]) * l2, a, a, 1.0);
        }
        h
    }

    /// `grad_xy g`, one row per training sample.
    pub fn jacobian_full(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        self.check_x(x);
        let mut j = DenseMatrix::zeros(self.train.len(), y.len());
        for (i, a) in self.train_rows.iter().enumerate() {
            let (_, l1, _) = logistic(a.dot(y), self.train.labels[i]);
            let s = sigmoid(x[i]);
            j.set_row(i, &(a.transpose() * (s * (1.0 - s) * l1)));
        }
        j
    }

    /// Summed logistic loss on a dataset.
    pub fn loss_on(&self, data: &Dataset, y: &DenseVector) -> f64 {
        (0..data.len())
            .map(|i| logistic(data.features.row(i).transpose().dot(y), data.labels[i]).0)
            .sum()
    }

    pub fn validation_loss(&self, y: &DenseVector) -> f64 {
        self.val_rows
            .iter()
            .zip(&self.val.labels)
            .map(|(a, &b)| logistic(a.dot(y), b).0)
            .sum()
    }

    pub fn validation_grad(&self, y: &DenseVector) -> DenseVector {
        let mut g = DenseVector::zeros(y.len());
        for (a, &b) in self.val_rows.iter().zip(&self.val.labels) {
            g.axpy(logistic(a.dot(y), b).1, a, 1.0);
        }
        g
    }

    /// Fraction of misclassified rows.
    pub fn error_rate(&self, data: &Dataset, y: &DenseVector) -> f64 {
        let wrong = (0..data.len())
            .filter(|&i| {
                let pred = if data.features.row(i).transpose().dot(y) > 0.0 { 1.0 } else { 0.0 };
                pred != data.labels[i]
            })
            .count();
        wrong as f64 / data.len() as f64
    }

    /// Damped Newton on the inner problem.
    pub fn solve_inner(&self, x: &DenseVector) -> Result<DenseVector> {
        let d = self.train.dim();
        let mut y = DenseVector::zeros(d);
        let g0 = self.inner_grad_full(x, &y).norm().max(1.0);
        for _ in 0..200 {
            let g = self.inner_grad_full(x, &y);
            if g.norm() <= 1e-12 * g0 {
                return Ok(y);
            }
            let h = self.inner_hessian_full(x, &y);
            let step = h
                .cholesky()
                .ok_or_else(|| Error::Singular("hyper-cleaning inner Hessian".into()))?
                .solve(&g);
            let f0 = self.inner_objective(x, &y);
            let slope = g.dot(&step);
            let mut t = 1.0;
            loop {
                let cand = &y - &step * t;
                if self.inner_objective(x, &cand) <= f0 - 1e-4 * t * slope || t < 1e-12 {
                    y = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        let g = self.inner_grad_full(x, &y);
        if g.norm() <= 1e-8 * g0 {
            Ok(y)
        } else {
            Err(Error::NoConvergence {
                what: "hyper-cleaning inner Newton solve",
                iterations: 200,
            })
        }
    }

    /// Outer objective `ell(x)`: validation loss at the exact inner solution.
    pub fn ell(&self, x: &DenseVector) -> Result<f64> {
        Ok(self.validation_loss(&self.solve_inner(x)?))
    }

    pub fn grad_ell(&self, x: &DenseVector) -> Result<DenseVector> {
        let y = self.solve_inner(x)?;
        surrogate_gradient_exact(self, x, &y)
    }

    fn batch(&self, n: usize, b: usize, rng: &mut Stream) -> (Vec<usize>, f64) {
        if b >= n {
            ((0..n).collect(), 1.0)
        } else {
            ((0..b).map(|_| rng.gen_range(0..n)).collect(), n as f64 / b as f64)
        }
    }
}

impl StochasticBilevelOracle for HyperCleanProblem {
    fn dims(&self) -> (usize, usize) {
        (self.train.len(), self.train.dim())
    }

    fn sample_inner_grad(&self, x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> DenseVector {
        let (idx, scale) = self.batch(self.train.len(), self.inner_batch, rng);
        let mut g = y * (2.0 * self.lambda);
        for i in idx {
            let a = &self.train_rows[i];
            let (_, l1, _) = logistic(a.dot(y), self.train.labels[i]);
            g.axpy(scale * sigmoid(x[i]) * l1, a, 1.0);
        }
        g
    }

    fn sample_outer_grads(&self, _x: &DenseVector, y: &DenseVector, rng: &mut Stream) -> (DenseVector, DenseVector) {
        let (idx, scale) = self.batch(self.val.len(), self.outer_batch, rng);
        let mut gy = DenseVector::zeros(y.len());
        for j in idx {
            let a = &self.val_rows[j];
            gy.axpy(scale * logistic(a.dot(y), self.val.labels[j]).1, a, 1.0);
        }
        (DenseVector::zeros(self.train.len()), gy)
    }

    fn sample_jacobian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector {
        let (idx, scale) = self.batch(self.train.len(), self.inner_batch, rng);
        let mut out = DenseVector::zeros(self.train.len());
        for i in idx {
            let a = &self.train_rows[i];
            let (_, l1, _) = logistic(a.dot(y), self.train.labels[i]);
            let s = sigmoid(x[i]);
            out[i] += scale * s * (1.0 - s) * l1 * a.dot(v);
        }
        out
    }

    fn sample_hessian_apply(
        &self,
        x: &DenseVector,
        y: &DenseVector,
        v: &DenseVector,
        rng: &mut Stream,
    ) -> DenseVector {
        let (idx, scale) = self.batch(self.train.len(), self.inner_batch, rng);
        let mut out = v * (2.0 * self.lambda);
        for i in idx {
            let a = &self.train_rows[i];
            let (_, _, l2) = logistic(a.dot(y), self.train.labels[i]);
            out.axpy(scale * sigmoid(x[i]) * l2 * a.dot(v), a, 1.0);
        }
        out
    }

    fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
}

impl DenseDerivatives for HyperCleanProblem {
    fn grad_x_f(&self, _x: &DenseVector, _y: &DenseVector) -> DenseVector {
        DenseVector::zeros(self.train.len())
    }
    fn grad_y_f(&self, _x: &DenseVector, y: &DenseVector) -> DenseVector {
        self.validation_grad(y)
    }
    fn jacobian_xy(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        self.jacobian_full(x, y)
    }
    fn hessian_yy(&self, x: &DenseVector, y: &DenseVector) -> DenseMatrix {
        self.inner_hessian_full(x, y)
    }
}
