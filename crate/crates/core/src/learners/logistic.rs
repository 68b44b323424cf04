use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, HteError, Result};

const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-8;
/// Smallest admissible ridge strength.
pub const MIN_L2: f64 = 1e-6;
/// Probabilities are kept this far from 0 and 1.
pub const PROB_EPS: f64 = 1e-12;

/// L2-penalised logistic regression; the intercept is not penalised.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    intercept: f64,
    coef: Vec<f64>,
    l2: f64,
    iterations: usize,
}

pub fn fit_classifier(x: &DMatrix<f64>, z: &[u8], l2: f64) -> Result<ClassifierModel> {
    ClassifierModel::fit(x, z, l2)
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Penalised log-likelihood `Σ [zη − ln(1 + eη)] − (l2/2)‖β‖²`.
pub(crate) fn penalized_log_likelihood(x: &DMatrix<f64>, z: &[u8], l2: f64, intercept: f64, coef: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let eta = intercept + (0..x.ncols()).map(|j| x[(i, j)] * coef[j]).sum::<f64>();
        ll += f64::from(z[i]) * eta - log1p_exp(eta);
    }
    ll - 0.5 * l2 * coef.iter().map(|b| b * b).sum::<f64>()
}

impl ClassifierModel {
    pub fn fit(x: &DMatrix<f64>, z: &[u8], l2: f64) -> Result<Self> {
        check_len(x.nrows(), z.len())?;
        if !(l2 >= MIN_L2) || !l2.is_finite() {
            return Err(HteError::invalid(format!("l2 = {l2} must be >= {MIN_L2}")));
        }
        if z.iter().any(|&v| v > 1) {
            return Err(HteError::invalid("class labels must be 0 or 1"));
        }
        let ones = z.iter().filter(|&&v| v == 1).count();
        if ones == 0 || ones == z.len() {
            return Err(HteError::invalid("both classes must be present"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HteError::invalid("non-finite covariates"));
        }
        let (n, d) = (x.nrows(), x.ncols());
        let p = d + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        let objective = |beta: &DVector<f64>| penalized_log_likelihood(x, z, l2, beta[0], &beta.as_slice()[1..]);

        // Start from the intercept-only MLE.
        let mut beta = DVector::zeros(p);
        let rate = ones as f64 / n as f64;
        beta[0] = (rate / (1.0 - rate)).ln();
        let mut value = objective(&beta);

        for iter in 0..=MAX_ITER {
            let eta = &design * &beta;
            let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
            let mut grad = DVector::from_fn(p, |j, _| (0..n).map(|i| design[(i, j)] * (zf[i] - prob[i])).sum::<f64>());
            for j in 1..p {
                grad[j] -= l2 * beta[j];
            }
            if grad.norm() <= GRAD_TOL {
                return Ok(Self {
                    intercept: beta[0],
                    coef: beta.as_slice()[1..].to_vec(),
                    l2,
                    iterations: iter,
                });
            }
            if iter == MAX_ITER {
                break;
            }
            // Negative Hessian: Xᵀ diag(p(1−p)) X + l2·diag(0, 1, …, 1).
            let mut h = DMatrix::zeros(p, p);
            for i in 0..n {
                let wi = prob[i] * (1.0 - prob[i]);
                for a in 0..p {
                    let xa = design[(i, a)] * wi;
                    for b in 0..=a {
                        h[(a, b)] += xa * design[(i, b)];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    h[(b, a)] = h[(a, b)];
                }
            }
            for j in 1..p {
                h[(j, j)] += l2;
            }
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&grad),
                None => {
                    for j in 0..p {
                        h[(j, j)] += 1e-10 * (1.0 + h[(j, j)]);
                    }
                    h.cholesky().ok_or(HteError::Divergence("logistic Hessian"))?.solve(&grad)
                }
            };
            // Damping: halve the Newton step until the objective does not drop
            // (beyond rounding noise).
            let slack = 1e-12 * (1.0 + value.abs());
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &beta + &step * t;
                let v = objective(&cand);
                if v.is_finite() && v >= value - slack {
                    beta = cand;
                    value = v;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Err(HteError::NonConvergence {
            what: "logistic regression",
            iterations: MAX_ITER,
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn dim(&self) -> usize {
        self.coef.len()
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `P(z = 1 | x)`, kept inside `[PROB_EPS, 1 − PROB_EPS]`.
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.coef.len() {
            return Err(HteError::DimensionMismatch {
                expected: self.coef.len(),
                got: x.ncols(),
            });
        }
        let out: Vec<f64> = (0..x.nrows())
            .map(|i| {
                let eta = self.intercept + (0..x.ncols()).map(|j| x[(i, j)] * self.coef[j]).sum::<f64>();
                sigmoid(eta).clamp(PROB_EPS, 1.0 - PROB_EPS)
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(HteError::Divergence("classifier prediction"));
        }
        Ok(out)
    }
}
