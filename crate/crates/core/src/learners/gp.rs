//! Exact Gaussian-process regression with an RBF kernel.
//!
//! Hyperparameters live in log space, `θ = (ln ℓ, ln s², ln σ²)`, and are
//! fitted by maximising the log marginal likelihood
//!
//! ```text
//! log p(y | θ) = −½ yᵀα − Σ ln Lᵢᵢ − (n/2) ln 2π,   α = K⁻¹y,  K = LLᵀ
//! ∂/∂θₖ        = ½ tr((ααᵀ − K⁻¹) ∂K/∂θₖ)
//! ```
//!
//! with plain gradient ascent and random restarts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GpParams, LearnerSpec, RegressionModel};
use crate::error::{HteError, Result};
use crate::seed::Stream;

pub(crate) const JITTER: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-2;
/// Dense factorisation guard.
pub const MAX_GP_ROWS: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub lengthscale: f64,
    pub variance: f64,
}

/// `variance · exp(−‖a − b‖² / (2ℓ²))`.
pub fn rbf(a: &[f64], b: &[f64], kernel: RbfKernel) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
    kernel.variance * (-0.5 * d2 / kernel.lengthscale.powi(2)).exp()
}

pub(crate) fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

pub(crate) fn sq_dist_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Cholesky of `k + jitter·I`, escalating jitter ×10 from 1e-6 up to 1e-2.
pub(crate) fn factor(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        if jitter >= MAX_JITTER {
            return Err(HteError::IllConditionedKernel { jitter });
        }
        jitter *= 10.0;
    }
}

/// Log marginal likelihood and its gradient for a kernel matrix `k` (noise
/// included) and its partial derivatives. `None` when `k` cannot be factored.
pub(crate) fn lml_with_grad(k: &DMatrix<f64>, dk: &[DMatrix<f64>], y: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = y.len();
    let (chol, _) = factor(k).ok()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if dk.is_empty() {
        return Some((lml, Vec::new()));
    }
    let kinv = chol.inverse();
    let grad = dk
        .iter()
        .map(|d| {
            // ½ tr((ααᵀ − K⁻¹) D) = ½ (αᵀDα − Σᵢⱼ K⁻¹ᵢⱼ Dⱼᵢ)
            let quad = alpha.dot(&(d * &alpha));
            let tr: f64 = kinv.iter().zip(d.transpose().iter()).map(|(a, b)| a * b).sum();
            0.5 * (quad - tr)
        })
        .collect();
    Some((lml, grad))
}

/// Gradient ascent with an adaptive step, clamped to box bounds.
pub(crate) fn maximize(
    f: &dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let clamp = |v: &mut Vec<f64>| {
        for (i, x) in v.iter_mut().enumerate() {
            *x = x.clamp(lower[i], upper[i]);
        }
    };
    let mut x = start.to_vec();
    clamp(&mut x);
    let (mut fx, mut g) = f(&x)?;
    let mut step = 0.1;
    for _ in 0..300 {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi / gnorm).collect();
            clamp(&mut cand);
            if let Some((fc, gc)) = f(&cand) {
                if fc > fx {
                    let gain = fc - fx;
                    x = cand;
                    fx = fc;
                    g = gc;
                    step = (step * 1.5).min(2.0);
                    improved = gain > 1e-10 * (1.0 + fx.abs());
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((x, fx))
}

#[derive(Debug, Clone)]
pub struct GpFit {
    rows: Vec<Vec<f64>>,
    kernel: RbfKernel,
    noise: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_marginal_likelihood: f64,
}

pub fn fit_gp(x: &DMatrix<f64>, y: &[f64], params: GpParams, rng: &mut Stream) -> Result<RegressionModel> {
    LearnerSpec::Gp(params).fit(x, y, None, rng)
}

fn kernel_matrix(d2: &DMatrix<f64>, kernel: RbfKernel, noise: &[f64]) -> DMatrix<f64> {
    let n = d2.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let k = kernel.variance * (-0.5 * d2[(i, j)] / kernel.lengthscale.powi(2)).exp();
        if i == j {
            k + noise[i]
        } else {
            k
        }
    })
}

fn lml_theta(d2: &DMatrix<f64>, y: &[f64], inv_w: &[f64], theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let kernel = RbfKernel {
        lengthscale: theta[0].exp(),
        variance: theta[1].exp(),
    };
    let noise2 = theta[2].exp();
    let noise: Vec<f64> = inv_w.iter().map(|iw| noise2 * iw).collect();
    let n = y.len();
    let kf = DMatrix::from_fn(n, n, |i, j| {
        kernel.variance * (-0.5 * d2[(i, j)] / kernel.lengthscale.powi(2)).exp()
    });
    let d_ell = DMatrix::from_fn(n, n, |i, j| kf[(i, j)] * d2[(i, j)] / kernel.lengthscale.powi(2));
    let d_var = kf.clone();
    let d_noise = DMatrix::from_diagonal(&DVector::from_column_slice(&noise));
    let mut k = kf;
    for i in 0..n {
        k[(i, i)] += noise[i];
    }
    lml_with_grad(&k, &[d_ell, d_var, d_noise], y)
}

/// Log marginal likelihood (unit weights, default jitter) and its gradient in
/// `(ln ℓ, ln s², ln σ²)`.
pub fn gp_log_marginal_likelihood(
    x: &DMatrix<f64>,
    y: &[f64],
    kernel: RbfKernel,
    noise: f64,
) -> Result<(f64, [f64; 3])> {
    let d2 = sq_dist_matrix(&rows_of(x));
    let theta = [kernel.lengthscale.ln(), kernel.variance.ln(), noise.ln()];
    let (v, g) = lml_theta(&d2, y, &vec![1.0; y.len()], &theta)
        .ok_or(HteError::IllConditionedKernel { jitter: MAX_JITTER })?;
    Ok((v, [g[0], g[1], g[2]]))
}

impl GpFit {
    pub(crate) fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        w: Option<&[f64]>,
        params: &GpParams,
        rng: &mut Stream,
    ) -> Result<Self> {
        let n = y.len();
        if n > MAX_GP_ROWS {
            return Err(HteError::invalid(format!("GP limited to {MAX_GP_ROWS} rows, got {n}")));
        }
        let rows = rows_of(x);
        let d2 = sq_dist_matrix(&rows);
        let inv_w: Vec<f64> = match w {
            Some(w) => w.iter().map(|v| 1.0 / v).collect(),
            None => vec![1.0; n],
        };
        let mut kernel = params.kernel;
        let mut noise = params.noise;
        if params.optimize {
            let lower = [(1e-3f64).ln(), (1e-6f64).ln(), (1e-8f64).ln()];
            let upper = [(1e3f64).ln(), (1e6f64).ln(), (1e4f64).ln()];
            let base = [kernel.lengthscale.ln(), kernel.variance.ln(), noise.ln()];
            let objective = |t: &[f64]| lml_theta(&d2, y, &inv_w, t);
            let mut best: Option<(Vec<f64>, f64)> = maximize(&objective, &base, &lower, &upper);
            for _ in 0..params.restarts {
                let start: Vec<f64> = base.iter().map(|b| b + rng.sample::<f64, _>(StandardNormal)).collect();
                if let Some((t, v)) = maximize(&objective, &start, &lower, &upper) {
                    if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
                        best = Some((t, v));
                    }
                }
            }
            let (theta, _) = best.ok_or(HteError::IllConditionedKernel { jitter: MAX_JITTER })?;
            kernel = RbfKernel {
                lengthscale: theta[0].exp(),
                variance: theta[1].exp(),
            };
            noise = theta[2].exp();
        }
        let noise_vec: Vec<f64> = inv_w.iter().map(|iw| noise * iw).collect();
        let k = kernel_matrix(&d2, kernel, &noise_vec);
        let (chol, _) = factor(&k)?;
        let yv = DVector::from_column_slice(y);
        let alpha = chol.solve(&yv);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let lml = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            rows,
            kernel,
            noise,
            alpha,
            chol,
            log_marginal_likelihood: lml,
        })
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn cross(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| rbf(q, r, self.kernel)))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        rows_of(x).iter().map(|q| self.cross(q).dot(&self.alpha)).collect()
    }

    /// Latent-function posterior variance (observation noise excluded).
    pub fn predict_variance(&self, x: &DMatrix<f64>) -> Vec<f64> {
        rows_of(x)
            .iter()
            .map(|q| {
                let k = self.cross(q);
                let v = self
                    .chol
                    .l_dirty()
                    .solve_lower_triangular(&k)
                    .expect("Cholesky factor has a positive diagonal");
                (self.kernel.variance - v.dot(&v)).max(0.0)
            })
            .collect()
    }
}
