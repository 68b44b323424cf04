use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{CateModel, Components, Family};
use crate::data::CausalDataset;
use crate::error::{HteError, Result};
use crate::learners::gp::{factor, lml_with_grad, maximize, rows_of, sq_dist_matrix, MAX_GP_ROWS};
use crate::seed::Stream;

/// Task covariance `B` of the coregionalised kernel `B[z, z′]·k(x, x′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coregionalization {
    /// `B = LLᵀ`, `L` lower-triangular, fitted with the other hyperparameters.
    Learned,
    /// Symmetric positive semi-definite `B`, held fixed.
    Fixed([[f64; 2]; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtGpParams {
    /// Starting (or fixed) RBF lengthscale of the unit-variance input kernel.
    pub lengthscale: f64,
    pub noise: f64,
    pub coregionalization: Coregionalization,
    pub optimize: bool,
    pub restarts: usize,
}

impl Default for MtGpParams {
    fn default() -> Self {
        Self {
            lengthscale: 1.0,
            noise: 0.1,
            coregionalization: Coregionalization::Learned,
            optimize: true,
            restarts: 3,
        }
    }
}

/// One GP over `(x, z)`; outcomes are centred by their mean before fitting.
#[derive(Debug, Clone)]
pub struct MultitaskGp {
    rows: Vec<Vec<f64>>,
    z: Vec<u8>,
    b: [[f64; 2]; 2],
    lengthscale: f64,
    noise: f64,
    y_mean: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_marginal_likelihood: f64,
}

struct Problem<'a> {
    d2: DMatrix<f64>,
    z: &'a [u8],
    y: &'a [f64],
    fixed_b: Option<[[f64; 2]; 2]>,
}

fn b_from_chol(l11: f64, l21: f64, l22: f64) -> [[f64; 2]; 2] {
    let b01 = l11 * l21;
    [[l11 * l11, b01], [b01, l21 * l21 + l22 * l22]]
}

impl Problem<'_> {
    /// `θ = (ln ℓ, ln σ², [ln l11, l21, ln l22])`.
    fn unpack(&self, t: &[f64]) -> (f64, f64, [[f64; 2]; 2]) {
        let b = match self.fixed_b {
            Some(b) => b,
            None => b_from_chol(t[2].exp(), t[3], t[4].exp()),
        };
        (t[0].exp(), t[1].exp(), b)
    }

    fn unit_kernel(&self, ell: f64) -> DMatrix<f64> {
        self.d2.map(|v| (-0.5 * v / (ell * ell)).exp())
    }

    fn kernel(&self, ell: f64, noise: f64, b: &[[f64; 2]; 2]) -> DMatrix<f64> {
        let n = self.z.len();
        let k = self.unit_kernel(ell);
        DMatrix::from_fn(n, n, |i, j| {
            let v = b[self.z[i] as usize][self.z[j] as usize] * k[(i, j)];
            if i == j {
                v + noise
            } else {
                v
            }
        })
    }

    fn lml(&self, t: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (ell, noise, b) = self.unpack(t);
        let n = self.z.len();
        let k = self.unit_kernel(ell);
        let scaled = |m: [[f64; 2]; 2], extra: &dyn Fn(usize, usize) -> f64| {
            DMatrix::from_fn(n, n, |i, j| m[self.z[i] as usize][self.z[j] as usize] * k[(i, j)] * extra(i, j))
        };
        let one = |_: usize, _: usize| 1.0;
        let mut dk = vec![
            scaled(b, &|i, j| self.d2[(i, j)] / (ell * ell)),
            DMatrix::from_diagonal_element(n, n, noise),
        ];
        if self.fixed_b.is_none() {
            let (l11, l21, l22) = (t[2].exp(), t[3], t[4].exp());
            dk.push(scaled([[2.0 * l11 * l11, l11 * l21], [l11 * l21, 0.0]], &one));
            dk.push(scaled([[0.0, l11], [l11, 2.0 * l21]], &one));
            dk.push(scaled([[0.0, 0.0], [0.0, 2.0 * l22 * l22]], &one));
        }
        let mut full = scaled(b, &one);
        for i in 0..n {
            full[(i, i)] += noise;
        }
        lml_with_grad(&full, &dk, self.y)
    }
}

pub fn fit_multitask_gp(data: &CausalDataset, params: MtGpParams, rng: &mut Stream) -> Result<CateModel> {
    let gp = MultitaskGp::fit(data.covariates(), data.treatment(), data.outcome(), &params, rng)?;
    Ok(CateModel::new(Family::Mt, data.d(), None, false, Components::Mt(gp)))
}

fn check_psd(b: &[[f64; 2]; 2]) -> Result<()> {
    let ok = b[0][1] == b[1][0]
        && b[0][0] >= 0.0
        && b[1][1] >= 0.0
        && b[0][0] * b[1][1] - b[0][1] * b[1][0] >= -1e-12 * (1.0 + b[0][0] * b[1][1]);
    if ok {
        Ok(())
    } else {
        Err(HteError::invalid(format!("coregionalization matrix {b:?} is not symmetric PSD")))
    }
}

impl MultitaskGp {
    pub fn fit(x: &DMatrix<f64>, z: &[u8], y: &[f64], params: &MtGpParams, rng: &mut Stream) -> Result<Self> {
        let n = y.len();
        crate::error::check_len(x.nrows(), n)?;
        crate::error::check_len(z.len(), n)?;
        if n > MAX_GP_ROWS {
            return Err(HteError::invalid(format!("GP limited to {MAX_GP_ROWS} rows, got {n}")));
        }
        if !(params.lengthscale > 0.0 && params.noise > 0.0) {
            return Err(HteError::invalid("lengthscale and noise must be > 0"));
        }
        let fixed_b = match params.coregionalization {
            Coregionalization::Fixed(b) => {
                check_psd(&b)?;
                Some(b)
            }
            Coregionalization::Learned => None,
        };
        let rows = rows_of(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let var = (yc.iter().map(|v| v * v).sum::<f64>() / n as f64).max(1e-6);
        let problem = Problem {
            d2: sq_dist_matrix(&rows),
            z,
            y: &yc,
            fixed_b,
        };

        let mut theta = vec![params.lengthscale.ln(), params.noise.ln()];
        let mut lower = vec![(1e-3f64).ln(), (1e-8f64).ln()];
        let mut upper = vec![(1e3f64).ln(), (1e4f64).ln()];
        if fixed_b.is_none() {
            // Start from strongly correlated tasks with the outcome's scale.
            let s = var.sqrt();
            theta.extend([s.ln(), 0.9 * s, (0.19f64.sqrt() * s).ln()]);
            lower.extend([(1e-4f64).ln(), -1e3, (1e-4f64).ln()]);
            upper.extend([(1e3f64).ln(), 1e3, (1e3f64).ln()]);
        }
        if params.optimize {
            let objective = |t: &[f64]| problem.lml(t);
            let mut best = maximize(&objective, &theta, &lower, &upper);
            for _ in 0..params.restarts {
                let start: Vec<f64> = theta.iter().map(|t| t + rng.sample::<f64, _>(StandardNormal)).collect();
                if let Some((t, v)) = maximize(&objective, &start, &lower, &upper) {
                    if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
                        best = Some((t, v));
                    }
                }
            }
            theta = best.ok_or(HteError::IllConditionedKernel { jitter: 1e-2 })?.0;
        }
        let (lengthscale, noise, b) = problem.unpack(&theta);
        let k = problem.kernel(lengthscale, noise, &b);
        let (chol, _) = factor(&k)?;
        let yv = DVector::from_column_slice(&yc);
        let alpha = chol.solve(&yv);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let lml = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            rows,
            z: z.to_vec(),
            b,
            lengthscale,
            noise,
            y_mean,
            alpha,
            chol,
            log_marginal_likelihood: lml,
        })
    }

    pub fn coregionalization(&self) -> [[f64; 2]; 2] {
        self.b
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn cross(&self, q: &[f64], arm: usize) -> DVector<f64> {
        let ell2 = self.lengthscale * self.lengthscale;
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().zip(&self.z).map(|(r, &zi)| {
                let d2: f64 = q.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum();
                self.b[arm][zi as usize] * (-0.5 * d2 / ell2).exp()
            }),
        )
    }

    /// Posterior means of the control and treated surfaces.
    pub fn predict_arms(&self, x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        rows_of(x)
            .iter()
            .map(|q| {
                (
                    self.y_mean + self.cross(q, 0).dot(&self.alpha),
                    self.y_mean + self.cross(q, 1).dot(&self.alpha),
                )
            })
            .unzip()
    }

    pub fn predict_cate(&self, x: &DMatrix<f64>) -> Vec<f64> {
        rows_of(x)
            .iter()
            .map(|q| (self.cross(q, 1) - self.cross(q, 0)).dot(&self.alpha))
            .collect()
    }

    /// `Var[f(x, 1) − f(x, 0)]` under the posterior.
    pub fn predict_cate_variance(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let prior = self.b[1][1] + self.b[0][0] - 2.0 * self.b[0][1];
        rows_of(x)
            .iter()
            .map(|q| {
                let c = self.cross(q, 1) - self.cross(q, 0);
                let v = self
                    .chol
                    .l_dirty()
                    .solve_lower_triangular(&c)
                    .expect("Cholesky factor has a positive diagonal");
                (prior - v.dot(&v)).max(0.0)
            })
            .collect()
    }
}
