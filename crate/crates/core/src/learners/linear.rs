use nalgebra::{DMatrix, DVector};

use super::{AliasPolicy, LearnerSpec, Penalty, RegressionModel};
use crate::error::{HteError, Result};
use crate::seed::{SeedTree, Stream};
use crate::split::fold_assignment;

/// Relative residual norm below which a column counts as aliased (R's `lm` uses 1e-7).
const ALIAS_TOL: f64 = 1e-7;
const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;
const LASSO_PATH_LEN: usize = 50;
const LASSO_PATH_RATIO: f64 = 1e-4;
const LASSO_CV_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    /// Design columns (0 = intercept) that were aliased and pinned to zero.
    pub aliased: Vec<usize>,
    /// Penalty strength actually used (after CV, if any).
    pub lambda: Option<f64>,
}

/// Unweighted fit; aliasing is an error.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64], penalty: Penalty) -> Result<RegressionModel> {
    let mut rng = SeedTree::new(0).derive_stream("fit_linear", 0);
    LearnerSpec::linear(penalty).fit(x, y, None, &mut rng)
}

impl LinearFit {
    pub(crate) fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        w: Option<&[f64]>,
        penalty: Penalty,
        aliased: AliasPolicy,
        rng: &mut Stream,
    ) -> Result<Self> {
        if y.len() < 2 {
            return Err(HteError::invalid("linear fit needs at least 2 rows"));
        }
        let w: Vec<f64> = match w {
            Some(w) => w.to_vec(),
            None => vec![1.0; y.len()],
        };
        match penalty {
            Penalty::None => ols(x, y, &w, aliased),
            Penalty::Ridge(lambda) => ridge(x, y, &w, lambda),
            Penalty::Lasso(lambda) => {
                let c = Centered::new(x, y, &w);
                let mut beta = vec![0.0; x.ncols()];
                c.coordinate_descent(lambda, &mut beta);
                Ok(c.finish(beta, Some(lambda)))
            }
            Penalty::LassoCv => lasso_cv(x, y, &w, rng),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coef
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }
}

fn ols(x: &DMatrix<f64>, y: &[f64], w: &[f64], policy: AliasPolicy) -> Result<LinearFit> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let design = DMatrix::from_fn(n, p, |i, j| {
        sw[i] * if j == 0 { 1.0 } else { x[(i, j - 1)] }
    });
    let rhs = DVector::from_fn(n, |i, _| sw[i] * y[i]);

    // Sequential Gram-Schmidt (two passes) to find columns in the span of earlier ones.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut aliased = Vec::new();
    for j in 0..p {
        let col = design.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= ALIAS_TOL * norm0 {
            aliased.push(j);
        } else {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    if !aliased.is_empty() && policy == AliasPolicy::Error {
        return Err(HteError::SingularDesign { aliased });
    }
    if kept.len() > n {
        return Err(HteError::SingularDesign { aliased });
    }

    let a = DMatrix::from_fn(n, kept.len(), |i, k| design[(i, kept[k])]);
    let qr = a.qr();
    let qtb = qr.q().transpose() * &rhs;
    let sol = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| HteError::SingularDesign { aliased: aliased.clone() })?;
    let mut full = vec![0.0; p];
    for (k, &j) in kept.iter().enumerate() {
        full[j] = sol[k];
    }
    Ok(LinearFit {
        intercept: full[0],
        coef: full[1..].to_vec(),
        aliased,
        lambda: None,
    })
}

fn ridge(x: &DMatrix<f64>, y: &[f64], w: &[f64], lambda: f64) -> Result<LinearFit> {
    let c = Centered::new(x, y, w);
    let d = x.ncols();
    // Unnormalised weights here: Σ w r² + λ‖β‖².
    let total: f64 = w.iter().sum();
    let scale = total; // c.w is normalised to sum 1
    let mut gram = DMatrix::zeros(d, d);
    let mut xty = DVector::zeros(d);
    for i in 0..c.xc.nrows() {
        let wi = c.w[i] * scale;
        for a in 0..d {
            let xa = c.xc[(i, a)];
            xty[a] += wi * xa * c.yc[i];
            for b in a..d {
                gram[(a, b)] += wi * xa * c.xc[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += lambda;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| HteError::SingularDesign { aliased: Vec::new() })?;
    let beta = chol.solve(&xty);
    Ok(c.finish(beta.iter().copied().collect(), Some(lambda)))
}

/// Weighted-centred copy of a regression problem; weights normalised to sum to one.
struct Centered {
    xc: DMatrix<f64>,
    yc: Vec<f64>,
    w: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
    col_sq: Vec<f64>,
}

impl Centered {
    fn new(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let n = x.nrows();
        let d = x.ncols();
        let x_mean: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| w[i] * x[(i, j)]).sum())
            .collect();
        let y_mean: f64 = (0..n).map(|i| w[i] * y[i]).sum();
        let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let col_sq = (0..d)
            .map(|j| (0..n).map(|i| w[i] * xc[(i, j)].powi(2)).sum())
            .collect();
        Self {
            xc,
            yc,
            w,
            x_mean,
            y_mean,
            col_sq,
        }
    }

    fn lambda_max(&self) -> f64 {
        (0..self.xc.ncols())
            .map(|j| {
                (0..self.xc.nrows())
                    .map(|i| self.w[i] * self.xc[(i, j)] * self.yc[i])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// Cyclic coordinate descent from the warm start in `beta`.
    fn coordinate_descent(&self, lambda: f64, beta: &mut [f64]) {
        let n = self.xc.nrows();
        let d = self.xc.ncols();
        let mut r: Vec<f64> = (0..n)
            .map(|i| self.yc[i] - (0..d).map(|j| self.xc[(i, j)] * beta[j]).sum::<f64>())
            .collect();
        for _ in 0..LASSO_MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for j in 0..d {
                if self.col_sq[j] <= 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let col = self.xc.column(j);
                let rho: f64 = (0..n).map(|i| self.w[i] * col[i] * r[i]).sum::<f64>()
                    + self.col_sq[j] * beta[j];
                let new = soft_threshold(rho, lambda) / self.col_sq[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    for i in 0..n {
                        r[i] -= delta * col[i];
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change <= LASSO_TOL {
                break;
            }
        }
    }

    fn finish(&self, beta: Vec<f64>, lambda: Option<f64>) -> LinearFit {
        let intercept = self.y_mean - beta.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum::<f64>();
        LinearFit {
            intercept,
            coef: beta,
            aliased: Vec::new(),
            lambda,
        }
    }
}

pub(crate) fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Smallest λ that zeroes every slope (unit weights).
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    Centered::new(x, y, &vec![1.0; y.len()]).lambda_max()
}

/// `len` log-spaced values from `lambda_max` down to `lambda_max · 1e-4`.
pub fn lasso_lambda_grid(lambda_max: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    (0..len)
        .map(|k| lambda_max * LASSO_PATH_RATIO.powf(k as f64 / (len - 1) as f64))
        .collect()
}

fn lasso_cv(x: &DMatrix<f64>, y: &[f64], w: &[f64], rng: &mut Stream) -> Result<LinearFit> {
    let n = y.len();
    let full = Centered::new(x, y, w);
    let lambda_max = full.lambda_max();
    if lambda_max <= 0.0 {
        return Ok(full.finish(vec![0.0; x.ncols()], Some(0.0)));
    }
    let grid = lasso_lambda_grid(lambda_max, LASSO_PATH_LEN);
    let folds = LASSO_CV_FOLDS.min(n);
    let assignment = fold_assignment(n, folds, rng);
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let held: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        if train.len() < 2 || held.is_empty() {
            continue;
        }
        let xt = crate::data::select_rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let c = Centered::new(&xt, &yt, &wt);
        let mut beta = vec![0.0; x.ncols()];
        for (g, &lambda) in grid.iter().enumerate() {
            c.coordinate_descent(lambda, &mut beta);
            let fit = c.finish(beta.clone(), Some(lambda));
            for &i in &held {
                let pred = fit.intercept
                    + fit.coef.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum::<f64>();
                sse[g] += w[i] * (y[i] - pred).powi(2);
            }
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if sse[g] < sse[best] {
            best = g;
        }
    }
    let mut beta = vec![0.0; x.ncols()];
    for &lambda in &grid[..=best] {
        full.coordinate_descent(lambda, &mut beta);
    }
    Ok(full.finish(beta, Some(grid[best])))
}
