use nalgebra::DMatrix;

use super::{cross_validate, LearnerSpec, RegressionModel};
use crate::error::{HteError, Result};
use crate::seed::{SeedTree, Stream};

/// Candidate k values when k is left to cross-validation.
pub const DEFAULT_K_GRID: [usize; 5] = [1, 3, 5, 10, 20];
const DEFAULT_K: usize = 5;
const CV_FOLDS: usize = 5;

/// Brute-force k-nearest-neighbour regressor (Euclidean distance).
#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    x: DMatrix<f64>,
    y: Vec<f64>,
    w: Option<Vec<f64>>,
}

pub fn fit_knn(x: &DMatrix<f64>, y: &[f64], k: usize) -> Result<RegressionModel> {
    let mut rng = SeedTree::new(0).derive_stream("fit_knn", 0);
    LearnerSpec::knn(k).fit(x, y, None, &mut rng)
}

impl Knn {
    pub(crate) fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        w: Option<&[f64]>,
        k: Option<usize>,
        rng: &mut Stream,
    ) -> Result<Self> {
        let n = y.len();
        let k = match k {
            Some(k) => k,
            None => tune_k(x, y, w, rng)?,
        };
        if k == 0 || k > n {
            return Err(HteError::invalid(format!("k = {k} outside [1, {n}]")));
        }
        Ok(Self {
            k,
            x: x.clone(),
            y: y.to_vec(),
            w: w.map(<[f64]>::to_vec),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the k nearest training rows, nearest first, ties to the lower index.
    pub fn neighbours(&self, query: &[f64]) -> Vec<usize> {
        let n = self.x.nrows();
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let d2 = query
                    .iter()
                    .enumerate()
                    .map(|(j, q)| (q - self.x[(i, j)]).powi(2))
                    .sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < n {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| {
                let query: Vec<f64> = x.row(r).iter().copied().collect();
                let nb = self.neighbours(&query);
                match &self.w {
                    None => nb.iter().map(|&i| self.y[i]).sum::<f64>() / nb.len() as f64,
                    Some(w) => {
                        let sw: f64 = nb.iter().map(|&i| w[i]).sum();
                        nb.iter().map(|&i| w[i] * self.y[i]).sum::<f64>() / sw
                    }
                }
            })
            .collect()
    }
}

fn tune_k(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>, rng: &mut Stream) -> Result<usize> {
    let n = y.len();
    let folds = CV_FOLDS.min(n);
    if folds < 2 {
        return Ok(DEFAULT_K.min(n.max(1)));
    }
    // Smallest training fold has n - ceil(n / folds) rows.
    let max_k = n - n.div_ceil(folds);
    let grid: Vec<LearnerSpec> = DEFAULT_K_GRID
        .iter()
        .filter(|&&k| k <= max_k)
        .map(|&k| LearnerSpec::knn(k))
        .collect();
    if grid.is_empty() {
        return Ok(DEFAULT_K.min(n));
    }
    let cv = cross_validate(&grid, x, y, w, folds, rng)?;
    match cv.best {
        LearnerSpec::Knn { k: Some(k) } => Ok(k),
        _ => unreachable!("grid only holds knn specs"),
    }
}
