use nalgebra::DMatrix;

use super::LearnerSpec;
use crate::data::select_rows;
use crate::error::{HteError, Result};
use crate::seed::{SeedTree, Stream};
use crate::split::fold_assignment;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: LearnerSpec,
    pub best_index: usize,
    /// Pooled out-of-fold (weighted) mean squared error per grid point.
    pub errors: Vec<f64>,
    pub folds: Vec<usize>,
}

/// K-fold cross-validation over a grid of learner specs.
///
/// Folds come from [`fold_assignment`] drawn from `rng`; the error of a grid
/// point is `Σ wᵢ (yᵢ − ŷ₋ₖ₍ᵢ₎(xᵢ))² / Σ wᵢ`. Ties go to the earlier grid point.
pub fn cross_validate(
    grid: &[LearnerSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    folds: usize,
    rng: &mut Stream,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(HteError::invalid("cross-validation grid is empty"));
    }
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(HteError::invalid(format!("folds = {folds} outside [2, {n}]")));
    }
    let assignment = fold_assignment(n, folds, rng);
    let fit_seeds = SeedTree::new(rng.random::<u64>());
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_w: f64 = (0..n).map(w).sum();

    let mut errors = vec![0.0; grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let held: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let xt = select_rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let wt: Option<Vec<f64>> = weights.map(|w| train.iter().map(|&i| w[i]).collect());
        let xh = select_rows(x, &held);
        for (g, spec) in grid.iter().enumerate() {
            let mut s = fit_seeds.derive_stream("cv-fit", (fold * grid.len() + g) as u64);
            let model = spec.fit(&xt, &yt, wt.as_deref(), &mut s)?;
            let pred = model.predict(&xh)?;
            errors[g] += held
                .iter()
                .zip(&pred)
                .map(|(&i, p)| w(i) * (y[i] - p).powi(2))
                .sum::<f64>();
        }
    }
    errors.iter_mut().for_each(|e| *e /= total_w);
    let mut best_index = 0;
    for g in 1..grid.len() {
        if errors[g] < errors[best_index] {
            best_index = g;
        }
    }
    Ok(CvOutcome {
        best: grid[best_index],
        best_index,
        errors,
        folds: assignment,
    })
}
