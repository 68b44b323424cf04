use nalgebra::DMatrix;
use rand::Rng;

use super::{ForestParams, LearnerSpec, RegressionModel, Tree, TreeBuilder};
use crate::error::Result;
use crate::seed::{fork, Stream};

/// Bagged CART ensemble with per-split feature subsampling.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
}

pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], params: ForestParams, rng: &mut Stream) -> Result<RegressionModel> {
    LearnerSpec::Forest(params).fit(x, y, None, rng)
}

pub(crate) fn resolve_mtry(mtry: Option<usize>, d: usize) -> usize {
    mtry.unwrap_or_else(|| d.div_ceil(3)).clamp(1, d.max(1))
}

/// Row sample for one tree: `n` draws with replacement, or every row once.
pub(crate) fn bootstrap_rows(n: usize, bootstrap: bool, rng: &mut Stream) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

impl Forest {
    pub(crate) fn fit(
        x: &DMatrix<f64>,
        y: &[f64],
        w: Option<&[f64]>,
        params: &ForestParams,
        rng: &mut Stream,
    ) -> Result<Self> {
        let mtry = resolve_mtry(params.mtry, x.ncols());
        let builder = TreeBuilder::new(params.max_depth, params.min_leaf, Some(mtry));
        let trees = (0..params.trees)
            .map(|_| {
                let mut tree_rng = fork(rng);
                let rows = bootstrap_rows(y.len(), params.bootstrap, &mut tree_rng);
                builder.fit_rows(x, y, w, &rows, &mut tree_rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut acc = vec![0.0; x.nrows()];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict(x)) {
                *a += p;
            }
        }
        let k = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }
}
