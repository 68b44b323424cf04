use nalgebra::DMatrix;

use super::{weighted_mean, BoostingParams, LearnerSpec, RegressionModel, Tree, TreeBuilder};
use crate::error::Result;
use crate::seed::SeedTree;

/// Stagewise least-squares gradient boosting with CART base trees.
#[derive(Debug, Clone)]
pub struct Boosting {
    init: f64,
    rate: f64,
    trees: Vec<Tree>,
}

pub fn fit_boosting(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    params: BoostingParams,
) -> Result<RegressionModel> {
    let mut rng = SeedTree::new(0).derive_stream("fit_boosting", 0);
    LearnerSpec::Boosting(params).fit(x, y, weights, &mut rng)
}

impl Boosting {
    pub(crate) fn fit(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>, params: &BoostingParams) -> Result<Self> {
        let init = weighted_mean(y, w);
        let builder = TreeBuilder::new(params.max_depth, params.min_leaf, None);
        // All features are scanned, so the stream is never drawn from.
        let mut unused = SeedTree::new(0).stream();
        let mut fitted = vec![init; y.len()];
        let mut trees = Vec::with_capacity(params.rounds);
        for _ in 0..params.rounds {
            let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
            let tree = builder.fit(x, &residual, w, &mut unused)?;
            for (f, p) in fitted.iter_mut().zip(tree.predict(x)) {
                *f += params.rate * p;
            }
            trees.push(tree);
        }
        Ok(Self {
            init,
            rate: params.rate,
            trees,
        })
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Predictions after the first `rounds` trees.
    pub fn predict_staged(&self, x: &DMatrix<f64>, rounds: usize) -> Vec<f64> {
        let mut out = vec![self.init; x.nrows()];
        for tree in self.trees.iter().take(rounds) {
            for (o, p) in out.iter_mut().zip(tree.predict(x)) {
                *o += self.rate * p;
            }
        }
        out
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.predict_staged(x, self.trees.len())
    }
}
