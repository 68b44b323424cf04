//! Regression and classification base learners behind one fit/predict contract.
//!
//! Every regression learner accepts optional per-row weights. Rows with zero
//! weight are dropped before fitting.

mod boosting;
mod cv;
pub(crate) mod forest;
pub(crate) mod gp;
mod knn;
mod linear;
mod logistic;
mod tree;

pub use boosting::{fit_boosting, Boosting};
pub use cv::{cross_validate, CvOutcome};
pub use forest::{fit_forest, Forest};
pub use gp::{fit_gp, gp_log_marginal_likelihood, rbf, GpFit, RbfKernel};
pub use knn::{fit_knn, Knn, DEFAULT_K_GRID};
pub use linear::{fit_linear, lasso_lambda_grid, lasso_lambda_max, LinearFit};
pub use logistic::{fit_classifier, ClassifierModel};
pub(crate) use tree::TreeBuilder;
pub use tree::{fit_tree, Node, Tree};

use nalgebra::DMatrix;

use crate::data::select_rows;
use crate::error::{check_len, HteError, Result};
use crate::seed::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    /// `Σ w·r² + λ‖β‖²`.
    Ridge(f64),
    /// `½ Σ ŵ·r² + λ‖β‖₁` with weights normalised to sum to one.
    Lasso(f64),
    /// Lasso with λ picked by 5-fold CV over the default 50-point path.
    LassoCv,
}

/// What an unpenalised fit does with columns that are linear combinations of earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliasPolicy {
    Error,
    /// Pin aliased coefficients to zero, as R's `lm` reports them `NA`.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 200,
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostingParams {
    pub rounds: usize,
    pub rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            rounds: 200,
            rate: 0.1,
            max_depth: 3,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpParams {
    pub kernel: RbfKernel,
    pub noise: f64,
    pub optimize: bool,
    pub restarts: usize,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            kernel: RbfKernel {
                lengthscale: 1.0,
                variance: 1.0,
            },
            noise: 0.1,
            optimize: true,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerFamily {
    Linear,
    Knn,
    Tree,
    Forest,
    Boosting,
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Linear { penalty: Penalty, aliased: AliasPolicy },
    /// `k = None` tunes k over [`DEFAULT_K_GRID`] by 5-fold CV.
    Knn { k: Option<usize> },
    Tree { max_depth: usize, min_leaf: usize },
    Forest(ForestParams),
    Boosting(BoostingParams),
    Gp(GpParams),
}

impl LearnerSpec {
    pub fn ols() -> Self {
        LearnerSpec::Linear {
            penalty: Penalty::None,
            aliased: AliasPolicy::Error,
        }
    }

    pub fn linear(penalty: Penalty) -> Self {
        LearnerSpec::Linear {
            penalty,
            aliased: AliasPolicy::Error,
        }
    }

    pub fn knn(k: usize) -> Self {
        LearnerSpec::Knn { k: Some(k) }
    }

    pub fn tree(max_depth: usize, min_leaf: usize) -> Self {
        LearnerSpec::Tree { max_depth, min_leaf }
    }

    pub fn forest() -> Self {
        LearnerSpec::Forest(ForestParams::default())
    }

    pub fn boosting() -> Self {
        LearnerSpec::Boosting(BoostingParams::default())
    }

    pub fn gp() -> Self {
        LearnerSpec::Gp(GpParams::default())
    }

    pub fn family(&self) -> LearnerFamily {
        match self {
            LearnerSpec::Linear { .. } => LearnerFamily::Linear,
            LearnerSpec::Knn { .. } => LearnerFamily::Knn,
            LearnerSpec::Tree { .. } => LearnerFamily::Tree,
            LearnerSpec::Forest(_) => LearnerFamily::Forest,
            LearnerSpec::Boosting(_) => LearnerFamily::Boosting,
            LearnerSpec::Gp(_) => LearnerFamily::Gp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HteError::InvalidArgument(m));
        match *self {
            LearnerSpec::Linear { penalty, .. } => match penalty {
                Penalty::Ridge(l) | Penalty::Lasso(l) if !(l >= 0.0) => {
                    bad(format!("penalty strength {l} must be >= 0"))
                }
                _ => Ok(()),
            },
            LearnerSpec::Knn { k: Some(0) } => bad("k must be >= 1".into()),
            LearnerSpec::Knn { .. } => Ok(()),
            LearnerSpec::Tree { max_depth: 0, .. } => bad("max_depth must be >= 1".into()),
            LearnerSpec::Tree { min_leaf, .. } if min_leaf == 0 => bad("min_leaf must be >= 1".into()),
            LearnerSpec::Tree { .. } => Ok(()),
            LearnerSpec::Forest(p) => {
                if p.trees == 0 {
                    bad("forest needs at least one tree".into())
                } else if p.max_depth == 0 {
                    bad("max_depth must be >= 1".into())
                } else if p.min_leaf == 0 {
                    bad("min_leaf must be >= 1".into())
                } else if p.mtry == Some(0) {
                    bad("mtry must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            LearnerSpec::Boosting(p) => {
                if p.rounds == 0 {
                    bad("boosting needs at least one round".into())
                } else if p.max_depth == 0 {
                    bad("max_depth must be >= 1".into())
                } else if !(p.rate > 0.0 && p.rate <= 1.0) {
                    bad(format!("learning rate {} not in (0, 1]", p.rate))
                } else if p.min_leaf == 0 {
                    bad("min_leaf must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            LearnerSpec::Gp(p) => {
                if !(p.kernel.lengthscale > 0.0 && p.kernel.variance > 0.0) {
                    bad("kernel lengthscale and variance must be > 0".into())
                } else if !(p.noise > 0.0) {
                    bad("GP noise must be > 0".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The same learner with stronger regularisation, used for the τ surface of
    /// the τ-learner: depth 2 for trees and ensembles, 10× the penalty for
    /// penalised linear models.
    pub fn more_regularized(&self) -> LearnerSpec {
        match *self {
            LearnerSpec::Linear { penalty, aliased } => LearnerSpec::Linear {
                penalty: match penalty {
                    Penalty::Ridge(l) => Penalty::Ridge(10.0 * l),
                    Penalty::Lasso(l) => Penalty::Lasso(10.0 * l),
                    other => other,
                },
                aliased,
            },
            LearnerSpec::Tree { min_leaf, .. } => LearnerSpec::Tree { max_depth: 2, min_leaf },
            LearnerSpec::Forest(p) => LearnerSpec::Forest(ForestParams { max_depth: 2, ..p }),
            LearnerSpec::Boosting(p) => LearnerSpec::Boosting(BoostingParams { max_depth: 2, ..p }),
            other => other,
        }
    }

    /// Fits the learner to `(x, y)`.
    pub fn fit(
        &self,
        x: &DMatrix<f64>,
        y: &[f64],
        weights: Option<&[f64]>,
        rng: &mut Stream,
    ) -> Result<RegressionModel> {
        self.validate()?;
        check_len(x.nrows(), y.len())?;
        if let Some(w) = weights {
            check_len(y.len(), w.len())?;
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(HteError::invalid("weights must be finite and non-negative"));
            }
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(HteError::invalid("non-finite training data"));
        }
        let dim = x.ncols();
        // Drop zero-weight rows once here so that learners never see them.
        let owned;
        let (x, y, weights) = match weights {
            Some(w) if w.iter().any(|&v| v == 0.0) => {
                let rows: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
                owned = (
                    select_rows(x, &rows),
                    rows.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                    rows.iter().map(|&i| w[i]).collect::<Vec<_>>(),
                );
                (&owned.0, owned.1.as_slice(), Some(owned.2.as_slice()))
            }
            w => (x, y, w),
        };
        if y.is_empty() {
            return Err(HteError::invalid("no rows with positive weight"));
        }
        let state = match *self {
            LearnerSpec::Linear { penalty, aliased } => {
                Fitted::Linear(LinearFit::fit(x, y, weights, penalty, aliased, rng)?)
            }
            LearnerSpec::Knn { k } => Fitted::Knn(Knn::fit(x, y, weights, k, rng)?),
            LearnerSpec::Tree { max_depth, min_leaf } => {
                let builder = TreeBuilder::new(max_depth, min_leaf, None);
                Fitted::Tree(builder.fit(x, y, weights, rng)?)
            }
            LearnerSpec::Forest(p) => Fitted::Forest(Forest::fit(x, y, weights, &p, rng)?),
            LearnerSpec::Boosting(p) => Fitted::Boosting(Boosting::fit(x, y, weights, &p)?),
            LearnerSpec::Gp(p) => Fitted::Gp(GpFit::fit(x, y, weights, &p, rng)?),
        };
        Ok(RegressionModel {
            spec: *self,
            dim,
            state,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Linear(LinearFit),
    Knn(Knn),
    Tree(Tree),
    Forest(Forest),
    Boosting(Boosting),
    Gp(GpFit),
}

/// A fitted conditional-mean estimator.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    spec: LearnerSpec,
    dim: usize,
    state: Fitted,
}

impl RegressionModel {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self) -> &Fitted {
        &self.state
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(HteError::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let out = match &self.state {
            Fitted::Linear(m) => m.predict(x),
            Fitted::Knn(m) => m.predict(x),
            Fitted::Tree(m) => m.predict(x),
            Fitted::Forest(m) => m.predict(x),
            Fitted::Boosting(m) => m.predict(x),
            Fitted::Gp(m) => m.predict(x),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(HteError::Divergence("regression prediction"));
        }
        Ok(out)
    }

    /// Posterior predictive variance; only GP models provide one.
    pub fn predict_variance(&self, x: &DMatrix<f64>) -> Option<Vec<f64>> {
        match &self.state {
            Fitted::Gp(m) if x.ncols() == self.dim => Some(m.predict_variance(x)),
            _ => None,
        }
    }
}

pub(crate) fn weighted_mean(y: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        None => y.iter().sum::<f64>() / y.len() as f64,
        Some(w) => {
            let sw: f64 = w.iter().sum();
            y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
        }
    }
}
