//! CATE meta-learners built on the base learners.
//!
//! Every fit returns a [`CateModel`]; [`CateModel::predict_cate`] takes the
//! original `d` covariates and re-applies propensity augmentation itself.

mod forest;
mod mtgp;
mod rlearner;
mod simple;
mod tau;

pub use forest::{fit_causal_forest, CausalForest};
pub use mtgp::{fit_multitask_gp, Coregionalization, MtGpParams, MultitaskGp};
pub use rlearner::{fit_r_learner, fit_r_stage2, RLearnerLossParts, R_WEIGHT_FLOOR};
pub use simple::{fit_s_learner, fit_t_learner, fit_x_learner, XWeight};
pub use tau::{fit_tau_learner, TauOptions};

use nalgebra::DMatrix;

use crate::data::{hstack_column, CausalDataset, ColumnKind};
use crate::error::{HteError, Result};
use crate::learners::{LearnerSpec, RegressionModel};
use crate::propensity::{PropensityEstimate, PropensityModel};

/// Name of the appended propensity column.
pub const PS_COLUMN: &str = "ps_hat";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    S,
    T,
    X,
    R,
    Mt,
    Tau,
    Cf,
}

impl Family {
    pub fn key(&self) -> &'static str {
        match self {
            Family::S => "s",
            Family::T => "t",
            Family::X => "x",
            Family::R => "r",
            Family::Mt => "mt",
            Family::Tau => "tau",
            Family::Cf => "cf",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Components {
    S {
        f: RegressionModel,
    },
    T {
        f0: RegressionModel,
        f1: RegressionModel,
    },
    X {
        f0: RegressionModel,
        f1: RegressionModel,
        tau0: RegressionModel,
        tau1: RegressionModel,
        weight: XWeight,
    },
    R {
        tau: RegressionModel,
        m: Option<RegressionModel>,
    },
    Mt(MultitaskGp),
    Tau {
        mu: RegressionModel,
        tau: RegressionModel,
        /// `Σ (y − μ̂ − τ̂·z)²` after each sweep.
        objective: Vec<f64>,
    },
    Cf(CausalForest),
}

/// A fitted CATE estimator.
#[derive(Debug, Clone)]
pub struct CateModel {
    family: Family,
    dim: usize,
    /// Stored when the model appends π̂ to its inputs or weights by it.
    propensity: Option<PropensityModel>,
    /// Whether π̂ is appended to the covariates of the outcome models.
    uses_ps: bool,
    components: Components,
}

impl CateModel {
    pub(crate) fn new(
        family: Family,
        dim: usize,
        propensity: Option<PropensityModel>,
        uses_ps: bool,
        components: Components,
    ) -> Self {
        Self {
            family,
            dim,
            propensity,
            uses_ps,
            components,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn propensity(&self) -> Option<&PropensityModel> {
        self.propensity.as_ref()
    }

    pub fn uses_ps(&self) -> bool {
        self.uses_ps
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim {
            return Err(HteError::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn ps(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.propensity
            .as_ref()
            .ok_or_else(|| HteError::invalid("model has no propensity model"))?
            .predict(x)
    }

    /// Covariates as the outcome models saw them.
    fn outcome_inputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.uses_ps {
            Ok(hstack_column(x, &self.ps(x)?))
        } else {
            Ok(x.clone())
        }
    }

    pub fn predict_cate(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let out = match &self.components {
            Components::S { f } => {
                let xa = self.outcome_inputs(x)?;
                let p1 = f.predict(&hstack_column(&xa, &vec![1.0; x.nrows()]))?;
                let p0 = f.predict(&hstack_column(&xa, &vec![0.0; x.nrows()]))?;
                diff(&p1, &p0)
            }
            Components::T { f0, f1 } => {
                let xa = self.outcome_inputs(x)?;
                diff(&f1.predict(&xa)?, &f0.predict(&xa)?)
            }
            Components::X { tau0, tau1, weight, .. } => {
                let t0 = tau0.predict(x)?;
                let t1 = tau1.predict(x)?;
                let g = match weight {
                    XWeight::Propensity => self.ps(x)?,
                    XWeight::One => vec![1.0; x.nrows()],
                    XWeight::Zero => vec![0.0; x.nrows()],
                    XWeight::Constant(c) => vec![*c; x.nrows()],
                };
                (0..x.nrows()).map(|i| g[i] * t0[i] + (1.0 - g[i]) * t1[i]).collect()
            }
            Components::R { tau, .. } => tau.predict(x)?,
            Components::Mt(gp) => gp.predict_cate(x),
            Components::Tau { tau, .. } => tau.predict(x)?,
            Components::Cf(cf) => cf.predict(x),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(HteError::Divergence("CATE prediction"));
        }
        Ok(out)
    }

    /// Posterior variance of τ̂; only the multitask GP has one.
    pub fn predict_cate_variance(&self, x: &DMatrix<f64>) -> Result<Option<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(match &self.components {
            Components::Mt(gp) => Some(gp.predict_cate_variance(x)),
            _ => None,
        })
    }

    /// `(μ̂₀(x), μ̂₁(x))` for families with explicit outcome surfaces.
    pub fn predict_potential_outcomes(&self, x: &DMatrix<f64>) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        self.check_dim(x)?;
        Ok(match &self.components {
            Components::S { f } => {
                let xa = self.outcome_inputs(x)?;
                let p0 = f.predict(&hstack_column(&xa, &vec![0.0; x.nrows()]))?;
                let p1 = f.predict(&hstack_column(&xa, &vec![1.0; x.nrows()]))?;
                Some((p0, p1))
            }
            Components::T { f0, f1 } | Components::X { f0, f1, .. } => {
                let xa = self.outcome_inputs(x)?;
                Some((f0.predict(&xa)?, f1.predict(&xa)?))
            }
            Components::Mt(gp) => Some(gp.predict_arms(x)),
            Components::Tau { mu, tau, .. } => {
                let m = mu.predict(&self.outcome_inputs(x)?)?;
                let t = tau.predict(x)?;
                let m1 = m.iter().zip(&t).map(|(a, b)| a + b).collect();
                Some((m, m1))
            }
            Components::R { .. } | Components::Cf(_) => None,
        })
    }
}

/// Free-function form of [`CateModel::predict_cate`].
pub fn predict_cate(model: &CateModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict_cate(x)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

/// Appends π̂ as a continuous column named `ps_hat`.
pub fn augment_with_propensity(data: &CausalDataset, pi_hat: &[f64]) -> Result<CausalDataset> {
    data.append_column(PS_COLUMN, ColumnKind::Continuous, pi_hat)
}

/// Minimum arm size a learner needs to be fitted on one arm.
pub(crate) fn min_fit_size(spec: &LearnerSpec) -> usize {
    match *spec {
        LearnerSpec::Knn { k: Some(k) } => k.max(2),
        LearnerSpec::Tree { min_leaf, .. } => min_leaf.max(2),
        _ => 2,
    }
}

pub(crate) fn require_arm(data: &CausalDataset, arm: u8, required: usize) -> Result<()> {
    let size = data.arm_size(arm);
    if size < required {
        return Err(HteError::ArmTooSmall { arm, size, required });
    }
    Ok(())
}

/// Training inputs, optionally with the training-time π̂ appended.
pub(crate) fn training_inputs(data: &CausalDataset, ps: Option<&PropensityEstimate>) -> Result<DMatrix<f64>> {
    match ps {
        Some(est) => {
            crate::error::check_len(data.n(), est.pi_hat.len())?;
            if est.model.dim() != data.d() {
                return Err(HteError::DimensionMismatch {
                    expected: data.d(),
                    got: est.model.dim(),
                });
            }
            Ok(hstack_column(data.covariates(), &est.pi_hat))
        }
        None => Ok(data.covariates().clone()),
    }
}
