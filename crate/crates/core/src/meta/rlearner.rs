use nalgebra::DMatrix;

use super::{CateModel, Components, Family};
use crate::data::{select_rows, CausalDataset};
use crate::error::{check_len, HteError, Result};
use crate::learners::{LearnerSpec, RegressionModel};
use crate::propensity::PropensityEstimate;
use crate::seed::{fork, Stream};
use crate::split::fold_assignment;

/// Units with `|z − π̂|` below this get weight 0 in the τ fit.
pub const R_WEIGHT_FLOOR: f64 = 1e-6;

/// Ingredients of the R-loss `Σ (ỹ − z̃·τ)²` and its weighted form
/// `Σ z̃² (ỹ/z̃ − τ)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RLearnerLossParts {
    /// `y − m̂(x)`
    pub residual_outcome: Vec<f64>,
    /// `z − π̂(x)`
    pub residual_treatment: Vec<f64>,
    /// `(z − π̂)²`, or 0 when `|z − π̂| < R_WEIGHT_FLOOR`.
    pub weights: Vec<f64>,
    /// `(y − m̂) / (z − π̂)`, or 0 where the weight is 0.
    pub pseudo_target: Vec<f64>,
}

impl RLearnerLossParts {
    pub fn new(y: &[f64], m_hat: &[f64], z: &[f64], pi_hat: &[f64]) -> Result<Self> {
        check_len(y.len(), m_hat.len())?;
        check_len(y.len(), z.len())?;
        check_len(y.len(), pi_hat.len())?;
        let residual_outcome: Vec<f64> = y.iter().zip(m_hat).map(|(a, b)| a - b).collect();
        let residual_treatment: Vec<f64> = z.iter().zip(pi_hat).map(|(a, b)| a - b).collect();
        let (weights, pseudo_target) = residual_outcome
            .iter()
            .zip(&residual_treatment)
            .map(|(&ro, &rt)| if rt.abs() < R_WEIGHT_FLOOR { (0.0, 0.0) } else { (rt * rt, ro / rt) })
            .unzip();
        Ok(Self {
            residual_outcome,
            residual_treatment,
            weights,
            pseudo_target,
        })
    }

    /// `Σ (y − m̂ − (z − π̂)·τ)²`.
    pub fn loss_direct(&self, tau: &[f64]) -> f64 {
        self.residual_outcome
            .iter()
            .zip(&self.residual_treatment)
            .zip(tau)
            .map(|((ro, rt), t)| (ro - rt * t).powi(2))
            .sum()
    }

    /// `Σ w (pseudo − τ)²` over units with positive weight.
    pub fn loss_weighted(&self, tau: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.pseudo_target)
            .zip(tau)
            .map(|((w, p), t)| w * (p - t).powi(2))
            .sum()
    }
}

/// Second stage: weighted regression of the pseudo-target on `x`.
pub fn fit_r_stage2(
    x: &DMatrix<f64>,
    parts: &RLearnerLossParts,
    base_tau: LearnerSpec,
    rng: &mut Stream,
) -> Result<RegressionModel> {
    check_len(x.nrows(), parts.weights.len())?;
    if parts.weights.iter().all(|&w| w == 0.0) {
        return Err(HteError::invalid("every unit has |z − π̂| below the weight floor"));
    }
    base_tau.fit(x, &parts.pseudo_target, Some(&parts.weights), rng)
}

/// Cross-fitted `m̂(x) = E[Y | X = x]` with `folds` folds.
pub(crate) fn cross_fit_outcome(
    x: &DMatrix<f64>,
    y: &[f64],
    spec: LearnerSpec,
    folds: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(HteError::invalid(format!("folds = {folds} outside [2, {n}]")));
    }
    let assignment = fold_assignment(n, folds, rng);
    let mut m_hat = vec![0.0; n];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let m = spec.fit(&select_rows(x, &train), &yt, None, &mut fork(rng))?;
        for (&i, p) in held.iter().zip(m.predict(&select_rows(x, &held))?) {
            m_hat[i] = p;
        }
    }
    Ok(m_hat)
}

/// Cross-fitted nuisances, then the weighted pseudo-outcome fit. Tuning of
/// `base_tau` (lasso path, kNN k) runs as weighted CV on the same loss.
pub fn fit_r_learner(
    data: &CausalDataset,
    base_tau: LearnerSpec,
    m_spec: LearnerSpec,
    folds: usize,
    propensity: &PropensityEstimate,
    rng: &mut Stream,
) -> Result<CateModel> {
    check_len(data.n(), propensity.pi_hat.len())?;
    let x = data.covariates();
    let m_hat = cross_fit_outcome(x, data.outcome(), m_spec, folds, rng)?;
    let parts = RLearnerLossParts::new(data.outcome(), &m_hat, &data.treatment_f64(), &propensity.pi_hat)?;
    let tau = fit_r_stage2(x, &parts, base_tau, &mut fork(rng))?;
    Ok(CateModel::new(
        Family::R,
        data.d(),
        Some(propensity.model.clone()),
        false,
        Components::R { tau, m: None },
    ))
}
