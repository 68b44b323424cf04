use super::{require_arm, training_inputs, CateModel, Components, Family};
use crate::data::{select_rows, CausalDataset};
use crate::error::{HteError, Result};
use crate::learners::LearnerSpec;
use crate::propensity::PropensityEstimate;
use crate::seed::{fork, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauOptions {
    pub sweeps: usize,
    /// Stop once `max |Δτ̂|` over the training units falls to this value.
    pub tol: f64,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self { sweeps: 50, tol: 1e-6 }
    }
}

/// Backfitting for `y = μ(x) + τ(x)·z + ε`.
///
/// The μ-step regresses `y − τ̂(x)·z` on `x ⧺ π̂`; the τ-step regresses
/// `y − μ̂` on the treated units' `x`. `base_tau` defaults to
/// [`LearnerSpec::more_regularized`] of `base_mu`.
pub fn fit_tau_learner(
    data: &CausalDataset,
    base_mu: LearnerSpec,
    base_tau: Option<LearnerSpec>,
    propensity: Option<&PropensityEstimate>,
    options: TauOptions,
    rng: &mut Stream,
) -> Result<CateModel> {
    if options.sweeps == 0 {
        return Err(HteError::invalid("tau-learner needs at least one sweep"));
    }
    let base_tau = base_tau.unwrap_or_else(|| base_mu.more_regularized());
    require_arm(data, 1, 2)?;
    let x_mu = training_inputs(data, propensity)?;
    let x = data.covariates();
    let y = data.outcome();
    let z = data.treatment_f64();
    let treated = data.arm_indices(1);
    let x_treated = select_rows(x, &treated);

    let mut tau_hat = vec![0.0; data.n()];
    let mut objective = Vec::with_capacity(options.sweeps);
    let mut fitted = None;
    for _ in 0..options.sweeps {
        let target: Vec<f64> = (0..data.n()).map(|i| y[i] - tau_hat[i] * z[i]).collect();
        let mu = base_mu.fit(&x_mu, &target, None, &mut fork(rng))?;
        let mu_hat = mu.predict(&x_mu)?;
        let resid: Vec<f64> = treated.iter().map(|&i| y[i] - mu_hat[i]).collect();
        let tau = base_tau.fit(&x_treated, &resid, None, &mut fork(rng))?;
        let next = tau.predict(x)?;
        let loss: f64 = (0..data.n()).map(|i| (y[i] - mu_hat[i] - next[i] * z[i]).powi(2)).sum();
        if !loss.is_finite() {
            return Err(HteError::Divergence("tau-learner backfitting"));
        }
        objective.push(loss);
        let delta = next.iter().zip(&tau_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        tau_hat = next;
        fitted = Some((mu, tau));
        if delta <= options.tol {
            break;
        }
    }
    let (mu, tau) = fitted.expect("at least one sweep ran");
    Ok(CateModel::new(
        Family::Tau,
        data.d(),
        propensity.map(|p| p.model.clone()),
        propensity.is_some(),
        Components::Tau { mu, tau, objective },
    ))
}
