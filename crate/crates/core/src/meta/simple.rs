use nalgebra::DMatrix;

use super::{min_fit_size, require_arm, training_inputs, CateModel, Components, Family};
use crate::data::{hstack_column, select_rows, CausalDataset};
use crate::error::{HteError, Result};
use crate::learners::{LearnerSpec, RegressionModel};
use crate::propensity::PropensityEstimate;
use crate::seed::{fork, Stream};

/// The X-learner's `g(x)` in `τ̂ = g·τ̂₀ + (1 − g)·τ̂₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XWeight {
    Propensity,
    One,
    Zero,
    Constant(f64),
}

/// One model on `[X, (π̂), Z]`; `τ̂(x) = f̂(x, 1) − f̂(x, 0)`.
///
/// Passing a propensity estimate appends its π̂ as a covariate.
pub fn fit_s_learner(
    data: &CausalDataset,
    base: LearnerSpec,
    propensity: Option<&PropensityEstimate>,
    rng: &mut Stream,
) -> Result<CateModel> {
    let x = training_inputs(data, propensity)?;
    let design = hstack_column(&x, &data.treatment_f64());
    let f = base.fit(&design, data.outcome(), None, &mut fork(rng))?;
    Ok(CateModel::new(
        Family::S,
        data.d(),
        propensity.map(|p| p.model.clone()),
        propensity.is_some(),
        Components::S { f },
    ))
}

fn fit_arms(
    data: &CausalDataset,
    x: &DMatrix<f64>,
    base0: LearnerSpec,
    base1: LearnerSpec,
    rng: &mut Stream,
) -> Result<(RegressionModel, RegressionModel)> {
    require_arm(data, 0, min_fit_size(&base0))?;
    require_arm(data, 1, min_fit_size(&base1))?;
    let fit = |arm: u8, spec: LearnerSpec, rng: &mut Stream| {
        let rows = data.arm_indices(arm);
        let y: Vec<f64> = rows.iter().map(|&i| data.outcome()[i]).collect();
        spec.fit(&select_rows(x, &rows), &y, None, &mut fork(rng))
    };
    let f0 = fit(0, base0, rng)?;
    let f1 = fit(1, base1, rng)?;
    Ok((f0, f1))
}

/// Separate surfaces per arm; `τ̂ = f̂₁ − f̂₀`.
pub fn fit_t_learner(
    data: &CausalDataset,
    base0: LearnerSpec,
    base1: LearnerSpec,
    propensity: Option<&PropensityEstimate>,
    rng: &mut Stream,
) -> Result<CateModel> {
    let x = training_inputs(data, propensity)?;
    let (f0, f1) = fit_arms(data, &x, base0, base1, rng)?;
    Ok(CateModel::new(
        Family::T,
        data.d(),
        propensity.map(|p| p.model.clone()),
        propensity.is_some(),
        Components::T { f0, f1 },
    ))
}

/// T-learner, imputed effects per arm, then a weighted blend of the two
/// effect surfaces.
pub fn fit_x_learner(
    data: &CausalDataset,
    base: LearnerSpec,
    propensity: Option<&PropensityEstimate>,
    weight: XWeight,
    rng: &mut Stream,
) -> Result<CateModel> {
    if let XWeight::Constant(c) = weight {
        if !(0.0..=1.0).contains(&c) {
            return Err(HteError::invalid(format!("X-learner weight {c} not in [0, 1]")));
        }
    }
    if weight == XWeight::Propensity && propensity.is_none() {
        return Err(HteError::invalid("propensity weighting needs a propensity estimate"));
    }
    let x = data.covariates();
    let (f0, f1) = fit_arms(data, x, base, base, rng)?;
    let y = data.outcome();

    let treated = data.arm_indices(1);
    let control = data.arm_indices(0);
    let xt = select_rows(x, &treated);
    let xc = select_rows(x, &control);
    let d1: Vec<f64> = f0
        .predict(&xt)?
        .iter()
        .zip(&treated)
        .map(|(m0, &i)| y[i] - m0)
        .collect();
    let d0: Vec<f64> = f1
        .predict(&xc)?
        .iter()
        .zip(&control)
        .map(|(m1, &i)| m1 - y[i])
        .collect();
    let tau1 = base.fit(&xt, &d1, None, &mut fork(rng))?;
    let tau0 = base.fit(&xc, &d0, None, &mut fork(rng))?;
    Ok(CateModel::new(
        Family::X,
        data.d(),
        propensity.map(|p| p.model.clone()),
        false,
        Components::X {
            f0,
            f1,
            tau0,
            tau1,
            weight,
        },
    ))
}
