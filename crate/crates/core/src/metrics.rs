//! PEHE, model-selection risks and estimator comparisons. All risks are raw
//! squared losses; take the root for √PEHE.

use nalgebra::DMatrix;

use crate::data::mean_sd;
use crate::error::{check_len, HteError, Result};
use crate::meta::CateModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RiskKind {
    Pehe,
    Mu,
    MuIptw,
    TauPlugin,
    TauIptw,
    RLoss,
}

impl RiskKind {
    pub const ALL: [RiskKind; 6] = [
        RiskKind::Pehe,
        RiskKind::Mu,
        RiskKind::MuIptw,
        RiskKind::TauPlugin,
        RiskKind::TauIptw,
        RiskKind::RLoss,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            RiskKind::Pehe => "pehe",
            RiskKind::Mu => "mu_risk",
            RiskKind::MuIptw => "mu_risk_iptw",
            RiskKind::TauPlugin => "tau_risk_plugin",
            RiskKind::TauIptw => "tau_risk_iptw",
            RiskKind::RLoss => "r_loss",
        }
    }

    pub fn from_key(key: &str) -> Option<RiskKind> {
        RiskKind::ALL.into_iter().find(|k| k.key() == key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub kind: RiskKind,
    pub value: f64,
    pub n: usize,
}

impl RiskEstimate {
    pub fn new(kind: RiskKind, value: f64, n: usize) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(HteError::invalid(format!("{} = {value} is not a finite non-negative risk", kind.key())));
        }
        Ok(Self { kind, value, n })
    }
}

fn mean_sq(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    if a.is_empty() {
        return Err(HteError::invalid("empty input"));
    }
    Ok(a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `(1/N) Σ (τᵢ − τ̂ᵢ)²`.
pub fn pehe(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    mean_sq(tau_hat, tau_true)
}

/// Mean squared error of `μ̂_{zᵢ}(xᵢ)` against the observed outcome.
pub fn mu_risk(mu_hat: &[f64], y_obs: &[f64]) -> Result<f64> {
    mean_sq(mu_hat, y_obs)
}

/// `π̂` for treated units, `1 − π̂` for controls.
fn arm_propensity(z: u8, pi: f64) -> Result<f64> {
    let p = if z == 1 { pi } else { 1.0 - pi };
    if !(p > 0.0 && p <= 1.0) || !(0.0..=1.0).contains(&pi) {
        return Err(HteError::PropensityOutOfRange { value: pi });
    }
    Ok(p)
}

/// `(1/N) Σ (μ̂ − y)² / π̂_{zᵢ}`.
pub fn mu_risk_iptw(mu_hat: &[f64], y_obs: &[f64], z: &[u8], pi_hat: &[f64]) -> Result<f64> {
    check_len(mu_hat.len(), y_obs.len())?;
    check_len(mu_hat.len(), z.len())?;
    check_len(mu_hat.len(), pi_hat.len())?;
    if mu_hat.is_empty() {
        return Err(HteError::invalid("empty input"));
    }
    let mut total = 0.0;
    for i in 0..mu_hat.len() {
        total += (mu_hat[i] - y_obs[i]).powi(2) / arm_propensity(z[i], pi_hat[i])?;
    }
    Ok(total / mu_hat.len() as f64)
}

/// `(1/N_val) Σ (τ̂(x) − τ̃(x))²` with `τ̃` a model trained on the training split.
pub fn tau_risk_plugin(tau_hat_val: &[f64], reference: &CateModel, x_val: &DMatrix<f64>) -> Result<f64> {
    check_len(tau_hat_val.len(), x_val.nrows())?;
    let tilde = reference.predict_cate(x_val)?;
    mean_sq(tau_hat_val, &tilde)
}

/// IPTW pseudo-outcome `(2z − 1)·y / π̃_z`.
pub fn iptw_pseudo_outcome(y: &[f64], z: &[u8], pi: &[f64]) -> Result<Vec<f64>> {
    check_len(y.len(), z.len())?;
    check_len(y.len(), pi.len())?;
    (0..y.len())
        .map(|i| {
            let sign = if z[i] == 1 { 1.0 } else { -1.0 };
            Ok(sign * y[i] / arm_propensity(z[i], pi[i])?)
        })
        .collect()
}

/// `(1/N) Σ (τ̂ − (2z − 1)·y / π̃_z)²`.
pub fn tau_risk_iptw(tau_hat_val: &[f64], y_val: &[f64], z_val: &[u8], pi_tilde_val: &[f64]) -> Result<f64> {
    let pseudo = iptw_pseudo_outcome(y_val, z_val, pi_tilde_val)?;
    mean_sq(tau_hat_val, &pseudo)
}

/// `(1/N) Σ ((y − m̂) − (z − π̂)·τ̂)²`.
pub fn r_loss(tau_hat: &[f64], y: &[f64], z: &[u8], m_hat: &[f64], pi_hat: &[f64]) -> Result<f64> {
    let n = tau_hat.len();
    check_len(n, y.len())?;
    check_len(n, z.len())?;
    check_len(n, m_hat.len())?;
    check_len(n, pi_hat.len())?;
    if n == 0 {
        return Err(HteError::invalid("empty input"));
    }
    Ok((0..n)
        .map(|i| ((y[i] - m_hat[i]) - (f64::from(z[i]) - pi_hat[i]) * tau_hat[i]).powi(2))
        .sum::<f64>()
        / n as f64)
}

/// Mean of `tau` over treated units.
pub fn att(tau: &[f64], z: &[u8]) -> Result<f64> {
    check_len(tau.len(), z.len())?;
    let (s, c) = tau
        .iter()
        .zip(z)
        .filter(|(_, &zi)| zi == 1)
        .fold((0.0, 0usize), |(s, c), (t, _)| (s + t, c + 1));
    if c == 0 {
        return Err(HteError::EmptyTreatedArm);
    }
    Ok(s / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CateComparison {
    pub pearson: f64,
    pub spearman: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sd_a: f64,
    pub sd_b: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson and Spearman correlations plus sample moments of two CATE vectors.
pub fn compare_cate_estimates(tau_a: &[f64], tau_b: &[f64]) -> Result<CateComparison> {
    check_len(tau_a.len(), tau_b.len())?;
    if tau_a.len() < 3 {
        return Err(HteError::invalid("need at least 3 units to compare"));
    }
    let (mean_a, sd_a) = mean_sd(tau_a.iter().copied());
    let (mean_b, sd_b) = mean_sd(tau_b.iter().copied());
    if sd_a == 0.0 || sd_b == 0.0 {
        return Err(HteError::ZeroVariance);
    }
    Ok(CateComparison {
        pearson: pearson(tau_a, tau_b),
        spearman: pearson(&average_ranks(tau_a), &average_ranks(tau_b)),
        mean_a,
        mean_b,
        sd_a,
        sd_b,
    })
}
