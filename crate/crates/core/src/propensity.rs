//! Propensity scores: cross-fitted logistic estimates, clipping and overlap
//! diagnostics.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{select_rows, CausalDataset};
use crate::error::{check_len, HteError, Result};
use crate::learners::ClassifierModel;
use crate::seed::Stream;
use crate::split::fold_assignment;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityOptions {
    /// 1 disables cross-fitting; `n` is leave-one-out.
    pub folds: usize,
    pub l2: f64,
    pub clip: (f64, f64),
}

impl Default for PropensityOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            l2: 1e-2,
            clip: (0.01, 0.99),
        }
    }
}

impl PropensityOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(HteError::invalid(format!("clip bounds ({lo}, {hi}) must satisfy 0 < low < high < 1")));
        }
        if self.folds == 0 {
            return Err(HteError::invalid("folds must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Source {
    /// Fold classifiers; new points get the average of their probabilities.
    Fitted(Vec<ClassifierModel>),
    /// Known assignment probability.
    Constant(f64),
}

/// Fitted `π̂(x)`; every value it emits lies in `[clip.0, clip.1]`.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    source: Source,
    dim: usize,
    clip: (f64, f64),
    fold_assignments: Option<Vec<usize>>,
}

impl PropensityModel {
    pub fn constant(p: f64, dim: usize, clip: (f64, f64)) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(HteError::PropensityOutOfRange { value: p });
        }
        Ok(Self {
            source: Source::Constant(p),
            dim,
            clip,
            fold_assignments: None,
        })
    }

    pub fn clip_bounds(&self) -> (f64, f64) {
        self.clip
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cross_fitted(&self) -> bool {
        self.fold_assignments.is_some()
    }

    pub fn fold_assignments(&self) -> Option<&[usize]> {
        self.fold_assignments.as_deref()
    }

    pub fn classifiers(&self) -> &[ClassifierModel] {
        match &self.source {
            Source::Fitted(c) => c,
            Source::Constant(_) => &[],
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim {
            return Err(HteError::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let raw = match &self.source {
            Source::Constant(p) => vec![*p; x.nrows()],
            Source::Fitted(models) => {
                let mut acc = vec![0.0; x.nrows()];
                for m in models {
                    for (a, p) in acc.iter_mut().zip(m.predict_proba(x)?) {
                        *a += p;
                    }
                }
                let k = models.len() as f64;
                acc.into_iter().map(|a| a / k).collect()
            }
        };
        Ok(raw.into_iter().map(|p| p.clamp(self.clip.0, self.clip.1)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct PropensityEstimate {
    pub model: PropensityModel,
    /// Per-unit estimate; out-of-fold when cross-fitted.
    pub pi_hat: Vec<f64>,
}

pub fn estimate_propensity(data: &CausalDataset, options: PropensityOptions, rng: &mut Stream) -> Result<PropensityEstimate> {
    estimate_propensity_xz(data.covariates(), data.treatment(), options, rng)
}

fn training_sets_have_both_classes(z: &[u8], folds: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let mut seen = [false; 2];
        for (i, &fi) in folds.iter().enumerate() {
            if fi != f {
                seen[z[i] as usize] = true;
            }
        }
        seen[0] && seen[1]
    })
}

/// Fold labels dealt round-robin within each arm after shuffling.
fn stratified_folds(z: &[u8], k: usize, rng: &mut Stream) -> Vec<usize> {
    let mut folds = vec![0; z.len()];
    let mut next = 0;
    for arm in [0u8, 1] {
        let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] == arm).collect();
        idx.shuffle(rng);
        for i in idx {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

pub fn estimate_propensity_xz(
    x: &DMatrix<f64>,
    z: &[u8],
    options: PropensityOptions,
    rng: &mut Stream,
) -> Result<PropensityEstimate> {
    options.validate()?;
    check_len(x.nrows(), z.len())?;
    let n = z.len();
    let treated = z.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == n {
        return Err(HteError::EmptyTreatedArm);
    }
    let k = options.folds;
    let clip = options.clip;
    let clamp = |p: Vec<f64>| -> Vec<f64> { p.into_iter().map(|v| v.clamp(clip.0, clip.1)).collect() };

    if k == 1 {
        let c = ClassifierModel::fit(x, z, options.l2)?;
        let pi_hat = clamp(c.predict_proba(x)?);
        return Ok(PropensityEstimate {
            model: PropensityModel {
                source: Source::Fitted(vec![c]),
                dim: x.ncols(),
                clip,
                fold_assignments: None,
            },
            pi_hat,
        });
    }
    if k > n {
        return Err(HteError::invalid(format!("folds = {k} exceeds n = {n}")));
    }

    let mut folds = fold_assignment(n, k, rng);
    if !training_sets_have_both_classes(z, &folds, k) {
        folds = stratified_folds(z, k, rng);
        if !training_sets_have_both_classes(z, &folds, k) {
            return Err(HteError::Stratification(format!(
                "cannot build {k} folds whose training sets contain both arms ({treated} treated of {n})"
            )));
        }
    }

    let mut pi_hat = vec![0.0; n];
    let mut models = Vec::with_capacity(k);
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let zt: Vec<u8> = train.iter().map(|&i| z[i]).collect();
        let c = ClassifierModel::fit(&select_rows(x, &train), &zt, options.l2)?;
        if !held.is_empty() {
            for (&i, p) in held.iter().zip(c.predict_proba(&select_rows(x, &held))?) {
                pi_hat[i] = p;
            }
        }
        models.push(c);
    }
    Ok(PropensityEstimate {
        model: PropensityModel {
            source: Source::Fitted(models),
            dim: x.ncols(),
            clip,
            fold_assignments: Some(folds),
        },
        pi_hat: clamp(pi_hat),
    })
}

pub const OVERLAP_BINS: usize = 20;
pub const OVERLAP_LOW: f64 = 0.05;
pub const OVERLAP_HIGH: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    /// `OVERLAP_BINS + 1` equally spaced edges on [0, 1].
    pub bin_edges: Vec<f64>,
    pub treated_counts: Vec<usize>,
    pub control_counts: Vec<usize>,
    /// Units with π̂ outside [0.05, 0.95].
    pub outside: usize,
    /// `Σ_b min(treated_b / n₁, control_b / n₀)`, in [0, 1].
    pub overlap_coefficient: f64,
}

fn bin_of(p: f64) -> usize {
    ((p * OVERLAP_BINS as f64).floor().max(0.0) as usize).min(OVERLAP_BINS - 1)
}

pub fn overlap_diagnostics(pi_hat: &[f64], z: &[u8]) -> Result<OverlapReport> {
    check_len(pi_hat.len(), z.len())?;
    let mut treated_counts = vec![0; OVERLAP_BINS];
    let mut control_counts = vec![0; OVERLAP_BINS];
    let mut outside = 0;
    for (&p, &zi) in pi_hat.iter().zip(z) {
        if zi == 1 {
            treated_counts[bin_of(p)] += 1;
        } else {
            control_counts[bin_of(p)] += 1;
        }
        if !(OVERLAP_LOW..=OVERLAP_HIGH).contains(&p) {
            outside += 1;
        }
    }
    let n1: usize = treated_counts.iter().sum();
    let n0: usize = control_counts.iter().sum();
    let overlap_coefficient = if n1 == 0 || n0 == 0 {
        0.0
    } else {
        treated_counts
            .iter()
            .zip(&control_counts)
            .map(|(&t, &c)| (t as f64 / n1 as f64).min(c as f64 / n0 as f64))
            .sum::<f64>()
            .min(1.0)
    };
    Ok(OverlapReport {
        bin_edges: (0..=OVERLAP_BINS).map(|b| b as f64 / OVERLAP_BINS as f64).collect(),
        treated_counts,
        control_counts,
        outside,
        overlap_coefficient,
    })
}

impl OverlapReport {
    /// Rows `bin_low,bin_high,treated,control`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_low", "bin_high", "treated", "control"])?;
        for b in 0..OVERLAP_BINS {
            w.write_record([
                format!("{:.2}", self.bin_edges[b]),
                format!("{:.2}", self.bin_edges[b + 1]),
                self.treated_counts[b].to_string(),
                self.control_counts[b].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
