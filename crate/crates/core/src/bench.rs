//! Monte-Carlo replications: simulate outcomes on fixed covariates, split
//! 70/30, fit every model on the training part and score √PEHE on both parts.
//!
//! Replication `r` draws everything from `tree.child("rep", r)`:
//! `"simulate"` for the outcome surface, `"split"` for the partition,
//! `"propensity"` for π̂ and `("model", m)` for the m-th model. Results do not
//! depend on the order or thread replications run on.

use std::io::Write;

use nalgebra::DMatrix;

use crate::data::{mean_sd, select_rows, CausalDataset};
use crate::dgp::PreparedDgp;
use crate::error::{HteError, Result};
use crate::learners::{ForestParams, LearnerSpec};
use crate::meta::{
    fit_causal_forest, fit_multitask_gp, fit_r_learner, fit_s_learner, fit_t_learner, fit_tau_learner, fit_x_learner,
    CateModel, MtGpParams, TauOptions, XWeight,
};
use crate::metrics::pehe;
use crate::propensity::{estimate_propensity, PropensityEstimate, PropensityOptions};
use crate::seed::{SeedTree, Stream};
use crate::split::split_train_test;

/// z-value of the reported 95% intervals.
pub const CI_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    S { base: LearnerSpec, use_ps: bool },
    T { base: LearnerSpec, use_ps: bool },
    X { base: LearnerSpec, weight: XWeight },
    R { base_tau: LearnerSpec, m: LearnerSpec, folds: usize },
    Mt(MtGpParams),
    Tau { mu: LearnerSpec, tau: Option<LearnerSpec>, options: TauOptions, use_ps: bool },
    Cf(ForestParams),
    /// Treated-minus-control mean of the training outcomes, for every unit.
    DifferenceInMeans,
    /// Returns the true τ; only meaningful inside the benchmark.
    Oracle,
}

impl ModelKind {
    pub fn needs_propensity(&self) -> bool {
        match self {
            ModelKind::S { use_ps, .. } | ModelKind::T { use_ps, .. } | ModelKind::Tau { use_ps, .. } => *use_ps,
            ModelKind::X { weight, .. } => *weight == XWeight::Propensity,
            ModelKind::R { .. } => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, kind: ModelKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// Fits on `data`. `propensity` must be given when
    /// [`ModelKind::needs_propensity`] holds.
    pub fn fit(&self, data: &CausalDataset, propensity: Option<&PropensityEstimate>, rng: &mut Stream) -> Result<FittedModel> {
        let ps = || {
            propensity.ok_or_else(|| HteError::invalid(format!("model `{}` needs a propensity estimate", self.name)))
        };
        let model = match self.kind {
            ModelKind::S { base, use_ps } => fit_s_learner(data, base, if use_ps { Some(ps()?) } else { None }, rng)?,
            ModelKind::T { base, use_ps } => {
                fit_t_learner(data, base, base, if use_ps { Some(ps()?) } else { None }, rng)?
            }
            ModelKind::X { base, weight } => {
                let p = if weight == XWeight::Propensity { Some(ps()?) } else { None };
                fit_x_learner(data, base, p, weight, rng)?
            }
            ModelKind::R { base_tau, m, folds } => fit_r_learner(data, base_tau, m, folds, ps()?, rng)?,
            ModelKind::Mt(params) => fit_multitask_gp(data, params, rng)?,
            ModelKind::Tau { mu, tau, options, use_ps } => {
                fit_tau_learner(data, mu, tau, if use_ps { Some(ps()?) } else { None }, options, rng)?
            }
            ModelKind::Cf(params) => fit_causal_forest(data, params, rng)?,
            ModelKind::DifferenceInMeans => {
                let y = data.outcome();
                let mean = |arm: u8| {
                    let idx = data.arm_indices(arm);
                    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
                };
                return Ok(FittedModel::Constant(mean(1) - mean(0)));
            }
            ModelKind::Oracle => return Ok(FittedModel::Oracle),
        };
        Ok(FittedModel::Cate(Box::new(model)))
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Cate(Box<CateModel>),
    Constant(f64),
    Oracle,
}

impl FittedModel {
    /// τ̂ on `x`; the oracle echoes `truth`.
    pub fn predict(&self, x: &DMatrix<f64>, truth: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            FittedModel::Cate(m) => m.predict_cate(x),
            FittedModel::Constant(c) => Ok(vec![*c; x.nrows()]),
            FittedModel::Oracle => truth
                .map(<[f64]>::to_vec)
                .ok_or_else(|| HteError::Unsupported("the oracle needs the true effects".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub train_fraction: f64,
    pub propensity: PropensityOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            propensity: PropensityOptions::default(),
        }
    }
}

/// √PEHE of one model in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPehe {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: u64,
    pub seed_path: String,
    /// One entry per model, in model order; `Err` holds the failure message.
    pub outcomes: Vec<std::result::Result<SplitPehe, String>>,
}

pub fn run_replication(
    dgp: &PreparedDgp,
    models: &[ModelSpec],
    rep: u64,
    tree: &SeedTree,
    options: &BenchOptions,
) -> ReplicationResult {
    let rep_tree = tree.child("rep", rep);
    let outcomes = match replication_inputs(dgp, &rep_tree, options) {
        Ok(inputs) => models
            .iter()
            .enumerate()
            .map(|(m, spec)| score_model(spec, m as u64, &inputs, &rep_tree).map_err(|e| e.to_string()))
            .collect(),
        Err(e) => vec![Err(e.to_string()); models.len()],
    };
    ReplicationResult {
        rep,
        seed_path: rep_tree.describe(),
        outcomes,
    }
}

struct RepInputs {
    train: CausalDataset,
    x_test: DMatrix<f64>,
    tau_train: Vec<f64>,
    tau_test: Vec<f64>,
    propensity: std::result::Result<PropensityEstimate, String>,
}

fn replication_inputs(dgp: &PreparedDgp, rep_tree: &SeedTree, options: &BenchOptions) -> Result<RepInputs> {
    let truth = dgp.simulate(&mut rep_tree.derive_stream("simulate", 0))?;
    let data = dgp.dataset(&truth)?;
    let split = split_train_test(data.n(), options.train_fraction, &mut rep_tree.derive_stream("split", 0))?;
    let train = data.subset(&split.train)?;
    let propensity = estimate_propensity(&train, options.propensity, &mut rep_tree.derive_stream("propensity", 0))
        .map_err(|e| format!("propensity: {e}"));
    Ok(RepInputs {
        x_test: select_rows(data.covariates(), &split.test),
        tau_train: split.train.iter().map(|&i| truth.tau[i]).collect(),
        tau_test: split.test.iter().map(|&i| truth.tau[i]).collect(),
        train,
        propensity,
    })
}

fn score_model(spec: &ModelSpec, m: u64, inputs: &RepInputs, rep_tree: &SeedTree) -> Result<SplitPehe> {
    let ps = if spec.kind.needs_propensity() {
        Some(inputs.propensity.as_ref().map_err(|e| HteError::InvalidArgument(e.clone()))?)
    } else {
        None
    };
    let fitted = spec.fit(&inputs.train, ps, &mut rep_tree.derive_stream("model", m))?;
    let tr = fitted.predict(inputs.train.covariates(), Some(&inputs.tau_train))?;
    let te = fitted.predict(&inputs.x_test, Some(&inputs.tau_test))?;
    let out = SplitPehe {
        train: pehe(&tr, &inputs.tau_train)?.sqrt(),
        test: pehe(&te, &inputs.tau_test)?.sqrt(),
    };
    if !(out.train.is_finite() && out.test.is_finite()) {
        return Err(HteError::Divergence("√PEHE"));
    }
    Ok(out)
}

/// Mean, sd and 95% half-width over the successful replications of one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_half_width: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl SplitSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, sd) = mean_sd(values.iter().copied());
        Some(Self {
            mean,
            sd,
            ci_half_width: CI_Z * sd / (values.len() as f64).sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub train: Option<SplitSummary>,
    pub test: Option<SplitSummary>,
    pub failures: usize,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub dgp: String,
    pub b: usize,
    pub master_seed: u64,
    pub models: Vec<ModelSummary>,
    /// In replication order.
    pub replications: Vec<ReplicationResult>,
}

impl BenchmarkReport {
    pub fn total_failures(&self) -> usize {
        self.models.iter().map(|m| m.failures).sum()
    }

    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }

    /// `model,split,mean,ci_halfwidth,B,sd,min,max,n_ok,failures`, after `# `-prefixed header lines.
    pub fn write_summary_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        write_comments(&mut out, header)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "split", "mean", "ci_halfwidth", "B", "sd", "min", "max", "n_ok", "failures"])?;
        for m in &self.models {
            for (split, s) in [("train", &m.train), ("test", &m.test)] {
                let num = |f: fn(&SplitSummary) -> f64| s.as_ref().map_or("NA".to_string(), |s| f(s).to_string());
                w.write_record([
                    m.name.clone(),
                    split.to_string(),
                    num(|s| s.mean),
                    num(|s| s.ci_half_width),
                    self.b.to_string(),
                    num(|s| s.sd),
                    num(|s| s.min),
                    num(|s| s.max),
                    s.as_ref().map_or(0, |s| s.n).to_string(),
                    m.failures.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Long format `model,rep,split,sqrt_pehe`; failed fits have no rows.
    pub fn write_replications_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        write_comments(&mut out, header)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "rep", "split", "sqrt_pehe"])?;
        for (m, model) in self.models.iter().enumerate() {
            for r in &self.replications {
                if let Ok(p) = &r.outcomes[m] {
                    for (split, v) in [("train", p.train), ("test", p.test)] {
                        w.write_record([model.name.clone(), r.rep.to_string(), split.to_string(), v.to_string()])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Table with one row per model in configuration order: train and test
    /// √PEHE as `mean ± half-width`.
    pub fn write_markdown<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "<!-- {line} -->")?;
        }
        writeln!(out, "# √PEHE on {} (B = {})", self.dgp, self.b)?;
        writeln!(out)?;
        writeln!(out, "| Model | Train | Test | Failures |")?;
        writeln!(out, "|---|---|---|---|")?;
        let cell = |s: &Option<SplitSummary>| match s {
            Some(s) => format!("{:.3} ± {:.3}", s.mean, s.ci_half_width),
            None => "n/a".to_string(),
        };
        for m in &self.models {
            writeln!(out, "| {} | {} | {} | {} |", m.name, cell(&m.train), cell(&m.test), m.failures)?;
        }
        let failed: Vec<&ModelSummary> = self.models.iter().filter(|m| m.first_error.is_some()).collect();
        if !failed.is_empty() {
            writeln!(out)?;
            writeln!(out, "First failure per model:")?;
            writeln!(out)?;
            for m in failed {
                writeln!(out, "- {}: {}", m.name, m.first_error.as_deref().unwrap_or(""))?;
            }
        }
        Ok(())
    }
}

fn write_comments<W: Write>(out: &mut W, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// `b` replications on up to `jobs` threads. The report is identical for any `jobs`.
pub fn run_benchmark(
    dgp: &PreparedDgp,
    models: &[ModelSpec],
    b: usize,
    tree: &SeedTree,
    jobs: usize,
    options: &BenchOptions,
) -> Result<BenchmarkReport> {
    if b < 2 {
        return Err(HteError::invalid(format!("B = {b}, need at least 2 replications")));
    }
    if models.is_empty() {
        return Err(HteError::invalid("no models to benchmark"));
    }
    options.propensity.validate()?;
    let run = |r: usize| run_replication(dgp, models, r as u64, tree, options);
    let replications = map_replications(b, jobs, run)?;
    Ok(summarize(dgp.spec.name(), tree.master_seed(), models, replications))
}

pub fn summarize(dgp: &str, master_seed: u64, models: &[ModelSpec], replications: Vec<ReplicationResult>) -> BenchmarkReport {
    let models = models
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let ok: Vec<SplitPehe> = replications.iter().filter_map(|r| r.outcomes[m].clone().ok()).collect();
            let first_error = replications.iter().find_map(|r| r.outcomes[m].clone().err());
            ModelSummary {
                name: spec.name.clone(),
                train: SplitSummary::from_values(&ok.iter().map(|p| p.train).collect::<Vec<_>>()),
                test: SplitSummary::from_values(&ok.iter().map(|p| p.test).collect::<Vec<_>>()),
                failures: replications.len() - ok.len(),
                first_error,
            }
        })
        .collect();
    BenchmarkReport {
        dgp: dgp.to_string(),
        b: replications.len(),
        master_seed,
        models,
        replications,
    }
}

#[cfg(feature = "parallel")]
fn map_replications<F>(b: usize, jobs: usize, run: F) -> Result<Vec<ReplicationResult>>
where
    F: Fn(usize) -> ReplicationResult + Sync + Send,
{
    use rayon::prelude::*;
    if jobs <= 1 {
        return Ok((0..b).map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HteError::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..b).into_par_iter().map(run).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_replications<F>(b: usize, _jobs: usize, run: F) -> Result<Vec<ReplicationResult>>
where
    F: Fn(usize) -> ReplicationResult,
{
    Ok((0..b).map(run).collect())
}
