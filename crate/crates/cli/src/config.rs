//! TOML run configuration.
//!
//! ```toml
//! seed = 2024
//! b = 200
//! out = "results"
//!
//! [dgp]
//! kind = "actg_1"
//! covariates = "actg.csv"    # omit for synthetic covariates
//!
//! [[model]]
//! name = "S-OLS"
//! family = "s"
//! base = "ols"
//!
//! [[model]]
//! name = "T-knn"
//! family = "t"
//! base = { learner = "knn", k = 10 }
//! ```
//!
//! Unknown keys are errors. The SHA-256 of the file bytes identifies the run
//! in every output header.

use std::fmt;
use std::path::{Path, PathBuf};

use hte_core::bench::{BenchOptions, ModelKind, ModelSpec};
use hte_core::dgp::{CovariateSource, DgpKind, DgpSpec, NoiseRule, ObservationalRule, TreatmentSource};
use hte_core::learners::{
    AliasPolicy, BoostingParams, ForestParams, GpParams, LearnerSpec, Penalty, RbfKernel,
};
use hte_core::meta::{Coregionalization, MtGpParams, TauOptions, XWeight};
use hte_core::propensity::PropensityOptions;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_B: usize = 200;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub b: Option<usize>,
    pub jobs: Option<usize>,
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
    pub train_fraction: Option<f64>,
    pub dgp: Option<DgpConfig>,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub propensity: PropensityConfig,
    #[serde(rename = "model", default)]
    pub models: Vec<ModelConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    /// `ihdp_b`, `actg_1`, `actg_2` or `synthetic`.
    pub kind: String,
    /// Covariate CSV; synthetic covariates when absent.
    pub covariates: Option<PathBuf>,
    /// Treated units matching this rule are dropped, e.g. `"symptom == 0"`;
    /// `"none"` keeps everyone.
    pub selection: Option<String>,
    pub treatment_column: Option<String>,
    /// Rows of synthetic covariates.
    pub n: Option<usize>,
    pub bernoulli_p: Option<Vec<f64>>,
    /// `data`, `randomized` or `targeted`.
    pub treatment: Option<String>,
    pub p: Option<f64>,
    /// `[a, b]` of `logistic(a·standardized(μ) + b)`.
    pub targeted: Option<[f64; 2]>,
    /// Constant effect of the `synthetic` kind.
    pub effect: Option<f64>,
    /// Fixed shared noise sd instead of the kind's own rule.
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub treatment: String,
    pub outcome: String,
    /// All remaining columns when absent.
    pub covariates: Option<Vec<String>>,
    /// Unit identifier written to `cate_estimates.csv`; row numbers otherwise.
    pub id: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensityConfig {
    pub folds: Option<usize>,
    pub l2: Option<f64>,
    pub clip: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// `s`, `t`, `x`, `r`, `mt`, `tau`, `cf` or `dim`.
    pub family: String,
    #[serde(default, deserialize_with = "learner_field")]
    pub base: Option<LearnerConfig>,
    /// Outcome model of the R-learner; defaults to `base`.
    #[serde(default, deserialize_with = "learner_field")]
    pub m: Option<LearnerConfig>,
    /// τ surface of the τ-learner; defaults to a more regularised `base`.
    #[serde(default, deserialize_with = "learner_field")]
    pub tau: Option<LearnerConfig>,
    pub use_ps: Option<bool>,
    /// X-learner `g`: `"propensity"`, `"one"`, `"zero"` or a number in [0, 1].
    pub weight: Option<toml::Value>,
    pub folds: Option<usize>,
    pub sweeps: Option<usize>,
    pub tol: Option<f64>,
    /// Fixed 2×2 task covariance of the multitask GP; learned when absent.
    pub coregionalization: Option<[[f64; 2]; 2]>,
}

/// A base learner: `"ols"` or `{ learner = "ols", ... }`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// `ols`, `ridge`, `lasso`, `lasso_cv`, `knn`, `tree`, `forest`, `boosting` or `gp`.
    pub learner: String,
    pub lambda: Option<f64>,
    /// `drop` pins aliased OLS coefficients to zero; `error` (default) fails.
    pub aliased: Option<String>,
    pub k: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub trees: Option<usize>,
    pub mtry: Option<usize>,
    pub bootstrap: Option<bool>,
    pub rounds: Option<usize>,
    pub rate: Option<f64>,
    pub lengthscale: Option<f64>,
    pub variance: Option<f64>,
    pub noise: Option<f64>,
    pub optimize: Option<bool>,
    pub restarts: Option<usize>,
}

fn learner_field<'de, D: Deserializer<'de>>(d: D) -> Result<Option<LearnerConfig>, D::Error> {
    struct V;
    impl<'de> Visitor<'de> for V {
        type Value = LearnerConfig;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a learner name or a learner table")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<LearnerConfig, E> {
            Ok(LearnerConfig { learner: v.to_owned(), ..Default::default() })
        }

        fn visit_map<M: MapAccess<'de>>(self, map: M) -> Result<LearnerConfig, M::Error> {
            LearnerConfig::deserialize(de::value::MapAccessDeserializer::new(map))
        }
    }
    d.deserialize_any(V).map(Some)
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A parsed configuration with its digest and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub digest: String,
    pub dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| ConfigError(format!("{}: not UTF-8", path.display())))?;
        let mut loaded = Self::parse(text)?;
        loaded.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(loaded)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        Ok(Self {
            config,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
            dir: PathBuf::new(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.config.out.as_deref().unwrap_or(Path::new(".")))
    }

    pub fn propensity(&self) -> Result<PropensityOptions, ConfigError> {
        let p = &self.config.propensity;
        let d = PropensityOptions::default();
        let opts = PropensityOptions {
            folds: p.folds.unwrap_or(d.folds),
            l2: p.l2.unwrap_or(d.l2),
            clip: p.clip.map_or(d.clip, |[lo, hi]| (lo, hi)),
        };
        opts.validate().map_err(|e| ConfigError(format!("[propensity]: {e}")))?;
        if !(opts.l2 >= 0.0) {
            return bad("[propensity]: l2 must be >= 0");
        }
        Ok(opts)
    }

    pub fn bench_options(&self) -> Result<BenchOptions, ConfigError> {
        let train_fraction = self.config.train_fraction.unwrap_or(BenchOptions::default().train_fraction);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return bad(format!("train_fraction {train_fraction} not in (0, 1)"));
        }
        Ok(BenchOptions { train_fraction, propensity: self.propensity()? })
    }

    pub fn models(&self) -> Result<Vec<ModelSpec>, ConfigError> {
        if self.config.models.is_empty() {
            return bad("no [[model]] entries");
        }
        let mut seen = std::collections::HashSet::new();
        self.config
            .models
            .iter()
            .map(|m| {
                if !seen.insert(m.name.as_str()) {
                    return bad(format!("model name `{}` used twice", m.name));
                }
                m.to_spec().map_err(|e| ConfigError(format!("model `{}`: {e}", m.name)))
            })
            .collect()
    }

    pub fn dgp(&self) -> Result<DgpSpec, ConfigError> {
        let Some(d) = &self.config.dgp else {
            return bad("missing [dgp] section");
        };
        let kind = match d.kind.as_str() {
            "ihdp_b" => DgpKind::IhdpB,
            "actg_1" => DgpKind::Actg1,
            "actg_2" => DgpKind::Actg2,
            "synthetic" => DgpKind::Synthetic { effect: d.effect.unwrap_or(1.0) },
            other => return bad(format!("[dgp] kind `{other}`: expected ihdp_b, actg_1, actg_2 or synthetic")),
        };
        if d.effect.is_some() && !matches!(kind, DgpKind::Synthetic { .. }) {
            return bad("[dgp] effect only applies to kind = \"synthetic\"");
        }
        let mut spec = match &d.covariates {
            Some(path) => {
                if d.n.is_some() || d.bernoulli_p.is_some() {
                    return bad("[dgp] n and bernoulli_p only apply to synthetic covariates");
                }
                DgpSpec::from_csv(kind, self.resolve(path))
            }
            None => {
                let mut s = DgpSpec::synthetic(kind);
                if d.selection.is_some() {
                    return bad("[dgp] selection needs a covariate CSV");
                }
                let default_n = match s.covariates {
                    CovariateSource::Synthetic { n, .. } => n,
                    CovariateSource::Csv { .. } => unreachable!(),
                };
                s.covariates = CovariateSource::Synthetic { n: d.n.unwrap_or(default_n), bernoulli_p: d.bernoulli_p.clone() };
                s
            }
        };
        if let (Some(sel), CovariateSource::Csv { rule, .. }) = (&d.selection, &mut spec.covariates) {
            *rule = if sel.trim() == "none" {
                None
            } else {
                Some(sel.parse::<ObservationalRule>().map_err(|e| ConfigError(format!("[dgp] selection: {e}")))?)
            };
        }
        if let Some(col) = &d.treatment_column {
            spec.treatment_column = col.clone();
        }
        if let Some(t) = &d.treatment {
            spec.treatment = match t.as_str() {
                "data" => TreatmentSource::FromData,
                "randomized" => TreatmentSource::Randomized(d.p.unwrap_or(0.5)),
                "targeted" => {
                    let [a, b] = d.targeted.unwrap_or([1.0, 0.0]);
                    TreatmentSource::Targeted { a, b }
                }
                other => return bad(format!("[dgp] treatment `{other}`: expected data, randomized or targeted")),
            };
        } else if d.p.is_some() || d.targeted.is_some() {
            return bad("[dgp] p and targeted need treatment = \"randomized\" or \"targeted\"");
        }
        if let Some(sd) = d.noise_sd {
            if !(sd > 0.0) {
                return bad("[dgp] noise_sd must be > 0");
            }
            spec.noise = NoiseRule::Fixed(sd);
        }
        spec.validate().map_err(|e| ConfigError(format!("[dgp]: {e}")))?;
        Ok(spec)
    }
}

impl LearnerConfig {
    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let set = [
            ("lambda", self.lambda.is_some()),
            ("aliased", self.aliased.is_some()),
            ("k", self.k.is_some()),
            ("max_depth", self.max_depth.is_some()),
            ("min_leaf", self.min_leaf.is_some()),
            ("trees", self.trees.is_some()),
            ("mtry", self.mtry.is_some()),
            ("bootstrap", self.bootstrap.is_some()),
            ("rounds", self.rounds.is_some()),
            ("rate", self.rate.is_some()),
            ("lengthscale", self.lengthscale.is_some()),
            ("variance", self.variance.is_some()),
            ("noise", self.noise.is_some()),
            ("optimize", self.optimize.is_some()),
            ("restarts", self.restarts.is_some()),
        ];
        match set.iter().find(|(k, on)| *on && !allowed.contains(k)) {
            Some((k, _)) => bad(format!("`{k}` does not apply to learner `{}`", self.learner)),
            None => Ok(()),
        }
    }

    fn forest_params(&self) -> ForestParams {
        let d = ForestParams::default();
        ForestParams {
            trees: self.trees.unwrap_or(d.trees),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            min_leaf: self.min_leaf.unwrap_or(d.min_leaf),
            mtry: self.mtry.or(d.mtry),
            bootstrap: self.bootstrap.unwrap_or(d.bootstrap),
        }
    }

    fn gp_params(&self) -> GpParams {
        let d = GpParams::default();
        GpParams {
            kernel: RbfKernel {
                lengthscale: self.lengthscale.unwrap_or(d.kernel.lengthscale),
                variance: self.variance.unwrap_or(d.kernel.variance),
            },
            noise: self.noise.unwrap_or(d.noise),
            optimize: self.optimize.unwrap_or(d.optimize),
            restarts: self.restarts.unwrap_or(d.restarts),
        }
    }

    pub fn to_spec(&self) -> Result<LearnerSpec, ConfigError> {
        let lambda = || self.lambda.ok_or_else(|| ConfigError(format!("learner `{}` needs lambda", self.learner)));
        let spec = match self.learner.as_str() {
            "ols" => {
                self.check_keys(&["aliased"])?;
                let aliased = match self.aliased.as_deref() {
                    None | Some("error") => AliasPolicy::Error,
                    Some("drop") => AliasPolicy::Drop,
                    Some(other) => return bad(format!("aliased `{other}`: expected error or drop")),
                };
                LearnerSpec::Linear { penalty: Penalty::None, aliased }
            }
            "ridge" => {
                self.check_keys(&["lambda"])?;
                LearnerSpec::linear(Penalty::Ridge(lambda()?))
            }
            "lasso" => {
                self.check_keys(&["lambda"])?;
                LearnerSpec::linear(Penalty::Lasso(lambda()?))
            }
            "lasso_cv" => {
                self.check_keys(&[])?;
                LearnerSpec::linear(Penalty::LassoCv)
            }
            "knn" => {
                self.check_keys(&["k"])?;
                LearnerSpec::Knn { k: self.k }
            }
            "tree" => {
                self.check_keys(&["max_depth", "min_leaf"])?;
                LearnerSpec::tree(self.max_depth.unwrap_or(5), self.min_leaf.unwrap_or(5))
            }
            "forest" => {
                self.check_keys(&["trees", "max_depth", "min_leaf", "mtry", "bootstrap"])?;
                LearnerSpec::Forest(self.forest_params())
            }
            "boosting" => {
                self.check_keys(&["rounds", "rate", "max_depth", "min_leaf"])?;
                let d = BoostingParams::default();
                LearnerSpec::Boosting(BoostingParams {
                    rounds: self.rounds.unwrap_or(d.rounds),
                    rate: self.rate.unwrap_or(d.rate),
                    max_depth: self.max_depth.unwrap_or(d.max_depth),
                    min_leaf: self.min_leaf.unwrap_or(d.min_leaf),
                })
            }
            "gp" => {
                self.check_keys(&["lengthscale", "variance", "noise", "optimize", "restarts"])?;
                LearnerSpec::Gp(self.gp_params())
            }
            other => {
                return bad(format!(
                    "unknown learner `{other}`: expected ols, ridge, lasso, lasso_cv, knn, tree, forest, boosting or gp"
                ))
            }
        };
        spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(spec)
    }
}

impl ModelConfig {
    fn base(&self) -> Result<LearnerSpec, ConfigError> {
        match &self.base {
            Some(b) => b.to_spec(),
            None => bad(format!("family `{}` needs a base learner", self.family)),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let set = [
            ("base", self.base.is_some()),
            ("m", self.m.is_some()),
            ("tau", self.tau.is_some()),
            ("use_ps", self.use_ps.is_some()),
            ("weight", self.weight.is_some()),
            ("folds", self.folds.is_some()),
            ("sweeps", self.sweeps.is_some()),
            ("tol", self.tol.is_some()),
            ("coregionalization", self.coregionalization.is_some()),
        ];
        match set.iter().find(|(k, on)| *on && !allowed.contains(k)) {
            Some((k, _)) => bad(format!("`{k}` does not apply to family `{}`", self.family)),
            None => Ok(()),
        }
    }

    fn weight(&self) -> Result<XWeight, ConfigError> {
        Ok(match &self.weight {
            None => XWeight::Propensity,
            Some(toml::Value::String(s)) => match s.as_str() {
                "propensity" => XWeight::Propensity,
                "one" => XWeight::One,
                "zero" => XWeight::Zero,
                other => return bad(format!("weight `{other}`: expected propensity, one, zero or a number")),
            },
            Some(toml::Value::Float(g)) => XWeight::Constant(*g),
            Some(toml::Value::Integer(g)) => XWeight::Constant(*g as f64),
            Some(other) => return bad(format!("weight `{other}`: expected propensity, one, zero or a number")),
        })
    }

    pub fn to_spec(&self) -> Result<ModelSpec, ConfigError> {
        let use_ps = self.use_ps.unwrap_or(true);
        let kind = match self.family.as_str() {
            "s" => {
                self.check_keys(&["base", "use_ps"])?;
                ModelKind::S { base: self.base()?, use_ps }
            }
            "t" => {
                self.check_keys(&["base", "use_ps"])?;
                ModelKind::T { base: self.base()?, use_ps }
            }
            "x" => {
                self.check_keys(&["base", "weight"])?;
                let weight = self.weight()?;
                if let XWeight::Constant(g) = weight {
                    if !(0.0..=1.0).contains(&g) {
                        return bad(format!("weight {g} not in [0, 1]"));
                    }
                }
                ModelKind::X { base: self.base()?, weight }
            }
            "r" => {
                self.check_keys(&["base", "m", "folds"])?;
                let base_tau = self.base()?;
                let m = match &self.m {
                    Some(m) => m.to_spec()?,
                    None => base_tau,
                };
                let folds = self.folds.unwrap_or(5);
                if folds < 2 {
                    return bad("R-learner folds must be >= 2");
                }
                ModelKind::R { base_tau, m, folds }
            }
            "mt" => {
                self.check_keys(&["base", "coregionalization"])?;
                let gp = match &self.base {
                    None => GpParams::default(),
                    Some(b) if b.learner == "gp" => {
                        b.to_spec()?;
                        b.gp_params()
                    }
                    Some(b) => return bad(format!("family `mt` takes a gp base, not `{}`", b.learner)),
                };
                let d = MtGpParams::default();
                ModelKind::Mt(MtGpParams {
                    lengthscale: gp.kernel.lengthscale,
                    noise: gp.noise,
                    coregionalization: self.coregionalization.map_or(d.coregionalization, Coregionalization::Fixed),
                    optimize: b_or(self.base.as_ref().and_then(|b| b.optimize), d.optimize),
                    restarts: b_or(self.base.as_ref().and_then(|b| b.restarts), d.restarts),
                })
            }
            "tau" => {
                self.check_keys(&["base", "tau", "sweeps", "tol", "use_ps"])?;
                let d = TauOptions::default();
                let options = TauOptions { sweeps: self.sweeps.unwrap_or(d.sweeps), tol: self.tol.unwrap_or(d.tol) };
                if options.sweeps == 0 || !(options.tol >= 0.0) {
                    return bad("sweeps must be >= 1 and tol >= 0");
                }
                let tau = self.tau.as_ref().map(LearnerConfig::to_spec).transpose()?;
                ModelKind::Tau { mu: self.base()?, tau, options, use_ps }
            }
            "cf" => {
                self.check_keys(&["base"])?;
                let params = match &self.base {
                    None => ForestParams::default(),
                    Some(b) if b.learner == "forest" => {
                        b.to_spec()?;
                        b.forest_params()
                    }
                    Some(b) => return bad(format!("family `cf` takes a forest base, not `{}`", b.learner)),
                };
                ModelKind::Cf(params)
            }
            "dim" => {
                self.check_keys(&[])?;
                ModelKind::DifferenceInMeans
            }
            other => return bad(format!("unknown family `{other}`: expected s, t, x, r, mt, tau, cf or dim")),
        };
        Ok(ModelSpec::new(self.name.clone(), kind))
    }
}

fn b_or<T>(v: Option<T>, d: T) -> T {
    v.unwrap_or(d)
}
