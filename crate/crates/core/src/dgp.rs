//! Semi-synthetic data-generating processes: the IHDP response surface B,
//! the two ACTG-175 setups, treatment assignment and schema-matched
//! synthetic covariates.

use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{standardize_matrix, CausalDataset, ColumnKind, SimTruth, Table};
use crate::error::{check_len, HteError, Result};
use crate::seed::{SeedTree, Stream};

/// IHDP covariates: 6 continuous then 19 binary.
pub const IHDP_COLUMNS: [(&str, ColumnKind); 25] = {
    use ColumnKind::{Binary as B, Continuous as C};
    [
        ("bw", C),
        ("b_head", C),
        ("preterm", C),
        ("birth_o", C),
        ("nnhealth", C),
        ("momage", C),
        ("sex", B),
        ("twin", B),
        ("b_marr", B),
        ("mom_lths", B),
        ("mom_hs", B),
        ("mom_scoll", B),
        ("cig", B),
        ("first", B),
        ("booze", B),
        ("drugs", B),
        ("work_dur", B),
        ("prenatal", B),
        ("ark", B),
        ("ein", B),
        ("har", B),
        ("mia", B),
        ("pen", B),
        ("tex", B),
        ("was", B),
    ]
};

/// ACTG-175 covariates: `age`, `wtkg` and `preanti` are continuous.
pub const ACTG_COLUMNS: [(&str, ColumnKind); 12] = {
    use ColumnKind::{Binary as B, Continuous as C};
    [
        ("age", C),
        ("wtkg", C),
        ("hemo", B),
        ("homo", B),
        ("drugs", B),
        ("oprior", B),
        ("z30", B),
        ("preanti", C),
        ("race", B),
        ("gender", B),
        ("str2", B),
        ("karnof_hi", B),
    ]
};

/// Values β_B takes, and their probabilities.
pub const IHDP_BETA_VALUES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];
pub const IHDP_BETA_PROBS: [f64; 5] = [0.6, 0.1, 0.1, 0.1, 0.1];
/// Entry of the offset matrix `W`.
pub const IHDP_OFFSET: f64 = 0.5;
/// Treated-arm mean effect the IHDP surface is pinned to.
pub const IHDP_ATT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DgpKind {
    IhdpB,
    Actg1,
    Actg2,
    /// `μ(x) = 1 + 0.5·Σ x_j` and `τ ≡ effect`.
    Synthetic { effect: f64 },
}

impl DgpKind {
    pub fn name(&self) -> &'static str {
        match self {
            DgpKind::IhdpB => "ihdp_b",
            DgpKind::Actg1 => "actg_1",
            DgpKind::Actg2 => "actg_2",
            DgpKind::Synthetic { .. } => "synthetic",
        }
    }

    pub fn default_noise(&self) -> NoiseRule {
        match self {
            DgpKind::IhdpB => NoiseRule::IhdpUnit,
            DgpKind::Actg1 => NoiseRule::RangeFraction(2.0),
            DgpKind::Actg2 => NoiseRule::RangeFraction(10.0),
            DgpKind::Synthetic { .. } => NoiseRule::Fixed(1.0),
        }
    }

    pub fn default_schema(&self) -> Schema {
        match self {
            DgpKind::IhdpB => Schema::Ihdp,
            DgpKind::Actg1 | DgpKind::Actg2 | DgpKind::Synthetic { .. } => Schema::Actg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRule {
    /// `y0 ~ N(μ0, 1)` and `y1 ~ N(μ1, 1)` drawn independently.
    IhdpUnit,
    /// One `ε ~ N(0, σ²)` per unit shared by both arms, `σ = (max μ − min μ) / divisor`.
    RangeFraction(f64),
    /// Shared noise with a fixed `σ`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    Ihdp,
    Actg,
    Custom(Vec<(String, ColumnKind)>),
}

impl Schema {
    pub fn columns(&self) -> Vec<(String, ColumnKind)> {
        let named = |cols: &[(&str, ColumnKind)]| cols.iter().map(|(n, k)| (n.to_string(), *k)).collect();
        match self {
            Schema::Ihdp => named(&IHDP_COLUMNS),
            Schema::Actg => named(&ACTG_COLUMNS),
            Schema::Custom(cols) => cols.clone(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.columns().into_iter().map(|(n, _)| n).collect()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns().into_iter().map(|(_, k)| k).collect()
    }
}

/// `column == value` (or `!=`) applied to treated units only.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalRule {
    pub column: String,
    pub negate: bool,
    pub value: f64,
}

impl ObservationalRule {
    pub fn equals(column: &str, value: f64) -> Self {
        Self {
            column: column.to_owned(),
            negate: false,
            value,
        }
    }

    pub fn matches(&self, v: f64) -> bool {
        (v == self.value) != self.negate
    }
}

impl FromStr for ObservationalRule {
    type Err = HteError;

    /// Parses `"momwhite == 0"` or `"symptom != 1"`.
    fn from_str(s: &str) -> Result<Self> {
        let (op, negate) = if s.contains("==") {
            ("==", false)
        } else if s.contains("!=") {
            ("!=", true)
        } else {
            return Err(HteError::invalid(format!("rule `{s}` must look like `column == value`")));
        };
        let (col, val) = s.split_once(op).unwrap();
        let column = col.trim();
        if column.is_empty() {
            return Err(HteError::invalid(format!("rule `{s}` has no column")));
        }
        let value: f64 = val
            .trim()
            .parse()
            .map_err(|_| HteError::invalid(format!("rule `{s}`: `{}` is not a number", val.trim())))?;
        Ok(Self {
            column: column.to_owned(),
            negate,
            value,
        })
    }
}

impl std::fmt::Display for ObservationalRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = if self.negate { "!=" } else { "==" };
        write!(f, "{} {op} {}", self.column, self.value)
    }
}

/// Drops treated units whose `rule.column` matches; controls are kept.
pub fn make_observational(data: &CausalDataset, rule: &ObservationalRule) -> Result<CausalDataset> {
    let j = data.column_index(&rule.column).ok_or_else(|| HteError::Schema {
        missing: vec![rule.column.clone()],
        extra: Vec::new(),
    })?;
    let x = data.covariates();
    let z = data.treatment();
    let keep: Vec<usize> = (0..data.n())
        .filter(|&i| z[i] == 0 || !rule.matches(x[(i, j)]))
        .collect();
    if keep.iter().all(|&i| z[i] == 0) {
        return Err(HteError::EmptyTreatedArm);
    }
    data.subset(&keep)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateSource {
    /// Real covariates; `rule` removes part of the treated arm.
    Csv {
        path: PathBuf,
        rule: Option<ObservationalRule>,
    },
    /// `n` rows drawn with [`synth_covariates`]; `bernoulli_p` defaults to 0.5.
    Synthetic { n: usize, bernoulli_p: Option<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreatmentSource {
    FromData,
    Randomized(f64),
    /// `π = logistic(a·standardized(μ) + b)`.
    Targeted { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub schema: Schema,
    pub covariates: CovariateSource,
    pub treatment: TreatmentSource,
    /// Treatment column of a covariate CSV.
    pub treatment_column: String,
    pub noise: NoiseRule,
}

impl DgpSpec {
    /// Defaults for `kind`: its schema, its noise rule, and synthetic
    /// covariates of the real data's size.
    pub fn synthetic(kind: DgpKind) -> Self {
        let (n, treatment) = match kind {
            DgpKind::IhdpB => (747, TreatmentSource::Randomized(139.0 / 747.0)),
            _ => (813, TreatmentSource::Targeted { a: 1.0, b: 0.0 }),
        };
        Self {
            kind,
            schema: kind.default_schema(),
            covariates: CovariateSource::Synthetic { n, bernoulli_p: None },
            treatment,
            treatment_column: "treat".into(),
            noise: kind.default_noise(),
        }
    }

    /// Real covariates and treatment from a CSV with the usual selection rule:
    /// treated children of non-white mothers for IHDP, treated patients without
    /// symptomatic infection for ACTG.
    pub fn from_csv(kind: DgpKind, path: impl Into<PathBuf>) -> Self {
        let rule = match kind {
            DgpKind::IhdpB => Some(ObservationalRule::equals("momwhite", 0.0)),
            DgpKind::Actg1 | DgpKind::Actg2 => Some(ObservationalRule::equals("symptom", 0.0)),
            DgpKind::Synthetic { .. } => None,
        };
        Self {
            kind,
            schema: kind.default_schema(),
            covariates: CovariateSource::Csv {
                path: path.into(),
                rule,
            },
            treatment: TreatmentSource::FromData,
            treatment_column: "treat".into(),
            noise: kind.default_noise(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.schema.columns();
        match self.kind {
            DgpKind::IhdpB => {
                let continuous = cols.iter().filter(|c| c.1 == ColumnKind::Continuous).count();
                if cols.len() != 25 || continuous != 6 {
                    return Err(HteError::invalid(format!(
                        "ihdp_b needs 25 covariates (6 continuous), schema has {} ({continuous} continuous)",
                        cols.len()
                    )));
                }
            }
            DgpKind::Actg1 | DgpKind::Actg2 => {
                let missing: Vec<String> = ACTG_COLUMNS
                    .iter()
                    .filter(|(n, _)| !cols.iter().any(|c| c.0 == *n))
                    .map(|(n, _)| n.to_string())
                    .collect();
                if !missing.is_empty() {
                    return Err(HteError::Schema {
                        missing,
                        extra: Vec::new(),
                    });
                }
            }
            DgpKind::Synthetic { effect } => {
                if !effect.is_finite() {
                    return Err(HteError::invalid("synthetic effect must be finite"));
                }
            }
        }
        if cols.is_empty() {
            return Err(HteError::invalid("schema has no columns"));
        }
        match self.noise {
            NoiseRule::RangeFraction(d) if !(d > 0.0 && d.is_finite()) => {
                return Err(HteError::invalid(format!("noise divisor {d} must be > 0")))
            }
            NoiseRule::Fixed(s) if !(s >= 0.0 && s.is_finite()) => {
                return Err(HteError::invalid(format!("noise sd {s} must be >= 0")))
            }
            _ => {}
        }
        match self.treatment {
            TreatmentSource::Randomized(p) if !(p > 0.0 && p < 1.0) => {
                return Err(HteError::invalid(format!("treatment probability {p} not in (0, 1)")))
            }
            TreatmentSource::Targeted { a, b } if !(a.is_finite() && b.is_finite()) => {
                return Err(HteError::invalid("targeted selection needs finite a and b"))
            }
            TreatmentSource::Targeted { .. } if self.kind == DgpKind::IhdpB => {
                return Err(HteError::Unsupported(
                    "targeted selection needs a fixed prognostic score; ihdp_b redraws it".into(),
                ))
            }
            TreatmentSource::FromData if !matches!(self.covariates, CovariateSource::Csv { .. }) => {
                return Err(HteError::invalid("treatment from data needs a covariate CSV"))
            }
            _ => {}
        }
        if let CovariateSource::Synthetic { n, .. } = self.covariates {
            if n < 4 {
                return Err(HteError::invalid(format!("need at least 4 synthetic rows, got {n}")));
            }
        }
        Ok(())
    }

    /// Loads or draws the covariates and the treatment, which stay fixed
    /// across replications. Continuous columns are standardized.
    pub fn prepare(&self, tree: &SeedTree) -> Result<PreparedDgp> {
        self.validate()?;
        let names = self.schema.names();
        let kinds = self.schema.kinds();
        let (raw, from_data) = match &self.covariates {
            CovariateSource::Csv { path, rule } => {
                let table = Table::read(path)?;
                let (x, z) = load_covariates(&table, &names, &self.treatment_column, rule.as_ref())?;
                (x, Some(z))
            }
            CovariateSource::Synthetic { n, bernoulli_p } => {
                let p = bernoulli_p.clone().unwrap_or_default();
                let x = synth_covariates(&kinds, *n, &mut tree.derive_stream("covariates", 0), &p)?;
                (x, None)
            }
        };
        let (x, _) = standardize_matrix(&raw, &kinds, &names)?;
        let treatment = match self.treatment {
            TreatmentSource::FromData => from_data.expect("validated"),
            mode => {
                let mu = match self.kind {
                    DgpKind::IhdpB => vec![0.0; x.nrows()],
                    kind => surfaces(kind, &x, &names)?.0,
                };
                gen_treatment(&mu, mode, &mut tree.derive_stream("treatment", 0))?
            }
        };
        let treated = treatment.iter().filter(|&&z| z == 1).count();
        if treated == 0 || treated == treatment.len() {
            return Err(HteError::InvalidDataset("treatment assignment left an arm empty".into()));
        }
        Ok(PreparedDgp {
            spec: self.clone(),
            covariates: x,
            names,
            kinds,
            treatment,
        })
    }
}

fn load_covariates(
    table: &Table,
    names: &[String],
    treatment: &str,
    rule: Option<&ObservationalRule>,
) -> Result<(DMatrix<f64>, Vec<u8>)> {
    let mut wanted: Vec<String> = names.to_vec();
    let extra_rule_col = rule.filter(|r| !names.contains(&r.column)).map(|r| r.column.clone());
    wanted.extend(extra_rule_col.clone());
    wanted.push(treatment.to_owned());
    let missing: Vec<String> = wanted.iter().filter(|n| table.column(n).is_none()).cloned().collect();
    if !missing.is_empty() {
        return Err(HteError::Schema {
            missing,
            extra: Vec::new(),
        });
    }
    wanted.pop();
    let x = table.matrix(&wanted)?;
    let z = table.binary_column(treatment)?;
    let n = x.nrows();
    let kinds = vec![ColumnKind::Continuous; wanted.len()];
    let mut data = CausalDataset::new(x, z, vec![0.0; n], wanted, kinds)?;
    if let Some(rule) = rule {
        data = make_observational(&data, rule)?;
    }
    if let Some(col) = extra_rule_col {
        data = data.drop_columns(&[col.as_str()])?;
    }
    Ok((data.covariates().clone(), data.treatment().to_vec()))
}

/// Covariates and treatment fixed across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDgp {
    pub spec: DgpSpec,
    pub covariates: DMatrix<f64>,
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub treatment: Vec<u8>,
}

impl PreparedDgp {
    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn arm_size(&self, arm: u8) -> usize {
        self.treatment.iter().filter(|&&z| z == arm).count()
    }

    /// One fresh draw of the outcome surface (and β_B for IHDP).
    pub fn simulate(&self, rng: &mut Stream) -> Result<SimTruth> {
        let x = &self.covariates;
        match self.spec.kind {
            DgpKind::IhdpB => {
                let beta = draw_ihdp_beta(x.ncols(), rng);
                let (mu0, mu1) = ihdp_surfaces(x, &self.treatment, &beta)?;
                with_noise(mu0, mu1, self.spec.noise, rng)
            }
            kind => {
                let (mu, tau) = surfaces(kind, x, &self.names)?;
                let mu1 = mu.iter().zip(&tau).map(|(m, t)| m + t).collect();
                with_noise(mu, mu1, self.spec.noise, rng)
            }
        }
    }

    /// Dataset with the observed outcome of `truth`.
    pub fn dataset(&self, truth: &SimTruth) -> Result<CausalDataset> {
        CausalDataset::new(
            self.covariates.clone(),
            self.treatment.clone(),
            truth.observed(&self.treatment)?,
            self.names.clone(),
            self.kinds.clone(),
        )
    }
}

/// `(μ(x), τ(x))` of the ACTG setups and the synthetic surface.
pub fn surfaces(kind: DgpKind, x: &DMatrix<f64>, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(x.ncols(), names.len())?;
    let n = x.nrows();
    match kind {
        DgpKind::IhdpB => Err(HteError::invalid("ihdp_b surfaces depend on the β_B draw")),
        DgpKind::Synthetic { effect } => {
            let mu = (0..n).map(|i| 1.0 + 0.5 * x.row(i).sum()).collect();
            Ok((mu, vec![effect; n]))
        }
        DgpKind::Actg1 | DgpKind::Actg2 => {
            let col = |name: &str| names.iter().position(|n| n == name);
            let missing: Vec<String> = ACTG_COLUMNS
                .iter()
                .filter(|(c, _)| col(c).is_none())
                .map(|(c, _)| c.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(HteError::Schema {
                    missing,
                    extra: Vec::new(),
                });
            }
            let get = |i: usize, name: &str| x[(i, col(name).unwrap())];
            let mut mu = Vec::with_capacity(n);
            let mut tau = Vec::with_capacity(n);
            for i in 0..n {
                let age = get(i, "age");
                let wtkg = get(i, "wtkg");
                let hemo = get(i, "hemo");
                let gender = get(i, "gender");
                let karnof = get(i, "karnof_hi");
                let z30 = get(i, "z30");
                let race = get(i, "race");
                if kind == DgpKind::Actg1 {
                    mu.push(
                        8.0 - 0.07 * hemo - 0.002 * (wtkg - 1.0).abs() + 0.06 * gender - 0.1 / (age + 2.0)
                            + 0.007 * karnof
                            - 0.1 * z30
                            - 0.05 * race,
                    );
                    tau.push(0.1 + 0.1 * age * (karnof + 2.0));
                } else {
                    mu.push(6.0 + 0.3 * wtkg * wtkg - age.sin() * (gender + 1.0) + 0.6 * hemo * race - 0.2 * z30);
                    tau.push(1.0 + 1.5 * wtkg.sin() * (karnof + 1.0) + 0.4 * age * age);
                }
            }
            if mu.iter().chain(&tau).any(|v| !v.is_finite()) {
                return Err(HteError::Divergence("ACTG outcome surface"));
            }
            Ok((mu, tau))
        }
    }
}

fn with_noise(mu0: Vec<f64>, mu1: Vec<f64>, rule: NoiseRule, rng: &mut Stream) -> Result<SimTruth> {
    let n = mu0.len();
    let (y0, y1) = match rule {
        NoiseRule::IhdpUnit => {
            let mut y0 = Vec::with_capacity(n);
            let mut y1 = Vec::with_capacity(n);
            for i in 0..n {
                y0.push(mu0[i] + rng.sample::<f64, _>(StandardNormal));
                y1.push(mu1[i] + rng.sample::<f64, _>(StandardNormal));
            }
            (y0, y1)
        }
        NoiseRule::RangeFraction(_) | NoiseRule::Fixed(_) => {
            let sigma = noise_sd(&mu0, rule);
            let eps: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            (
                mu0.iter().zip(&eps).map(|(m, e)| m + e).collect(),
                mu1.iter().zip(&eps).map(|(m, e)| m + e).collect(),
            )
        }
    };
    SimTruth::new(mu0, mu1, y0, y1)
}

/// Noise sd of a shared-noise rule for prognostic score `mu`; 1 for `IhdpUnit`.
pub fn noise_sd(mu: &[f64], rule: NoiseRule) -> f64 {
    match rule {
        NoiseRule::IhdpUnit => 1.0,
        NoiseRule::Fixed(s) => s,
        NoiseRule::RangeFraction(d) => {
            let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
            (max - min) / d
        }
    }
}

/// Setup 1 on a standardized ACTG matrix, σ = range(μ)/2, shared noise.
pub fn gen_actg_setup1(x: &DMatrix<f64>, names: &[String], rng: &mut Stream) -> Result<SimTruth> {
    gen_actg(DgpKind::Actg1, x, names, rng)
}

/// Setup 2 on a standardized ACTG matrix, σ = range(μ)/10, shared noise.
pub fn gen_actg_setup2(x: &DMatrix<f64>, names: &[String], rng: &mut Stream) -> Result<SimTruth> {
    gen_actg(DgpKind::Actg2, x, names, rng)
}

fn gen_actg(kind: DgpKind, x: &DMatrix<f64>, names: &[String], rng: &mut Stream) -> Result<SimTruth> {
    let (mu, tau) = surfaces(kind, x, names)?;
    let mu1 = mu.iter().zip(&tau).map(|(m, t)| m + t).collect();
    with_noise(mu, mu1, kind.default_noise(), rng)
}

/// One uniform per coefficient, mapped onto [`IHDP_BETA_VALUES`].
pub fn draw_ihdp_beta(d: usize, rng: &mut Stream) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, p) in IHDP_BETA_VALUES.iter().zip(IHDP_BETA_PROBS) {
                acc += p;
                if u < acc {
                    return *v;
                }
            }
            IHDP_BETA_VALUES[4]
        })
        .collect()
}

/// `(μ0, μ1)` of response surface B for a given β_B.
pub fn ihdp_surfaces(x: &DMatrix<f64>, z: &[u8], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(x.ncols(), beta.len())?;
    check_len(x.nrows(), z.len())?;
    let n = x.nrows();
    let lin: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta).map(|(v, b)| v * b).sum())
        .collect();
    let mu0: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(beta).map(|(v, b)| (v + IHDP_OFFSET) * b).sum::<f64>().exp())
        .collect();
    let treated: Vec<usize> = (0..n).filter(|&i| z[i] == 1).collect();
    if treated.is_empty() {
        return Err(HteError::EmptyTreatedArm);
    }
    let omega = treated.iter().map(|&i| lin[i] - mu0[i]).sum::<f64>() / treated.len() as f64 - IHDP_ATT;
    let mu1: Vec<f64> = lin.iter().map(|l| l - omega).collect();
    if mu0.iter().chain(&mu1).any(|v| !v.is_finite()) {
        return Err(HteError::Divergence("IHDP response surface"));
    }
    Ok((mu0, mu1))
}

/// Response surface B with a β_B already drawn; unit-variance noise per arm.
pub fn ihdp_surface_b_with_beta(x: &DMatrix<f64>, z: &[u8], beta: &[f64], rng: &mut Stream) -> Result<SimTruth> {
    let (mu0, mu1) = ihdp_surfaces(x, z, beta)?;
    with_noise(mu0, mu1, NoiseRule::IhdpUnit, rng)
}

/// Response surface B on a standardized 25-column IHDP matrix. Draws β_B
/// first, then `(e0, e1)` unit by unit.
pub fn gen_ihdp_surface_b(x: &DMatrix<f64>, z: &[u8], rng: &mut Stream) -> Result<SimTruth> {
    if x.ncols() != IHDP_COLUMNS.len() {
        return Err(HteError::DimensionMismatch {
            expected: IHDP_COLUMNS.len(),
            got: x.ncols(),
        });
    }
    let beta = draw_ihdp_beta(x.ncols(), rng);
    ihdp_surface_b_with_beta(x, z, &beta, rng)
}

/// Per-unit treatment probabilities of `mode` given prognostic score `mu`.
pub fn treatment_probabilities(mu: &[f64], mode: TreatmentSource) -> Result<Vec<f64>> {
    match mode {
        TreatmentSource::Randomized(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(HteError::invalid(format!("treatment probability {p} not in (0, 1)")));
            }
            Ok(vec![p; mu.len()])
        }
        TreatmentSource::Targeted { a, b } => {
            let (mean, sd) = crate::data::mean_sd(mu.iter().copied());
            Ok(mu
                .iter()
                .map(|m| {
                    let s = if sd > 0.0 { (m - mean) / sd } else { 0.0 };
                    1.0 / (1.0 + (-(a * s + b)).exp())
                })
                .collect())
        }
        TreatmentSource::FromData => Err(HteError::invalid("treatment from data is not generated")),
    }
}

pub fn gen_treatment(mu: &[f64], mode: TreatmentSource, rng: &mut Stream) -> Result<Vec<u8>> {
    let pi = treatment_probabilities(mu, mode)?;
    Ok(pi.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect())
}

/// Continuous columns ~ N(0, 1); binary column `k` ~ Bernoulli(`bernoulli_p[k]`),
/// 0.5 when `bernoulli_p` is empty. Filled row by row.
pub fn synth_covariates(
    kinds: &[ColumnKind],
    n: usize,
    rng: &mut Stream,
    bernoulli_p: &[f64],
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(HteError::invalid("n must be >= 1"));
    }
    let n_binary = kinds.iter().filter(|k| **k == ColumnKind::Binary).count();
    if !bernoulli_p.is_empty() {
        check_len(n_binary, bernoulli_p.len())?;
        if bernoulli_p.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(HteError::invalid("Bernoulli probabilities must lie in [0, 1]"));
        }
    }
    let mut x = DMatrix::zeros(n, kinds.len());
    for i in 0..n {
        let mut b = 0;
        for (j, kind) in kinds.iter().enumerate() {
            x[(i, j)] = match kind {
                ColumnKind::Continuous => rng.sample(StandardNormal),
                ColumnKind::Binary => {
                    let p = bernoulli_p.get(b).copied().unwrap_or(0.5);
                    b += 1;
                    f64::from(u8::from(rng.random::<f64>() < p))
                }
            };
        }
    }
    Ok(x)
}
