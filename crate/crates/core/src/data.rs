//! Causal datasets, simulated ground truth, covariate scaling and CSV ingestion.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{check_len, HteError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Binary,
}

impl ColumnKind {
    /// `Binary` when every value is 0 or 1.
    pub fn infer(values: impl IntoIterator<Item = f64>) -> ColumnKind {
        if values.into_iter().all(|v| v == 0.0 || v == 1.0) {
            ColumnKind::Binary
        } else {
            ColumnKind::Continuous
        }
    }
}

/// Covariates `X` (N×d), binary treatment `Z` and observed outcome `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    covariates: DMatrix<f64>,
    treatment: Vec<u8>,
    outcome: Vec<f64>,
    column_kinds: Vec<ColumnKind>,
    column_names: Vec<String>,
}

impl CausalDataset {
    pub fn new(
        covariates: DMatrix<f64>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let ds = Self {
            covariates,
            treatment,
            outcome,
            column_kinds,
            column_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset tagging every column from its values.
    pub fn with_inferred_kinds(
        covariates: DMatrix<f64>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let kinds = infer_kinds(&covariates);
        Self::new(covariates, treatment, outcome, column_names, kinds)
    }

    /// Builds a dataset with generated names `x0, x1, ...`.
    pub fn from_parts(covariates: DMatrix<f64>, treatment: Vec<u8>, outcome: Vec<f64>) -> Result<Self> {
        let names = (0..covariates.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_inferred_kinds(covariates, treatment, outcome, names)
    }

    fn validate(&self) -> Result<()> {
        let n = self.covariates.nrows();
        let d = self.covariates.ncols();
        check_len(n, self.treatment.len())?;
        check_len(n, self.outcome.len())?;
        check_len(d, self.column_names.len())?;
        check_len(d, self.column_kinds.len())?;
        if self.treatment.iter().any(|&z| z > 1) {
            return Err(HteError::InvalidDataset("treatment must be 0 or 1".into()));
        }
        let treated = self.treatment.iter().filter(|&&z| z == 1).count();
        if treated == 0 || treated == n {
            return Err(HteError::InvalidDataset(
                "need at least one treated and one control unit".into(),
            ));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(HteError::InvalidDataset("non-finite covariate value".into()));
        }
        if self.outcome.iter().any(|v| !v.is_finite()) {
            return Err(HteError::InvalidDataset("non-finite outcome value".into()));
        }
        for (j, kind) in self.column_kinds.iter().enumerate() {
            if *kind == ColumnKind::Binary
                && self.covariates.column(j).iter().any(|&v| v != 0.0 && v != 1.0)
            {
                return Err(HteError::InvalidDataset(format!(
                    "binary column `{}` has values outside {{0, 1}}",
                    self.column_names[j]
                )));
            }
        }
        let mut names: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(HteError::NameCollision(w[0].to_owned()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn d(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&z| z as f64).collect()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i] == arm).collect()
    }

    pub fn arm_size(&self, arm: u8) -> usize {
        self.treatment.iter().filter(|&&z| z == arm).count()
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            select_rows(&self.covariates, rows),
            rows.iter().map(|&i| self.treatment[i]).collect(),
            rows.iter().map(|&i| self.outcome[i]).collect(),
            self.column_names.clone(),
            self.column_kinds.clone(),
        )
    }

    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        Self::new(
            self.covariates.clone(),
            self.treatment.clone(),
            outcome,
            self.column_names.clone(),
            self.column_kinds.clone(),
        )
    }

    pub fn append_column(&self, name: &str, kind: ColumnKind, values: &[f64]) -> Result<Self> {
        check_len(self.n(), values.len())?;
        if self.column_index(name).is_some() {
            return Err(HteError::NameCollision(name.to_owned()));
        }
        let d = self.d();
        let mut cov = self.covariates.clone().insert_column(d, 0.0);
        cov.column_mut(d).copy_from_slice(values);
        let mut names = self.column_names.clone();
        names.push(name.to_owned());
        let mut kinds = self.column_kinds.clone();
        kinds.push(kind);
        Self::new(cov, self.treatment.clone(), self.outcome.clone(), names, kinds)
    }

    pub fn drop_columns(&self, names: &[&str]) -> Result<Self> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.column_index(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(HteError::Schema {
                missing,
                extra: Vec::new(),
            });
        }
        let keep: Vec<usize> = (0..self.d())
            .filter(|&j| !names.contains(&self.column_names[j].as_str()))
            .collect();
        Self::new(
            select_columns(&self.covariates, &keep),
            self.treatment.clone(),
            self.outcome.clone(),
            keep.iter().map(|&j| self.column_names[j].clone()).collect(),
            keep.iter().map(|&j| self.column_kinds[j]).collect(),
        )
    }
}

pub fn infer_kinds(x: &DMatrix<f64>) -> Vec<ColumnKind> {
    (0..x.ncols())
        .map(|j| ColumnKind::infer(x.column(j).iter().copied()))
        .collect()
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

/// `[x | column]`.
pub fn hstack_column(x: &DMatrix<f64>, column: &[f64]) -> DMatrix<f64> {
    let d = x.ncols();
    let mut out = x.clone().insert_column(d, 0.0);
    out.column_mut(d).copy_from_slice(column);
    out
}

/// Ground truth of a simulated outcome surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub tau: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl SimTruth {
    pub fn new(mu0: Vec<f64>, mu1: Vec<f64>, y0: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        check_len(mu0.len(), mu1.len())?;
        check_len(mu0.len(), y0.len())?;
        check_len(mu0.len(), y1.len())?;
        let tau = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
        Ok(Self {
            mu0,
            mu1,
            tau,
            y0,
            y1,
        })
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    /// `Y_i = Z_i·y1_i + (1 − Z_i)·y0_i`.
    pub fn observed(&self, treatment: &[u8]) -> Result<Vec<f64>> {
        check_len(self.n(), treatment.len())?;
        Ok(treatment
            .iter()
            .enumerate()
            .map(|(i, &z)| if z == 1 { self.y1[i] } else { self.y0[i] })
            .collect())
    }

    pub fn subset(&self, rows: &[usize]) -> SimTruth {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        SimTruth {
            mu0: pick(&self.mu0),
            mu1: pick(&self.mu1),
            tau: pick(&self.tau),
            y0: pick(&self.y0),
            y1: pick(&self.y1),
        }
    }
}

/// Per-column `(mean, sd)` for continuous columns; `None` for binary ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub columns: Vec<Option<(f64, f64)>>,
}

impl Standardization {
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.columns.len(), x.ncols())?;
        let mut out = x.clone();
        for (j, t) in self.columns.iter().enumerate() {
            if let Some((mean, sd)) = t {
                out.column_mut(j).iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
        }
        Ok(out)
    }

    pub fn invert(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len(self.columns.len(), x.ncols())?;
        let mut out = x.clone();
        for (j, t) in self.columns.iter().enumerate() {
            if let Some((mean, sd)) = t {
                out.column_mut(j).iter_mut().for_each(|v| *v = *v * sd + mean);
            }
        }
        Ok(out)
    }
}

/// Sample mean and `n − 1` standard deviation.
pub fn mean_sd(values: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss = values.map(|v| (v - mean).powi(2)).sum::<f64>();
    let sd = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Centers and scales continuous columns to mean 0, sd 1; binary columns pass through.
pub fn standardize_matrix(
    x: &DMatrix<f64>,
    kinds: &[ColumnKind],
    names: &[String],
) -> Result<(DMatrix<f64>, Standardization)> {
    check_len(x.ncols(), kinds.len())?;
    let mut columns = Vec::with_capacity(kinds.len());
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            ColumnKind::Binary => columns.push(None),
            ColumnKind::Continuous => {
                let (mean, sd) = mean_sd(x.column(j).iter().copied());
                if !(sd > 0.0) || !sd.is_finite() {
                    return Err(HteError::DegenerateColumn {
                        column: names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                    });
                }
                columns.push(Some((mean, sd)));
            }
        }
    }
    let t = Standardization { columns };
    Ok((t.apply(x)?, t))
}

pub fn standardize_covariates(data: &CausalDataset) -> Result<(CausalDataset, Standardization)> {
    let (x, t) = standardize_matrix(&data.covariates, &data.column_kinds, &data.column_names)?;
    let ds = CausalDataset::new(
        x,
        data.treatment.clone(),
        data.outcome.clone(),
        data.column_names.clone(),
        data.column_kinds.clone(),
    )?;
    Ok((ds, t))
}

/// A numeric CSV table: header row, one `f64` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> Result<Table> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    HteError::InvalidDataset(format!(
                        "row {}, column `{}`: `{field}` is not a number",
                        row + 1,
                        names[j]
                    ))
                })?;
                columns[j].push(v);
            }
        }
        Ok(Table { names, columns })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Matrix made of `names` in the given order.
    pub fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.column(n).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(HteError::Schema {
                missing,
                extra: Vec::new(),
            });
        }
        let cols: Vec<&[f64]> = names.iter().map(|n| self.column(n).unwrap()).collect();
        Ok(DMatrix::from_fn(self.nrows(), names.len(), |i, j| cols[j][i]))
    }

    pub fn binary_column(&self, name: &str) -> Result<Vec<u8>> {
        let col = self.column(name).ok_or_else(|| HteError::Schema {
            missing: vec![name.to_owned()],
            extra: Vec::new(),
        })?;
        col.iter()
            .map(|&v| match v {
                0.0 => Ok(0),
                1.0 => Ok(1),
                other => Err(HteError::InvalidDataset(format!(
                    "column `{name}` must be 0/1, found {other}"
                ))),
            })
            .collect()
    }

    /// Splits the table into a dataset: `treatment` and `outcome` columns are
    /// pulled out, every other column becomes a covariate (auto-tagged).
    pub fn into_dataset(&self, treatment: &str, outcome: &str) -> Result<CausalDataset> {
        let missing: Vec<String> = [treatment, outcome]
            .iter()
            .filter(|c| self.column(c).is_none())
            .map(|c| c.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(HteError::Schema {
                missing,
                extra: Vec::new(),
            });
        }
        let covariate_names: Vec<String> = self
            .names
            .iter()
            .filter(|n| n.as_str() != treatment && n.as_str() != outcome)
            .cloned()
            .collect();
        let x = self.matrix(&covariate_names)?;
        let z = self.binary_column(treatment)?;
        let y = self.column(outcome).unwrap().to_vec();
        CausalDataset::with_inferred_kinds(x, z, y, covariate_names)
    }
}
