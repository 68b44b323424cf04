//! The three subcommands. Each returns the process exit code: 0 on success,
//! 1 for configuration, schema or I/O errors, 2 when a model fit failed
//! (whatever could be computed is still written).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hte_core::bench::{run_benchmark, ModelSpec};
use hte_core::data::{mean_sd, Table};
use hte_core::metrics::compare_cate_estimates;
use hte_core::propensity::{
    estimate_propensity, estimate_propensity_xz, overlap_diagnostics, PropensityOptions, OVERLAP_HIGH, OVERLAP_LOW,
};
use hte_core::{CausalDataset, HteError, SeedTree};
use sha2::{Digest, Sha256};

use crate::config::{LoadedConfig, DEFAULT_B};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FIT: i32 = 2;

/// Command failures that stop before any fitting.
#[derive(Debug)]
pub struct Fatal(pub String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type Outcome = Result<i32, Fatal>;

/// Turns an [`Outcome`] into an exit code, reporting fatal errors on stderr.
pub fn finish(outcome: Outcome) -> i32 {
    match outcome {
        Ok(code) => code,
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchArgs {
    pub config: PathBuf,
    pub b: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct FitArgs {
    pub config: PathBuf,
    pub data: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct DiagnoseArgs {
    pub data: PathBuf,
    pub treatment: String,
    pub outcome: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Flag, then config, then `HTE_LAB_JOBS`, then the machine's core count.
pub fn resolve_jobs(flag: Option<usize>, config: Option<usize>) -> Result<usize, Fatal> {
    let env = || match std::env::var("HTE_LAB_JOBS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse::<usize>().map(Some).map_err(|_| Fatal(format!("HTE_LAB_JOBS=`{v}` is not a count")))
        }
        _ => Ok(None),
    };
    let jobs = match flag.or(config) {
        Some(j) => j,
        None => env()?.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    if jobs == 0 {
        return Err(Fatal("jobs must be >= 1".into()));
    }
    Ok(jobs)
}

fn header(digest: &str, seed: u64) -> Vec<String> {
    vec![
        format!("hte-lab {}", env!("CARGO_PKG_VERSION")),
        format!("config_sha256 {digest}"),
        format!("master_seed {seed}"),
    ]
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Fatal> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn comments(out: &mut impl Write, header: &[String]) -> std::io::Result<()> {
    header.iter().try_for_each(|line| writeln!(out, "# {line}"))
}

fn load(path: &Path) -> Result<LoadedConfig, Fatal> {
    LoadedConfig::read(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn out_dir(flag: &Option<PathBuf>, config: &LoadedConfig) -> Result<PathBuf, Fatal> {
    let dir = flag.clone().unwrap_or_else(|| config.out_dir());
    std::fs::create_dir_all(&dir).map_err(|e| Fatal(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn cmd_bench(args: &BenchArgs) -> i32 {
    finish(bench(args))
}

fn bench(args: &BenchArgs) -> Outcome {
    let config = load(&args.config)?;
    let dgp = config.dgp()?;
    let models = config.models()?;
    let options = config.bench_options()?;
    let b = args.b.or(config.config.b).unwrap_or(DEFAULT_B);
    let seed = args.seed.unwrap_or(config.seed());
    let jobs = resolve_jobs(args.jobs, config.config.jobs)?;
    let dir = out_dir(&args.out, &config)?;

    let tree = SeedTree::new(seed);
    let prepared = dgp.prepare(&tree)?;
    let report = run_benchmark(&prepared, &models, b, &tree, jobs, &options)?;

    let mut head = header(&config.digest, seed);
    head.push(format!("dgp {}", report.dgp));
    head.push(format!("B {b}"));
    let mut w = create(&dir, "summary.csv")?;
    report.write_summary_csv(&mut w, &head)?;
    w.flush()?;
    let mut w = create(&dir, "replications.csv")?;
    report.write_replications_csv(&mut w, &head)?;
    w.flush()?;
    let mut w = create(&dir, "report.md")?;
    report.write_markdown(&mut w, &head)?;
    w.flush()?;

    let failures = report.total_failures();
    if failures > 0 {
        for m in report.models.iter().filter(|m| m.failures > 0) {
            eprintln!(
                "model `{}` failed in {}/{} replications: {}",
                m.name,
                m.failures,
                report.b,
                m.first_error.as_deref().unwrap_or("")
            );
        }
        return Ok(EXIT_FIT);
    }
    Ok(EXIT_OK)
}

/// The configured columns of `table` as a dataset, plus unit ids.
fn dataset(config: &LoadedConfig, table: &Table) -> Result<(CausalDataset, Vec<String>), Fatal> {
    let Some(data) = &config.config.data else {
        return Err(Fatal("missing [data] section".into()));
    };
    let mut reserved = vec![data.treatment.clone(), data.outcome.clone()];
    reserved.extend(data.id.clone());
    let covariates: Vec<String> = match &data.covariates {
        Some(c) => c.clone(),
        None => table.names.iter().filter(|n| !reserved.contains(n)).cloned().collect(),
    };
    let expected: Vec<&String> = reserved.iter().chain(&covariates).collect();
    let missing: Vec<String> = expected.iter().filter(|n| table.column(n).is_none()).map(|n| n.to_string()).collect();
    let extra: Vec<String> = table.names.iter().filter(|n| !expected.contains(n)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Fatal(HteError::Schema { missing, extra }.to_string()));
    }
    let x = table.matrix(&covariates)?;
    let z = table.binary_column(&data.treatment)?;
    let y = table.column(&data.outcome).unwrap_or_default().to_vec();
    let ids = match &data.id {
        Some(id) => table.column(id).unwrap_or_default().iter().map(f64::to_string).collect(),
        None => (0..table.nrows()).map(|i| i.to_string()).collect(),
    };
    Ok((CausalDataset::with_inferred_kinds(x, z, y, covariates)?, ids))
}

/// τ̂ of every model on `data`, fitted on `data`; `Err` for failed fits.
pub fn fit_models(
    data: &CausalDataset,
    models: &[ModelSpec],
    options: PropensityOptions,
    tree: &SeedTree,
) -> Vec<Result<Vec<f64>, String>> {
    let propensity = if models.iter().any(|m| m.kind.needs_propensity()) {
        Some(estimate_propensity(data, options, &mut tree.derive_stream("propensity", 0)).map_err(|e| format!("propensity: {e}")))
    } else {
        None
    };
    models
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let ps = match (&propensity, spec.kind.needs_propensity()) {
                (Some(p), true) => Some(p.as_ref().map_err(Clone::clone)?),
                _ => None,
            };
            let fitted = spec.fit(data, ps, &mut tree.derive_stream("model", m as u64)).map_err(|e| e.to_string())?;
            fitted.predict(data.covariates(), None).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn cmd_fit(args: &FitArgs) -> i32 {
    finish(fit(args))
}

fn fit(args: &FitArgs) -> Outcome {
    let config = load(&args.config)?;
    let models = config.models()?;
    let options = config.propensity()?;
    let table = Table::read(&args.data).map_err(|e| Fatal(format!("{}: {e}", args.data.display())))?;
    let (data, ids) = dataset(&config, &table)?;
    let seed = args.seed.unwrap_or(config.seed());
    let dir = out_dir(&args.out, &config)?;

    let estimates = fit_models(&data, &models, options, &SeedTree::new(seed));
    let head = header(&config.digest, seed);

    let mut w = create(&dir, "cate_estimates.csv")?;
    comments(&mut w, &head)?;
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(std::iter::once("unit").chain(models.iter().map(|m| m.name.as_str())))?;
    for (i, id) in ids.iter().enumerate() {
        let row = estimates.iter().map(|e| e.as_ref().map_or("NA".to_string(), |t| t[i].to_string()));
        csv.write_record(std::iter::once(id.clone()).chain(row))?;
    }
    csv.flush()?;
    drop(csv);
    w.flush()?;

    let mut w = create(&dir, "comparison.csv")?;
    comments(&mut w, &head)?;
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(["model_a", "model_b", "pearson", "spearman", "mean_a", "mean_b", "sd_a", "sd_b"])?;
    for a in 0..models.len() {
        for b in a + 1..models.len() {
            let (Ok(ta), Ok(tb)) = (&estimates[a], &estimates[b]) else { continue };
            let stats = match compare_cate_estimates(ta, tb) {
                Ok(c) => [c.pearson, c.spearman, c.mean_a, c.mean_b, c.sd_a, c.sd_b].map(|v| v.to_string()),
                Err(_) => {
                    let (ma, sa) = mean_sd(ta.iter().copied());
                    let (mb, sb) = mean_sd(tb.iter().copied());
                    ["NA".to_string(), "NA".to_string(), ma.to_string(), mb.to_string(), sa.to_string(), sb.to_string()]
                }
            };
            csv.write_record([models[a].name.clone(), models[b].name.clone()].into_iter().chain(stats))?;
        }
    }
    csv.flush()?;
    drop(csv);
    w.flush()?;

    let mut code = EXIT_OK;
    for (spec, e) in models.iter().zip(&estimates) {
        if let Err(msg) = e {
            eprintln!("model `{}` failed: {msg}", spec.name);
            code = EXIT_FIT;
        }
    }
    Ok(code)
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> i32 {
    finish(diagnose(args))
}

fn diagnose(args: &DiagnoseArgs) -> Outcome {
    let bytes = std::fs::read(&args.data).map_err(|e| Fatal(format!("{}: {e}", args.data.display())))?;
    let table = Table::from_reader(bytes.as_slice()).map_err(|e| Fatal(format!("{}: {e}", args.data.display())))?;
    let mut missing = vec![args.treatment.clone()];
    missing.extend(args.outcome.clone());
    missing.retain(|c| table.column(c).is_none());
    if !missing.is_empty() {
        return Err(Fatal(HteError::Schema { missing, extra: Vec::new() }.to_string()));
    }
    let covariates: Vec<String> = table
        .names
        .iter()
        .filter(|n| **n != args.treatment && Some(*n) != args.outcome.as_ref())
        .cloned()
        .collect();
    if covariates.is_empty() {
        return Err(Fatal("no covariate columns left after removing treatment and outcome".into()));
    }
    let x = table.matrix(&covariates)?;
    let z = table.binary_column(&args.treatment)?;
    let estimate = estimate_propensity_xz(
        &x,
        &z,
        PropensityOptions::default(),
        &mut SeedTree::new(args.seed).derive_stream("propensity", 0),
    )?;
    let report = overlap_diagnostics(&estimate.pi_hat, &z)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Fatal(format!("{}: {e}", args.out.display())))?;
    let mut head = header("none", args.seed);
    head.push(format!("data_sha256 {}", hex::encode(Sha256::digest(&bytes))));

    let mut w = create(&args.out, "overlap.csv")?;
    comments(&mut w, &head)?;
    report.write_csv(&mut w)?;
    w.flush()?;

    let mut w = create(&args.out, "flagged_units.csv")?;
    comments(&mut w, &head)?;
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(["unit", "treatment", "pi_hat"])?;
    for (i, (&p, &zi)) in estimate.pi_hat.iter().zip(&z).enumerate() {
        if !(OVERLAP_LOW..=OVERLAP_HIGH).contains(&p) {
            csv.write_record([i.to_string(), zi.to_string(), p.to_string()])?;
        }
    }
    csv.flush()?;
    drop(csv);
    w.flush()?;

    let treated = z.iter().filter(|&&v| v == 1).count();
    let mut w = create(&args.out, "overlap_summary.csv")?;
    comments(&mut w, &head)?;
    writeln!(w, "statistic,value")?;
    writeln!(w, "units,{}", z.len())?;
    writeln!(w, "treated,{treated}")?;
    writeln!(w, "control,{}", z.len() - treated)?;
    writeln!(w, "flagged,{}", report.outside)?;
    writeln!(w, "overlap_coefficient,{}", report.overlap_coefficient)?;
    w.flush()?;

    println!(
        "overlap coefficient {:.4}; {} of {} units have π̂ outside [{OVERLAP_LOW}, {OVERLAP_HIGH}]",
        report.overlap_coefficient,
        report.outside,
        z.len()
    );
    Ok(EXIT_OK)
}
