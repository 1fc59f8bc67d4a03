//! Batch front end: `simulate`, `estimate`, `mc`, `rates`, `diagnose` and
//! `oracle`, driven by a versioned JSON config.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::alt::KernelSpec;
use crate::error::{Error, Result};
use crate::instrument::InstrumentFamily;
use crate::ksstat::{CriticalRule, TuningPolicy};
use crate::mc::{
    divergence_diagnostic, estimate_region_for, oracle_set, rate_experiment, run_mc_with, simulate,
    write_distance_table, write_endpoint_table, write_manifest, write_projection_table, write_replications_csv,
    DgpSpec, GridSpec, KernelCritical, McDesign, McRow, RateRegressor,
};
use crate::models::{build_model, ModelSpec};
use crate::regions::{write_regions_csv, EstimatorTag, SearchStrategy};
use crate::sample::{format_value, Sample};
use crate::sfunc::SFunction;

pub const CONFIG_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "MOMENTSET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "momentset", version, about = "Confidence regions for conditional moment inequality models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Run config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file, or directory for `mc`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to MOMENTSET_THREADS, then the config.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from the configured DGP.
    Simulate(Common),
    /// Confidence region for one sample.
    Estimate(Common),
    /// Monte Carlo tables.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo design (JSON); replaces the config's `mc` block.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Rate of the median Hausdorff distance across sample sizes.
    Rates(Common),
    /// Growth of `sqrt(n) T_n` at a contact point.
    Diagnose(Common),
    /// Discretized identified set of the configured DGP.
    Oracle(Common),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBlock {
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorTag>,
    #[serde(default)]
    pub keep_replications: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesBlock {
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorTag,
    #[serde(default)]
    pub regressor: RateRegressor,
    #[serde(default = "default_exponent")]
    pub predicted_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseBlock {
    #[serde(default = "default_diagnose_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_diagnose_reps")]
    pub reps: usize,
}

impl Default for DiagnoseBlock {
    fn default() -> Self {
        Self {
            sizes: default_diagnose_sizes(),
            reps: default_diagnose_reps(),
        }
    }
}

/// Everything a run needs. Every field but `version` has a default, and
/// the resolved config is written next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default = "DgpSpec::median_missing")]
    pub dgp: DgpSpec,
    /// Model used by `estimate`; defaults to the DGP's model.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Sample CSV for `estimate`; simulated from the DGP when absent.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorTag,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub tuning: TuningPolicy,
    #[serde(default)]
    pub family: InstrumentFamily,
    #[serde(default)]
    pub s: SFunction,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub kernel_critical: KernelCritical,
    #[serde(default)]
    pub bounded_c_rule: CriticalRule,
    #[serde(default = "default_search")]
    pub search: SearchStrategy,
    #[serde(default = "default_x_check")]
    pub x_check: usize,
    #[serde(default)]
    pub mc: Option<McBlock>,
    #[serde(default)]
    pub rates: Option<RatesBlock>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseBlock>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_estimators() -> Vec<EstimatorTag> {
    vec![EstimatorTag::WeightedKs]
}
fn default_estimator() -> EstimatorTag {
    EstimatorTag::WeightedKs
}
fn default_exponent() -> f64 {
    0.4
}
fn default_diagnose_sizes() -> Vec<usize> {
    vec![200, 800, 3200]
}
fn default_diagnose_reps() -> usize {
    200
}
fn default_n() -> usize {
    500
}
fn default_kernel() -> KernelSpec {
    KernelSpec::optimal(2.0)
}
fn default_search() -> SearchStrategy {
    SearchStrategy::Auto
}
fn default_x_check() -> usize {
    1201
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            dgp: DgpSpec::median_missing(),
            model: None,
            data: None,
            n: default_n(),
            seed: 0,
            estimator: default_estimator(),
            grid: None,
            tuning: TuningPolicy::default(),
            family: InstrumentFamily::default(),
            s: SFunction::default(),
            kernel: default_kernel(),
            kernel_critical: KernelCritical::default(),
            bounded_c_rule: CriticalRule::default(),
            search: default_search(),
            x_check: default_x_check(),
            mc: None,
            rates: None,
            diagnose: None,
            threads: None,
        }
    }
}

/// Deserializes JSON, reporting the path of the offending key on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path.is_empty() || path == "." { "<root>".to_string() } else { path };
        Error::config(key, e.into_inner().to_string())
    })
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported config version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        self.dgp.validate()?;
        if let Some(m) = &self.model {
            m.validate()?;
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model.clone().unwrap_or_else(|| self.dgp.model_spec())
    }

    /// A design carrying this config's estimator settings.
    pub fn design(&self, sizes: Vec<usize>, reps: usize) -> McDesign {
        McDesign {
            dgp: self.dgp.clone(),
            estimators: vec![self.estimator],
            sizes,
            reps,
            base_seed: self.seed,
            grid: self.grid.clone(),
            tuning: self.tuning,
            family: self.family.clone(),
            s: self.s,
            kernel: self.kernel,
            kernel_critical: self.kernel_critical,
            bounded_c_rule: self.bounded_c_rule,
            x_check: self.x_check,
            search: self.search,
            keep_replications: false,
        }
    }

    fn grid_spec(&self) -> GridSpec {
        self.grid.clone().unwrap_or_else(|| self.dgp.default_grid())
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = BufWriter::new(tmp.as_file_mut());
        f(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// `region.csv` -> `region.manifest.json`.
fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Serialize)]
struct RunManifest<'a> {
    software: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
}

fn write_run_manifest(out: &Path, command: &'static str, cfg: &RunConfig) -> Result<()> {
    write_json(
        &manifest_path(out),
        &RunManifest {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: cfg,
        },
    )
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn resolve_threads(flag: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = flag {
        if t == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        return Ok(Some(t));
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::config(THREADS_ENV, format!("expected a positive integer, got {v:?}")))?;
        if t == 0 {
            return Err(Error::config(THREADS_ENV, "must be at least 1"));
        }
        return Ok(Some(t));
    }
    Ok(cfg)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn out_or(common: &Common, csv: &str, json: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        PathBuf::from(match common.format {
            Format::Csv => csv,
            Format::Json => json,
        })
    })
}

fn hull_text(h: &Option<(f64, f64)>) -> String {
    match h {
        Some((a, b)) => format!("[{}, {}]", format_value(*a), format_value(*b)),
        None => "empty".into(),
    }
}

fn cmd_simulate(common: &Common, cfg: &RunConfig) -> Result<()> {
    let out = out_or(common, "sample.csv", "sample.json");
    let sample = simulate(&cfg.dgp, cfg.n, cfg.seed)?;
    match common.format {
        Format::Csv => write_atomic(&out, |w| sample.write_csv(w))?,
        Format::Json => {
            #[derive(Serialize)]
            struct Rows<'a> {
                d_x: usize,
                d_w: usize,
                x: &'a [f64],
                w: Vec<Option<f64>>,
            }
            // JSON has no infinities; censored endpoints become null
            let w = sample.w().iter().map(|v| v.is_finite().then_some(*v)).collect();
            write_json(
                &out,
                &Rows {
                    d_x: sample.d_x(),
                    d_w: sample.d_w(),
                    x: sample.x(),
                    w,
                },
            )?
        }
    }
    write_run_manifest(&out, "simulate", cfg)?;
    println!("simulate: n={} seed={} -> {}", cfg.n, cfg.seed, out.display());
    Ok(())
}

fn cmd_estimate(common: &Common, cfg: &RunConfig) -> Result<()> {
    let out = out_or(common, "region.csv", "region.json");
    let sample = match &cfg.data {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| Error::config("data", format!("cannot open {}: {e}", path.display())))?;
            Sample::read_csv(file)?
        }
        None => simulate(&cfg.dgp, cfg.n, cfg.seed)?,
    };
    println!("estimate: loaded n={} observations", sample.n());
    let spec = cfg.model_spec();
    let model = build_model(&spec)?;
    let grid = cfg.grid_spec().build()?;
    let design = cfg.design(vec![sample.n().max(3)], 1);
    let region = estimate_region_for(&design, cfg.estimator, &sample, &spec, &model, &grid)?;
    let summary = region.summary()?;
    match common.format {
        Format::Csv => write_atomic(&out, |w| write_regions_csv(w, &[&region]))?,
        Format::Json => write_json(&out, &summary)?,
    }
    write_run_manifest(&out, "estimate", cfg)?;
    let hulls: Vec<String> = summary.hulls.iter().map(hull_text).collect();
    println!(
        "estimate: {} c={:.4} members={}/{} hulls={} -> {}",
        cfg.estimator.as_str(),
        summary.c_used,
        summary.members,
        summary.grid_points,
        hulls.join(" x "),
        out.display()
    );
    Ok(())
}

fn print_row(row: &McRow) {
    println!(
        "mc: {} n={} completed={} failed={} coverage={:.3} median d_H={:.4}",
        row.estimator.as_str(),
        row.n,
        row.completed,
        row.failed,
        row.coverage,
        row.d_h[1]
    );
}

fn cmd_mc(common: &Common, design_path: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let mut design = match design_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("--design", format!("cannot read {}: {e}", path.display())))?;
            parse_json::<McDesign>(&text)?
        }
        None => {
            let block = cfg
                .mc
                .as_ref()
                .ok_or_else(|| Error::config("mc", "missing: pass --design or add an `mc` block to the config"))?;
            let mut d = cfg.design(block.sizes.clone(), block.reps);
            d.estimators = block.estimators.clone();
            d.keep_replications = block.keep_replications;
            d
        }
    };
    if let Some(seed) = common.seed {
        design.base_seed = seed;
    }
    design.validate()?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("mc_out"));
    fs::create_dir_all(&dir)?;
    let report = run_mc_with(&design, &print_row)?;
    if common.format == Format::Csv {
        for est in &design.estimators {
            let tag = est.as_str();
            write_atomic(&dir.join(format!("table1_{tag}.csv")), |w| write_distance_table(w, &report, *est))?;
            write_atomic(&dir.join(format!("table2_{tag}.csv")), |w| write_projection_table(w, &report, *est))?;
            write_atomic(&dir.join(format!("table3_{tag}.csv")), |w| write_endpoint_table(w, &report, *est))?;
        }
        if design.keep_replications {
            write_atomic(&dir.join("replications.csv"), |w| write_replications_csv(w, &report.replications))?;
        }
    }
    write_atomic(&dir.join("manifest.json"), |w| write_manifest(w, &report))?;
    println!(
        "mc: {} rows, {} failures, oracle {} of {} grid points -> {}",
        report.rows.len(),
        report.failures.len(),
        report.oracle_members,
        report.grid_points,
        dir.display()
    );
    Ok(())
}

fn cmd_rates(common: &Common, cfg: &RunConfig) -> Result<()> {
    let block = cfg
        .rates
        .as_ref()
        .ok_or_else(|| Error::config("rates", "missing `rates` block"))?;
    let mut design = cfg.design(block.sizes.clone(), block.reps);
    design.estimators = vec![block.estimator];
    design.validate()?;
    let out = out_or(common, "rates.csv", "rates.json");
    let report = rate_experiment(
        &design,
        &block.sizes,
        block.regressor,
        block.predicted_exponent,
        &print_row,
    )?;
    match common.format {
        Format::Csv => write_atomic(&out, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["n", "median_d_h", "observed_shrink", "predicted_shrink"])?;
            for (k, (n, m)) in report.sizes.iter().zip(&report.medians).enumerate() {
                let (o, p) = if k == 0 {
                    (String::new(), String::new())
                } else {
                    (
                        format_value(report.observed_shrink[k - 1]),
                        format_value(report.predicted_shrink[k - 1]),
                    )
                };
                wtr.write_record([n.to_string(), format_value(*m), o, p])?;
            }
            wtr.flush()?;
            Ok(())
        })?,
        Format::Json => write_json(&out, &report)?,
    }
    write_run_manifest(&out, "rates", cfg)?;
    let exponent = report.exponent.map_or("undefined".to_string(), |e| format!("{e:.3}"));
    println!(
        "rates: {} exponent={} (predicted {}) -> {}",
        block.estimator.as_str(),
        exponent,
        block.predicted_exponent,
        out.display()
    );
    Ok(())
}

fn cmd_diagnose(common: &Common, cfg: &RunConfig) -> Result<()> {
    let block = cfg.diagnose.clone().unwrap_or_default();
    let out = out_or(common, "diagnose.csv", "diagnose.json");
    let report = divergence_diagnostic(&cfg.dgp, &block.sizes, block.reps, &cfg.tuning, cfg.seed)?;
    match common.format {
        Format::Csv => write_atomic(&out, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["n", "median_sqrt_n_t"])?;
            for (n, m) in report.sizes.iter().zip(&report.medians) {
                wtr.write_record([n.to_string(), format_value(*m)])?;
            }
            wtr.flush()?;
            Ok(())
        })?,
        Format::Json => write_json(&out, &report)?,
    }
    write_run_manifest(&out, "diagnose", cfg)?;
    let trend = report.trend.map_or("undefined".to_string(), |t| format!("{t:.3}"));
    println!("diagnose: medians={:.4?} trend={} -> {}", report.medians, trend, out.display());
    Ok(())
}

fn cmd_oracle(common: &Common, cfg: &RunConfig) -> Result<()> {
    let out = out_or(common, "oracle.csv", "oracle.json");
    let grid = cfg.grid_spec().build()?;
    let oracle = oracle_set(&cfg.dgp, &grid, cfg.x_check)?;
    let hulls = (0..grid.dim())
        .map(|k| oracle.project(k).map(|p| p.hull))
        .collect::<Result<Vec<_>>>()?;
    match common.format {
        Format::Csv => write_atomic(&out, |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let header: Vec<String> = (1..=grid.dim()).map(|k| format!("theta{k}")).collect();
            wtr.write_record(&header)?;
            for p in oracle.members().iter() {
                wtr.write_record(p.iter().map(|v| format_value(*v)))?;
            }
            wtr.flush()?;
            Ok(())
        })?,
        Format::Json => {
            #[derive(Serialize)]
            struct Summary<'a> {
                grid_points: usize,
                members: usize,
                x_check: usize,
                hulls: &'a [Option<(f64, f64)>],
            }
            write_json(
                &out,
                &Summary {
                    grid_points: grid.len(),
                    members: oracle.count(),
                    x_check: oracle.x_check.len(),
                    hulls: &hulls,
                },
            )?
        }
    }
    write_run_manifest(&out, "oracle", cfg)?;
    let hulls: Vec<String> = hulls.iter().map(hull_text).collect();
    println!(
        "oracle: {} of {} grid points, hulls {} -> {}",
        oracle.count(),
        grid.len(),
        hulls.join(" x "),
        out.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let (common, design) = match &cli.command {
        Command::Simulate(c)
        | Command::Estimate(c)
        | Command::Rates(c)
        | Command::Diagnose(c)
        | Command::Oracle(c) => (c, None),
        Command::Mc { common, design } => (common, design.as_deref()),
    };
    let cfg = load_config(common)?;
    let threads = resolve_threads(common.threads, cfg.threads)?;
    with_pool(threads, || match &cli.command {
        Command::Simulate(_) => cmd_simulate(common, &cfg),
        Command::Estimate(_) => cmd_estimate(common, &cfg),
        Command::Mc { .. } => cmd_mc(common, design, &cfg),
        Command::Rates(_) => cmd_rates(common, &cfg),
        Command::Diagnose(_) => cmd_diagnose(common, &cfg),
        Command::Oracle(_) => cmd_oracle(common, &cfg),
    })
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 2 for usage or configuration errors, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) if e.is_config() => {
            eprintln!("config error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
