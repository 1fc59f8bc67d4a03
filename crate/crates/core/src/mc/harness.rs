use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt::{bounded_region_with, kernel_noise_scale, kernel_region_with, BoundedWeightPolicy, KernelSpec};
use crate::error::{Error, Result};
use crate::instrument::InstrumentFamily;
use crate::ksstat::{critical_value, CriticalRule, TuningPolicy};
use crate::model::MomentModel;
use crate::models::{apply_boundary_transform, build_model, ModelSpec};
use crate::regions::{
    confidence_region_with, hausdorff, ConfidenceRegion, EstimatorTag, PointSet, SearchStrategy, ThetaGrid,
};
use crate::sample::{format_value, Sample};
use crate::sfunc::SFunction;

use super::dgp::{replication_seed, simulate, DgpSpec, GridSpec};
use super::oracle::{oracle_set, IdentifiedSetOracle};

/// Quantile levels of the distance columns and of `u_hat`.
pub const UPPER_LEVELS: [f64; 5] = [0.25, 0.5, 0.75, 0.9, 0.95];
/// Quantile levels of `l_hat`.
pub const LOWER_LEVELS: [f64; 5] = [0.05, 0.1, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McDesign {
    pub dgp: DgpSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorTag>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Falls back to the DGP's default grid.
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
    /// Critical value rule of the bounded-weight estimator (unit weights).
    #[serde(default)]
    pub bounded_c_rule: CriticalRule,
    #[serde(default = "default_x_check")]
    pub x_check: usize,
    #[serde(default = "default_search")]
    pub search: SearchStrategy,
    /// Keep one record per replication in the report.
    #[serde(default)]
    pub keep_replications: bool,
}

/// Critical value handed to the kernel region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelCritical {
    /// The tuning policy's `c_n` times the kernel noise scale.
    #[default]
    NoiseScaled,
    /// The tuning policy's `c_n` as is.
    Plain,
}

/// Cap on the parameter points used for the plug-in sd.
const NOISE_SCALE_THETAS: usize = 2000;

fn default_estimators() -> Vec<EstimatorTag> {
    vec![EstimatorTag::WeightedKs]
}

fn default_kernel() -> KernelSpec {
    KernelSpec::optimal(2.0)
}

fn default_x_check() -> usize {
    1201
}

fn default_search() -> SearchStrategy {
    SearchStrategy::Auto
}

impl McDesign {
    pub fn new(dgp: DgpSpec, sizes: Vec<usize>, reps: usize) -> Self {
        Self {
            dgp,
            estimators: default_estimators(),
            sizes,
            reps,
            base_seed: 0,
            grid: None,
            tuning: TuningPolicy::default(),
            family: InstrumentFamily::default(),
            s: SFunction::default(),
            kernel: default_kernel(),
            kernel_critical: KernelCritical::default(),
            bounded_c_rule: CriticalRule::default(),
            x_check: default_x_check(),
            search: default_search(),
            keep_replications: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.reps == 0 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        if self.sizes.is_empty() {
            return Err(Error::config("sizes", "must not be empty"));
        }
        if let Some(n) = self.sizes.iter().find(|n| **n < 3) {
            return Err(Error::config("sizes", format!("sample sizes must be at least 3, got {n}")));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators", "must not be empty"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid.clone().unwrap_or_else(|| self.dgp.default_grid())
    }

    pub fn grid(&self) -> Result<ThetaGrid> {
        self.grid_spec().build()
    }

    pub fn model(&self) -> Result<MomentModel> {
        build_model(&self.dgp.model_spec())
    }
}

/// Region computed by one estimator on one sample.
pub fn estimate_region(
    design: &McDesign,
    estimator: EstimatorTag,
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
) -> Result<ConfidenceRegion> {
    estimate_region_for(design, estimator, sample, &design.dgp.model_spec(), model, grid)
}

/// As [`estimate_region`], with the model spec (and so the boundary
/// transform) supplied by the caller instead of the design's DGP.
pub fn estimate_region_for(
    design: &McDesign,
    estimator: EstimatorTag,
    sample: &Sample,
    spec: &ModelSpec,
    model: &MomentModel,
    grid: &ThetaGrid,
) -> Result<ConfidenceRegion> {
    let transformed;
    let sample = match &spec.transform {
        Some(t) => {
            transformed = apply_boundary_transform(sample, t)?;
            &transformed
        }
        None => sample,
    };
    match estimator {
        EstimatorTag::WeightedKs => {
            confidence_region_with(sample, model, grid, &design.family, &design.s, &design.tuning, design.search)
        }
        EstimatorTag::BoundedKs => {
            let policy = BoundedWeightPolicy {
                c_rule: design.bounded_c_rule,
                ..Default::default()
            };
            bounded_region_with(sample, model, grid, &design.family, &design.s, &policy, design.search)
        }
        EstimatorTag::Kernel => {
            let mut c = critical_value(&design.tuning, sample.n())?;
            if design.kernel_critical == KernelCritical::NoiseScaled {
                c *= kernel_noise_scale(sample, model, &design.kernel, &grid.points(), NOISE_SCALE_THETAS)?;
            }
            kernel_region_with(sample, model, grid, &design.kernel, &design.s, c, design.search)
        }
    }
}

/// Oracle quantities shared by every replication.
#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub member: Vec<bool>,
    pub points: PointSet,
    pub projections: Vec<PointSet>,
    pub hulls: Vec<Option<(f64, f64)>>,
}

fn values_set(values: &[f64]) -> PointSet {
    PointSet::from_points(&values.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap_or_else(|_| PointSet::new(1))
}

impl OracleSummary {
    pub fn new(oracle: &IdentifiedSetOracle) -> Result<Self> {
        let points = oracle.members();
        let mut projections = Vec::new();
        let mut hulls = Vec::new();
        for k in 0..oracle.grid.dim() {
            let p = oracle.project(k)?;
            projections.push(values_set(&p.values));
            hulls.push(p.hull);
        }
        Ok(Self {
            member: oracle.member.clone(),
            points,
            projections,
            hulls,
        })
    }
}

/// Per-replication comparison of a region with the oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionAssessment {
    pub members: usize,
    pub covered: bool,
    pub d_h: f64,
    pub touches_edge: bool,
    /// Hausdorff distance of each coordinate projection.
    pub proj_d_h: Vec<f64>,
    /// Projection hull `[l_hat, u_hat]` per axis; NaN when the region is empty.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn assess_region(region: &ConfidenceRegion, oracle: &OracleSummary) -> Result<RegionAssessment> {
    let points = region.members();
    let d_h = hausdorff(&points, &oracle.points).d_h;
    let mut proj_d_h = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (k, oracle_proj) in oracle.projections.iter().enumerate() {
        let p = region.project(k)?;
        proj_d_h.push(hausdorff(&values_set(&p.values), oracle_proj).d_h);
        let (l, u) = p.hull.unwrap_or((f64::NAN, f64::NAN));
        lower.push(l);
        upper.push(u);
    }
    Ok(RegionAssessment {
        members: points.len(),
        covered: region.contains_all(&oracle.member),
        d_h,
        touches_edge: region.touches_grid_edge(),
        proj_d_h,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub estimator: EstimatorTag,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub assessment: RegionAssessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub estimator: Option<EstimatorTag>,
    pub n: usize,
    pub rep: usize,
    pub message: String,
}

/// Summary for one `(estimator, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub estimator: EstimatorTag,
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    pub coverage: f64,
    pub empty_regions: usize,
    pub edge_hits: usize,
    /// Quantiles of `d_H` at [`UPPER_LEVELS`].
    pub d_h: Vec<f64>,
    /// Per axis, quantiles of the projection distances at [`UPPER_LEVELS`].
    pub proj_d_h: Vec<Vec<f64>>,
    /// Per axis, quantiles of `l_hat` at [`LOWER_LEVELS`].
    pub lower: Vec<Vec<f64>>,
    /// Per axis, quantiles of `u_hat` at [`UPPER_LEVELS`].
    pub upper: Vec<Vec<f64>>,
    /// Per axis, share of nonempty regions with `l_hat > 0`.
    pub lower_positive: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub version: String,
    pub design: McDesign,
    pub grid_points: usize,
    pub oracle_members: usize,
    pub oracle_hulls: Vec<Option<(f64, f64)>>,
    pub rows: Vec<McRow>,
    pub failures: Vec<FailureRecord>,
    #[serde(skip)]
    pub replications: Vec<ReplicationRecord>,
}

impl McReport {
    pub fn row(&self, estimator: EstimatorTag, n: usize) -> Option<&McRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.n == n)
    }
}

/// Type-7 sample quantiles; NaN entries are dropped and an empty input gives
/// NaN. Infinite entries propagate to any level that touches them.
pub fn quantiles(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    levels
        .iter()
        .map(|p| {
            if v.is_empty() {
                return f64::NAN;
            }
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            let frac = h - lo as f64;
            if lo == hi || v[lo] == v[hi] || frac == 0.0 {
                v[lo]
            } else if v[hi].is_infinite() {
                v[hi]
            } else {
                v[lo] + frac * (v[hi] - v[lo])
            }
        })
        .collect()
}

fn aggregate(estimator: EstimatorTag, n: usize, dim: usize, records: &[&ReplicationRecord], failed: usize) -> McRow {
    let completed = records.len();
    let covered = records.iter().filter(|r| r.assessment.covered).count();
    let col = |f: &dyn Fn(&RegionAssessment) -> f64| records.iter().map(|r| f(&r.assessment)).collect::<Vec<_>>();
    let d_h = quantiles(&col(&|a| a.d_h), &UPPER_LEVELS);
    let mut proj_d_h = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut lower_positive = Vec::new();
    for k in 0..dim {
        proj_d_h.push(quantiles(&col(&|a| a.proj_d_h[k]), &UPPER_LEVELS));
        let ls = col(&|a| a.lower[k]);
        lower.push(quantiles(&ls, &LOWER_LEVELS));
        upper.push(quantiles(&col(&|a| a.upper[k]), &UPPER_LEVELS));
        let finite: Vec<f64> = ls.into_iter().filter(|v| !v.is_nan()).collect();
        let pos = finite.iter().filter(|v| **v > 0.0).count();
        lower_positive.push(if finite.is_empty() {
            f64::NAN
        } else {
            pos as f64 / finite.len() as f64
        });
    }
    McRow {
        estimator,
        n,
        completed,
        failed,
        coverage: if completed == 0 {
            f64::NAN
        } else {
            covered as f64 / completed as f64
        },
        empty_regions: records.iter().filter(|r| r.assessment.members == 0).count(),
        edge_hits: records.iter().filter(|r| r.assessment.touches_edge).count(),
        d_h,
        proj_d_h,
        lower,
        upper,
        lower_positive,
    }
}

type Outcome = std::result::Result<ReplicationRecord, FailureRecord>;

fn run_replication(
    design: &McDesign,
    model: &MomentModel,
    grid: &ThetaGrid,
    oracle: &OracleSummary,
    n: usize,
    rep: usize,
) -> Vec<Outcome> {
    let seed = replication_seed(design.base_seed, n, rep);
    let fail = |estimator, e: Error| FailureRecord {
        estimator,
        n,
        rep,
        message: e.to_string(),
    };
    let sample = match simulate(&design.dgp, n, seed) {
        Ok(s) => s,
        Err(e) => return vec![Err(fail(None, e))],
    };
    design
        .estimators
        .iter()
        .map(|&est| {
            estimate_region(design, est, &sample, model, grid)
                .and_then(|region| assess_region(&region, oracle))
                .map(|assessment| ReplicationRecord {
                    estimator: est,
                    n,
                    rep,
                    seed,
                    assessment,
                })
                .map_err(|e| fail(Some(est), e))
        })
        .collect()
}

/// Runs every `(n, replication)` cell and aggregates per estimator and size.
/// `progress` is called once per finished sample size.
pub fn run_mc_with(design: &McDesign, progress: &(dyn Fn(&McRow) + Sync)) -> Result<McReport> {
    design.validate()?;
    let grid = design.grid()?;
    let model = design.model()?;
    grid.within(model.theta_box())?;
    let oracle = oracle_set(&design.dgp, &grid, design.x_check)?;
    let summary = OracleSummary::new(&oracle)?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut replications = Vec::new();
    for &n in &design.sizes {
        let outcomes: Vec<Vec<Outcome>> = (0..design.reps)
            .into_par_iter()
            .map(|rep| run_replication(design, &model, &grid, &summary, n, rep))
            .collect();
        let mut records = Vec::new();
        for o in outcomes.into_iter().flatten() {
            match o {
                Ok(r) => records.push(r),
                Err(f) => failures.push(f),
            }
        }
        for &est in &design.estimators {
            let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == est).collect();
            let failed = failures
                .iter()
                .filter(|f| f.n == n && f.estimator.is_none_or(|e| e == est))
                .count();
            let row = aggregate(est, n, grid.dim(), &mine, failed);
            progress(&row);
            rows.push(row);
        }
        if design.keep_replications {
            replications.extend(records);
        }
    }
    Ok(McReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        design: design.clone(),
        grid_points: grid.len(),
        oracle_members: oracle.count(),
        oracle_hulls: summary.hulls,
        rows,
        failures,
        replications,
    })
}

pub fn run_mc(design: &McDesign) -> Result<McReport> {
    run_mc_with(design, &|_| {})
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_value(v)
    }
}

fn rows_for(report: &McReport, estimator: EstimatorTag) -> impl Iterator<Item = &McRow> {
    report.rows.iter().filter(move |r| r.estimator == estimator)
}

/// `n, q25, q50, q75, q90, q95, coverage` for the full-set distances.
pub fn write_distance_table<W: Write>(writer: W, report: &McReport, estimator: EstimatorTag) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["n", "q25", "q50", "q75", "q90", "q95", "coverage"])?;
    for row in rows_for(report, estimator) {
        let mut rec = vec![row.n.to_string()];
        rec.extend(row.d_h.iter().map(|v| cell(*v)));
        rec.push(cell(row.coverage));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `axis, n, q25, ..., q95` for the projection distances.
pub fn write_projection_table<W: Write>(writer: W, report: &McReport, estimator: EstimatorTag) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["axis", "n", "q25", "q50", "q75", "q90", "q95"])?;
    let dim = report.oracle_hulls.len();
    for k in 0..dim {
        for row in rows_for(report, estimator) {
            let mut rec = vec![format!("theta{}", k + 1), row.n.to_string()];
            rec.extend(row.proj_d_h[k].iter().map(|v| cell(*v)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `axis, n, l05, ..., l75, u25, ..., u95` for the projection endpoints.
pub fn write_endpoint_table<W: Write>(writer: W, report: &McReport, estimator: EstimatorTag) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "axis", "n", "l05", "l10", "l25", "l50", "l75", "u25", "u50", "u75", "u90", "u95",
    ])?;
    let dim = report.oracle_hulls.len();
    for k in 0..dim {
        for row in rows_for(report, estimator) {
            let mut rec = vec![format!("theta{}", k + 1), row.n.to_string()];
            rec.extend(row.lower[k].iter().map(|v| cell(*v)));
            rec.extend(row.upper[k].iter().map(|v| cell(*v)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_replications_csv<W: Write>(writer: W, records: &[ReplicationRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = records.first().map_or(0, |r| r.assessment.lower.len());
    let mut header: Vec<String> = ["estimator", "n", "rep", "seed", "members", "covered", "d_h", "touches_edge"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 1..=dim {
        header.extend([format!("proj_d_h{k}"), format!("lower{k}"), format!("upper{k}")]);
    }
    wtr.write_record(&header)?;
    for r in records {
        let a = &r.assessment;
        let mut rec = vec![
            r.estimator.as_str().to_string(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            a.members.to_string(),
            u8::from(a.covered).to_string(),
            cell(a.d_h),
            u8::from(a.touches_edge).to_string(),
        ];
        for k in 0..dim {
            rec.extend([cell(a.proj_d_h[k]), cell(a.lower[k]), cell(a.upper[k])]);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// JSON manifest: version, the full design with defaults filled in, the
/// seed rule and the aggregated rows.
pub fn write_manifest<W: Write>(writer: W, report: &McReport) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        report: &'a McReport,
        seed_rule: &'static str,
    }
    serde_json::to_writer_pretty(
        writer,
        &Manifest {
            report,
            seed_rule: "replication seed = base_seed xor splitmix64(splitmix64(n) xor rotl(rep, 32)); ChaCha8, stream 0",
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rules() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantiles(&v, &[0.0, 0.5, 1.0]), vec![1.0, 2.5, 4.0]);
        assert_eq!(quantiles(&[1.0, f64::INFINITY], &[0.25, 1.0]), vec![f64::INFINITY, f64::INFINITY]);
        assert!(quantiles(&[f64::NAN], &[0.5])[0].is_nan());
        let q = quantiles(&[3.0, 1.0, 2.0, f64::NAN], &UPPER_LEVELS);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn design_validation() {
        let d = McDesign::new(DgpSpec::median_missing(), vec![], 1);
        assert!(matches!(d.validate(), Err(Error::Config { key, .. }) if key == "sizes"));
        let d = McDesign::new(DgpSpec::median_missing(), vec![100], 0);
        assert!(matches!(d.validate(), Err(Error::Config { key, .. }) if key == "reps"));
    }

    #[test]
    fn design_json_defaults() {
        let d: McDesign =
            serde_json::from_str(r#"{"dgp": {"kind": "median_missing"}, "sizes": [200], "reps": 3}"#).unwrap();
        assert_eq!(d, McDesign::new(DgpSpec::median_missing(), vec![200], 3));
        let back: McDesign = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
