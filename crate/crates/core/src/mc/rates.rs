use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::InstrumentFamily;
use crate::ksstat::{critical_value, ks_statistic, TuningPolicy};
use crate::models::build_model;
use crate::regions::EstimatorTag;
use crate::sfunc::SFunction;

use super::dgp::{replication_seed, simulate, DgpSpec};
use super::harness::{run_mc_with, McDesign, McRow};

/// Sequence the median distance is regressed on (in logs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegressor {
    /// `c_n^2 log n / n`.
    #[default]
    CriticalLogN,
    /// `log n / n`.
    LogN,
}

impl RateRegressor {
    pub fn value(self, tuning: &TuningPolicy, n: usize) -> Result<f64> {
        let nf = n as f64;
        match self {
            RateRegressor::CriticalLogN => {
                let c = critical_value(tuning, n)?;
                Ok(c * c * nf.ln() / nf)
            }
            RateRegressor::LogN => Ok(nf.ln() / nf),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub estimator: EstimatorTag,
    pub regressor: RateRegressor,
    pub sizes: Vec<usize>,
    pub medians: Vec<f64>,
    /// Least-squares slope of log median on log regressor; None with fewer
    /// than two usable sizes.
    pub exponent: Option<f64>,
    pub predicted_exponent: f64,
    /// Ratios of consecutive medians.
    pub observed_shrink: Vec<f64>,
    /// `(r(n_{k+1}) / r(n_k))^predicted_exponent`.
    pub predicted_shrink: Vec<f64>,
    /// Sizes left out of the fit because their median was zero or not finite.
    pub excluded: Vec<usize>,
}

/// Fits `log median ~ a + b log r(n)` and reports shrink factors.
pub fn fit_rate(
    estimator: EstimatorTag,
    sizes: &[usize],
    medians: &[f64],
    regressor: RateRegressor,
    tuning: &TuningPolicy,
    predicted_exponent: f64,
) -> Result<RateReport> {
    if sizes.len() != medians.len() {
        return Err(Error::Dimension {
            what: "rate medians",
            expected: sizes.len(),
            got: medians.len(),
        });
    }
    let r = sizes
        .iter()
        .map(|n| regressor.value(tuning, *n))
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for ((n, m), rv) in sizes.iter().zip(medians).zip(&r) {
        if *m > 0.0 && m.is_finite() {
            xs.push(rv.ln());
            ys.push(m.ln());
        } else {
            excluded.push(*n);
        }
    }
    let exponent = if xs.len() >= 2 {
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    let observed_shrink = medians.windows(2).map(|w| w[1] / w[0]).collect();
    let predicted_shrink = r.windows(2).map(|w| (w[1] / w[0]).powf(predicted_exponent)).collect();
    Ok(RateReport {
        estimator,
        regressor,
        sizes: sizes.to_vec(),
        medians: medians.to_vec(),
        exponent,
        predicted_exponent,
        observed_shrink,
        predicted_shrink,
        excluded,
    })
}

/// Runs the design at `sizes` and fits the rate of its first estimator's
/// median Hausdorff distance.
pub fn rate_experiment(
    design: &McDesign,
    sizes: &[usize],
    regressor: RateRegressor,
    predicted_exponent: f64,
    progress: &(dyn Fn(&McRow) + Sync),
) -> Result<RateReport> {
    if sizes.len() < 3 {
        return Err(Error::config("sizes", "rate experiment needs at least 3 sizes"));
    }
    let mut d = design.clone();
    d.sizes = sizes.to_vec();
    let est = d.estimators[0];
    d.estimators = vec![est];
    let report = run_mc_with(&d, progress)?;
    let medians: Vec<f64> = sizes
        .iter()
        .map(|n| report.row(est, *n).map_or(f64::NAN, |r| r.d_h[1]))
        .collect();
    fit_rate(est, sizes, &medians, regressor, &d.tuning, predicted_exponent)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub sizes: Vec<usize>,
    /// Median of `sqrt(n) T_n(theta0)` per size.
    pub medians: Vec<f64>,
    /// Spearman correlation between size and median; None for one size.
    pub trend: Option<f64>,
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (average ranks for ties); None when either
/// side is constant or shorter than two.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let m = (a.len() as f64 + 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let va: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - m).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Medians of `sqrt(n) T_n(theta0)` on the contact-set design, where the
/// moment holds with equality on the whole support.
pub fn divergence_diagnostic(
    dgp: &DgpSpec,
    sizes: &[usize],
    reps: usize,
    tuning: &TuningPolicy,
    base_seed: u64,
) -> Result<DivergenceReport> {
    let DgpSpec::ContactSet { .. } = dgp else {
        return Err(Error::config("dgp.kind", "the divergence diagnostic needs the contact_set design"));
    };
    if reps == 0 || sizes.is_empty() {
        return Err(Error::config("reps", "need at least one size and one replication"));
    }
    let model = build_model(&dgp.model_spec())?;
    let theta0 = dgp.true_theta();
    let family = InstrumentFamily::AllDataIntervals;
    let s = SFunction::default();
    let mut medians = Vec::new();
    for &n in sizes {
        let values = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let sample = simulate(dgp, n, replication_seed(base_seed, n, rep))?;
                let stat = ks_statistic(&sample, &model, &theta0, &family, &s, tuning)?;
                Ok(stat.t_value * (n as f64).sqrt())
            })
            .collect::<Result<Vec<f64>>>()?;
        medians.push(super::harness::quantiles(&values, &[0.5])[0]);
    }
    let size_f: Vec<f64> = sizes.iter().map(|n| *n as f64).collect();
    Ok(DivergenceReport {
        sizes: sizes.to_vec(),
        trend: spearman(&size_f, &medians),
        medians,
    })
}
