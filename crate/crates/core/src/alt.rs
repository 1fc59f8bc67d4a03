//! Competitor set estimators: KS statistics with bounded weights (scaled by
//! `sqrt(n)`) and kernel estimates of the conditional mean.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{Instrument, InstrumentFamily, KernelId};
use crate::ksstat::{critical_from_rule, plugin_sd_scale, CriticalRule, KsEngine, StatResult, Weighting};
use crate::model::{MomentModel, Monotonicity};
use crate::regions::{build_region, ConfidenceRegion, EstimatorTag, GridStatistic, SearchStrategy, ThetaGrid};
use crate::sample::Sample;
use crate::sfunc::SFunction;

pub type WeightFn = dyn Fn(&[f64], &Instrument, usize) -> f64 + Send + Sync;

/// Weight `omega(theta, g, j)` multiplying each sample moment.
#[derive(Clone, Default)]
pub enum Omega {
    #[default]
    Unit,
    /// Values are clamped into `[lower, upper]`.
    Custom {
        f: Arc<WeightFn>,
        lower: f64,
        upper: f64,
    },
}

impl fmt::Debug for Omega {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Omega::Unit => write!(f, "Unit"),
            Omega::Custom { lower, upper, .. } => write!(f, "Custom([{lower}, {upper}])"),
        }
    }
}

impl Omega {
    pub fn custom(f: Arc<WeightFn>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(Error::config(
                "omega",
                format!("bounds must satisfy 0 < lower <= upper < inf, got [{lower}, {upper}]"),
            ));
        }
        Ok(Omega::Custom { f, lower, upper })
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Omega::Unit => (1.0, 1.0),
            Omega::Custom { lower, upper, .. } => (*lower, *upper),
        }
    }

    #[inline]
    pub(crate) fn weight(&self, theta: &[f64], instrument: impl FnOnce() -> Instrument, j: usize) -> f64 {
        match self {
            Omega::Unit => 1.0,
            Omega::Custom { f, lower, upper } => f(theta, &instrument(), j).clamp(*lower, *upper),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundedWeightPolicy {
    #[serde(skip)]
    pub omega: Omega,
    #[serde(default)]
    pub c_rule: CriticalRule,
}

/// `T_{n,omega}(theta) = sup_g S(omega_1 mu_1, ..., omega_dY mu_dY)`, scaled by
/// `sqrt(n)`.
#[derive(Debug)]
pub struct BoundedKs<'a> {
    engine: KsEngine<'a>,
    c_n: Option<f64>,
}

impl<'a> BoundedKs<'a> {
    pub fn new(
        sample: &'a Sample,
        model: &'a MomentModel,
        family: &InstrumentFamily,
        s: SFunction,
        policy: &BoundedWeightPolicy,
    ) -> Result<Self> {
        let n = sample.n();
        if n < 1 {
            return Err(Error::SampleSize { need: 1, got: 0 });
        }
        let engine = KsEngine::new(
            sample,
            model,
            family,
            s,
            Weighting::Bounded(policy.omega.clone()),
            (n as f64).sqrt(),
        )?;
        Ok(Self {
            engine,
            c_n: critical_from_rule(policy.c_rule, n).ok(),
        })
    }

    pub fn statistic(&self, theta: &[f64]) -> Result<StatResult> {
        self.engine.evaluate(theta)
    }

    pub fn critical_value(&self) -> Result<f64> {
        self.c_n
            .ok_or_else(|| Error::config("c_rule", format!("default rule needs n >= 3, got {}", self.engine.n())))
    }
}

impl GridStatistic for BoundedKs<'_> {
    fn tag(&self) -> EstimatorTag {
        EstimatorTag::BoundedKs
    }

    fn scaled(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.statistic(theta)?.scaled)
    }

    fn monotone_rows(&self) -> Option<Monotonicity> {
        self.engine.monotone_rows()
    }

    fn component_exceeds(&self, theta: &[f64], j: usize, c: f64) -> Result<bool> {
        self.engine.component_exceeds(theta, j, c)
    }
}

pub fn bounded_ks_statistic(
    sample: &Sample,
    model: &MomentModel,
    theta: &[f64],
    family: &InstrumentFamily,
    s: &SFunction,
    policy: &BoundedWeightPolicy,
) -> Result<StatResult> {
    BoundedKs::new(sample, model, family, *s, policy)?.statistic(theta)
}

/// `{theta : sqrt(n) T_{n,omega}(theta) <= c_n}`.
pub fn bounded_region(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    family: &InstrumentFamily,
    s: &SFunction,
    policy: &BoundedWeightPolicy,
) -> Result<ConfidenceRegion> {
    bounded_region_with(sample, model, grid, family, s, policy, SearchStrategy::Exhaustive)
}

pub fn bounded_region_with(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    family: &InstrumentFamily,
    s: &SFunction,
    policy: &BoundedWeightPolicy,
    strategy: SearchStrategy,
) -> Result<ConfidenceRegion> {
    grid.within(model.theta_box())?;
    let stat = BoundedKs::new(sample, model, family, *s, policy)?;
    let c = stat.critical_value()?;
    build_region(&stat, grid, c, strategy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed { h: f64 },
    /// `h_n = c n^(-exponent)`.
    Power { c: f64, exponent: f64 },
    /// `h_n = (log n / n)^(1 / (d_x + 2 alpha))`.
    Optimal { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub kernel: KernelId,
    pub h_rule: BandwidthRule,
    /// Lower bound `a` required of `h^{d_x} n / log n`.
    #[serde(default = "default_side_constant")]
    pub side_constant: f64,
}

fn default_side_constant() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn optimal(alpha: f64) -> Self {
        Self {
            kernel: KernelId::Uniform,
            h_rule: BandwidthRule::Optimal { alpha },
            side_constant: 1.0,
        }
    }

    pub fn bandwidth(&self, n: usize, d_x: usize) -> Result<f64> {
        let nf = n as f64;
        let h = match self.h_rule {
            BandwidthRule::Fixed { h } => h,
            BandwidthRule::Power { c, exponent } => c * nf.powf(-exponent),
            BandwidthRule::Optimal { alpha } => {
                if n < 2 || !(alpha > 0.0) {
                    return Err(Error::config("h_rule", "optimal rule needs n >= 2 and alpha > 0"));
                }
                (nf.ln() / nf).powf(1.0 / (d_x as f64 + 2.0 * alpha))
            }
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::config("h_rule", format!("bandwidth must be positive, got {h}")));
        }
        Ok(h)
    }

    /// `h^{d_x} n / log n`, which must stay above `side_constant`.
    pub fn side_condition(&self, n: usize, d_x: usize) -> Result<f64> {
        let h = self.bandwidth(n, d_x)?;
        let nf = n as f64;
        Ok(h.powi(d_x as i32) * nf / nf.ln())
    }
}

/// Nadaraya–Watson estimate of `E[m(W, theta) | X = x]`.
pub fn kernel_cond_mean(
    sample: &Sample,
    model: &MomentModel,
    theta: &[f64],
    x: &[f64],
    spec: &KernelSpec,
) -> Result<Vec<f64>> {
    model.validate_sample(sample)?;
    model.check_theta(theta)?;
    if x.len() != sample.d_x() {
        return Err(Error::Dimension {
            what: "evaluation point",
            expected: sample.d_x(),
            got: x.len(),
        });
    }
    if sample.is_empty() {
        return Err(Error::ZeroDenominator);
    }
    let h = spec.bandwidth(sample.n(), sample.d_x())?;
    let d_y = model.d_y();
    let mut num = vec![0.0; d_y];
    let mut den = 0.0;
    let mut m = vec![0.0; d_y];
    for i in 0..sample.n() {
        let k = spec.kernel.eval_product(sample.x_row(i), x, h);
        if k == 0.0 {
            continue;
        }
        model.eval_into(sample.x_row(i), sample.w_row(i), theta, &mut m);
        den += k;
        for j in 0..d_y {
            num[j] += k * m[j];
        }
    }
    if den <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num.into_iter().map(|v| v / den).collect())
}

/// `T^kern(theta) = sup_x S(m_hat(theta, x))` over the observed `X_i`, scaled
/// by `sqrt(n h^{d_x} / log n)`.
#[derive(Debug)]
pub struct KernelStat<'a> {
    sample: &'a Sample,
    model: &'a MomentModel,
    spec: KernelSpec,
    s: SFunction,
    h: f64,
    scale: f64,
    // d_x = 1: observation indices sorted by x, and the sorted values
    order: Vec<usize>,
    xs: Vec<f64>,
}

impl<'a> KernelStat<'a> {
    pub fn new(sample: &'a Sample, model: &'a MomentModel, spec: &KernelSpec, s: SFunction) -> Result<Self> {
        model.validate_sample(sample)?;
        let n = sample.n();
        if n < 2 {
            return Err(Error::SampleSize { need: 2, got: n });
        }
        let d_x = sample.d_x();
        let h = spec.bandwidth(n, d_x)?;
        let side = spec.side_condition(n, d_x)?;
        if side < spec.side_constant {
            return Err(Error::config(
                "h_rule",
                format!(
                    "h^d_x n / log n = {side:.4} is below the required {}",
                    spec.side_constant
                ),
            ));
        }
        let nf = n as f64;
        let scale = (nf * h.powi(d_x as i32) / nf.ln()).sqrt();
        let (order, xs) = if d_x == 1 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|a, b| sample.x_row(*a)[0].total_cmp(&sample.x_row(*b)[0]));
            let xs = order.iter().map(|i| sample.x_row(*i)[0]).collect();
            (order, xs)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            sample,
            model,
            spec: *spec,
            s,
            h,
            scale,
            order,
            xs,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `m_hat(theta, X_k)` for every observation `k` (in sample order for
    /// `d_x > 1`, in sorted-x order for `d_x = 1`), row-major `n x d_y`.
    fn estimates(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.sample.n();
        let d_y = self.model.d_y();
        let mut out = vec![0.0; n * d_y];
        if self.sample.d_x() == 1 {
            let mut m = vec![0.0; n * d_y];
            for (pos, &i) in self.order.iter().enumerate() {
                self.model.eval_into(
                    self.sample.x_row(i),
                    self.sample.w_row(i),
                    theta,
                    &mut m[pos * d_y..(pos + 1) * d_y],
                );
            }
            let uniform = self.spec.kernel == KernelId::Uniform;
            let mut prefix = Vec::new();
            if uniform {
                prefix = vec![0.0; (n + 1) * d_y];
                for pos in 0..n {
                    for j in 0..d_y {
                        prefix[(pos + 1) * d_y + j] = prefix[pos * d_y + j] + m[pos * d_y + j];
                    }
                }
            }
            for k in 0..n {
                let x = self.xs[k];
                let lo = self.xs.partition_point(|v| (v - x) / self.h < -1.0);
                let hi = self.xs.partition_point(|v| (v - x) / self.h <= 1.0);
                let row = &mut out[k * d_y..(k + 1) * d_y];
                if uniform {
                    let cnt = (hi - lo) as f64;
                    for j in 0..d_y {
                        row[j] = (prefix[hi * d_y + j] - prefix[lo * d_y + j]) / cnt;
                    }
                } else {
                    let mut den = 0.0;
                    for pos in lo..hi {
                        let w = self.spec.kernel.eval((self.xs[pos] - x) / self.h);
                        den += w;
                        for j in 0..d_y {
                            row[j] += w * m[pos * d_y + j];
                        }
                    }
                    // the point itself always carries weight k(0) > 0
                    row.iter_mut().for_each(|v| *v /= den);
                }
            }
        } else {
            for k in 0..n {
                let est = kernel_cond_mean(self.sample, self.model, theta, self.sample.x_row(k), &self.spec)
                    .expect("evaluation at a data point has positive weight");
                out[k * d_y..(k + 1) * d_y].copy_from_slice(&est);
            }
        }
        out
    }

    pub fn statistic(&self, theta: &[f64]) -> Result<f64> {
        self.model.check_theta(theta)?;
        let d_y = self.model.d_y();
        let est = self.estimates(theta);
        Ok(est.chunks_exact(d_y).map(|row| self.s.value(row)).fold(0.0, f64::max))
    }

    pub fn scaled(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.scale * self.statistic(theta)?)
    }
}

impl GridStatistic for KernelStat<'_> {
    fn tag(&self) -> EstimatorTag {
        EstimatorTag::Kernel
    }

    fn scaled(&self, theta: &[f64]) -> Result<f64> {
        KernelStat::scaled(self, theta)
    }

    fn monotone_rows(&self) -> Option<Monotonicity> {
        if self.s.is_separable_max() {
            self.model.monotonicity()
        } else {
            None
        }
    }

    fn component_exceeds(&self, theta: &[f64], j: usize, c: f64) -> Result<bool> {
        self.model.check_theta(theta)?;
        let d_y = self.model.d_y();
        let est = self.estimates(theta);
        let worst = est.chunks_exact(d_y).map(|row| -row[j]).fold(0.0, f64::max);
        Ok(self.scale * worst > c)
    }
}

/// Approximate standard deviation of `sqrt(n h^{d_x}) m_hat_j(theta, x)`:
/// the plug-in moment sd times `sqrt(R(k)^{d_x} / f)`, with `f` the uniform
/// density over the bounding box of the observed `X`. Multiplying a
/// studentized critical value by this gives one on the scale of the raw
/// kernel statistic. `thetas` is thinned to at most `max_thetas` points.
pub fn kernel_noise_scale(
    sample: &Sample,
    model: &MomentModel,
    spec: &KernelSpec,
    thetas: &[Vec<f64>],
    max_thetas: usize,
) -> Result<f64> {
    let stride = thetas.len().div_ceil(max_thetas.max(1)).max(1);
    let thinned: Vec<Vec<f64>> = thetas.iter().step_by(stride).cloned().collect();
    let sd = plugin_sd_scale(sample, model, &thinned)?;
    let d_x = sample.d_x();
    let mut volume = 1.0;
    for c in 0..d_x {
        let (lo, hi) = (0..sample.n())
            .map(|i| sample.x_row(i)[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        volume *= hi - lo;
    }
    if !(volume > 0.0 && volume.is_finite()) {
        return Err(Error::Invariant("regressor values have no spread".into()));
    }
    let r = spec.kernel.roughness().powi(d_x as i32);
    Ok(sd * (r * volume).sqrt())
}

/// `{theta : sqrt(n h^{d_x} / log n) T^kern(theta) <= c_n}`.
pub fn kernel_region(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    spec: &KernelSpec,
    s: &SFunction,
    c_n: f64,
) -> Result<ConfidenceRegion> {
    kernel_region_with(sample, model, grid, spec, s, c_n, SearchStrategy::Exhaustive)
}

pub fn kernel_region_with(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    spec: &KernelSpec,
    s: &SFunction,
    c_n: f64,
    strategy: SearchStrategy,
) -> Result<ConfidenceRegion> {
    grid.within(model.theta_box())?;
    let stat = KernelStat::new(sample, model, spec, *s)?;
    build_region(&stat, grid, c_n, strategy)
}
