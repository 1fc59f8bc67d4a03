//! Sample moments, truncated studentization and the weighted KS statistic
//!
//! ```text
//! T_n(theta) = sup_g S( mu_1 / (sigma_1 ∨ sigma_n), ..., mu_dY / (sigma_dY ∨ sigma_n) )
//! ```
//!
//! together with the tuning sequences `sigma_n` and `c_n`. The confidence
//! region keeps `theta` when `sqrt(n / log n) T_n(theta) <= c_n`.
//!
//! With `sigma_n -> 0` slowly, moments over small sets of `x` are divided by
//! their own (small) standard deviation, so localized violations of the
//! conditional inequalities are detected at close to the parametric rate.
//! Under the default rule `sigma_n = scale * sqrt(log n * log log n / n)`,
//! `sigma_n sqrt(n / log n) = scale * sqrt(log log n)`, which grows without
//! bound as the truncation condition requires.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alt::Omega;
use crate::error::{Error, Result};
use crate::instrument::{Instrument, InstrumentFamily};
use crate::model::{MomentModel, Monotonicity};
use crate::sample::{format_value, Sample};
use crate::scan::{self, Buckets};
use crate::sfunc::SFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SigmaRule {
    /// `scale * sqrt(log n * log log n / n)`.
    Standard { scale: f64 },
    Fixed { value: f64 },
}

impl Default for SigmaRule {
    fn default() -> Self {
        // half the standard deviation of a Bernoulli(1/2) draw
        SigmaRule::Standard { scale: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CriticalRule {
    /// `2 sqrt(log log n)`.
    #[default]
    Standard,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TuningPolicy {
    #[serde(default)]
    pub sigma_rule: SigmaRule,
    #[serde(default)]
    pub c_rule: CriticalRule,
}

impl TuningPolicy {
    pub fn with_sigma_scale(scale: f64) -> Self {
        Self {
            sigma_rule: SigmaRule::Standard { scale },
            c_rule: CriticalRule::Standard,
        }
    }
}

fn log_log(n: usize, key: &str) -> Result<f64> {
    if n < 3 {
        return Err(Error::config(key, format!("default rule needs n >= 3, got {n}")));
    }
    let nf = n as f64;
    Ok(nf.ln().ln())
}

/// Truncation point for the standard deviation weights.
pub fn sigma_n(policy: &TuningPolicy, n: usize) -> Result<f64> {
    match policy.sigma_rule {
        SigmaRule::Fixed { value } => {
            if value > 0.0 {
                Ok(value)
            } else {
                Err(Error::config("sigma_rule.value", "must be positive"))
            }
        }
        SigmaRule::Standard { scale } => {
            if !(scale > 0.0) {
                return Err(Error::config("sigma_rule.scale", "must be positive"));
            }
            let ll = log_log(n, "sigma_rule")?;
            let nf = n as f64;
            Ok(scale * (nf.ln() * ll / nf).sqrt())
        }
    }
}

pub(crate) fn critical_from_rule(rule: CriticalRule, n: usize) -> Result<f64> {
    match rule {
        CriticalRule::Fixed { value } => Ok(value),
        CriticalRule::Standard => Ok(2.0 * log_log(n, "c_rule")?.sqrt()),
    }
}

/// Critical value `c_n` compared with the scaled statistic.
pub fn critical_value(policy: &TuningPolicy, n: usize) -> Result<f64> {
    critical_from_rule(policy.c_rule, n)
}

/// `sqrt(n / log n)`.
pub fn rate_scale(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::SampleSize { need: 2, got: n });
    }
    let nf = n as f64;
    Ok((nf / nf.ln()).sqrt())
}

/// `mu_hat_j(theta, g)` and `sigma_hat_j(theta, g)` for every component.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
}

pub fn moment_pair(
    sample: &Sample,
    model: &MomentModel,
    theta: &[f64],
    g: &Instrument,
) -> Result<MomentSummary> {
    if sample.is_empty() {
        return Err(Error::SampleSize { need: 1, got: 0 });
    }
    model.validate_sample(sample)?;
    model.check_theta(theta)?;
    if g.dim() != sample.d_x() {
        return Err(Error::Dimension {
            what: "instrument",
            expected: sample.d_x(),
            got: g.dim(),
        });
    }
    let d_y = model.d_y();
    let mut s1 = vec![0.0; d_y];
    let mut s2 = vec![0.0; d_y];
    let mut m = vec![0.0; d_y];
    for i in 0..sample.n() {
        let gi = g.value(sample.x_row(i));
        if gi == 0.0 {
            continue;
        }
        model.eval_into(sample.x_row(i), sample.w_row(i), theta, &mut m);
        for j in 0..d_y {
            let v = m[j] * gi;
            s1[j] += v;
            s2[j] += v * v;
        }
    }
    let n = sample.n() as f64;
    let mu_hat: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let sigma_hat = s2
        .iter()
        .zip(&mu_hat)
        .map(|(s, mu)| (s / n - mu * mu).max(0.0).sqrt())
        .collect();
    Ok(MomentSummary { mu_hat, sigma_hat })
}

/// The instrument and component attaining the supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgMax {
    pub instrument: Instrument,
    /// Component with the smallest studentized moment at `instrument`.
    pub component: usize,
    /// Studentized (or weighted) moment vector at `instrument`.
    pub studentized: Vec<f64>,
}

impl ArgMax {
    pub fn studentized_min(&self) -> f64 {
        self.studentized[self.component]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatResult {
    pub t_value: f64,
    /// `t_value` times the estimator's rate scaling.
    pub scaled: f64,
    /// None when no instrument yields a negative moment (`t_value == 0`).
    pub argmax: Option<ArgMax>,
}

#[derive(Debug, Clone)]
enum Layout {
    Intervals(Buckets),
    Boxes(Buckets, Buckets),
    Explicit {
        instruments: Vec<Instrument>,
        // |G| x n, row-major
        g: Vec<f64>,
    },
}

/// How sample moments are normalized before `S` is applied.
#[derive(Debug, Clone)]
pub(crate) enum Weighting {
    Truncated { sigma_n: f64 },
    Bounded(Omega),
}

/// Shared evaluator for the weighted and bounded-weight KS statistics.
#[derive(Debug)]
pub(crate) struct KsEngine<'a> {
    sample: &'a Sample,
    model: &'a MomentModel,
    layout: Layout,
    s: SFunction,
    weighting: Weighting,
    scale: f64,
}

struct Sums {
    nb: usize,
    // component-major: [j * nb + k]
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl<'a> KsEngine<'a> {
    pub(crate) fn new(
        sample: &'a Sample,
        model: &'a MomentModel,
        family: &InstrumentFamily,
        s: SFunction,
        weighting: Weighting,
        scale: f64,
    ) -> Result<Self> {
        model.validate_sample(sample)?;
        family.check(sample.d_x())?;
        let layout = match family {
            InstrumentFamily::AllDataIntervals => Layout::Intervals(Buckets::new(sample, 0, None)),
            InstrumentFamily::AllDataBoxes { max_cuts } if sample.d_x() == 1 => {
                Layout::Intervals(Buckets::new(sample, 0, *max_cuts))
            }
            InstrumentFamily::AllDataBoxes { max_cuts } => Layout::Boxes(
                Buckets::new(sample, 0, *max_cuts),
                Buckets::new(sample, 1, *max_cuts),
            ),
            InstrumentFamily::KernelDilations { .. } => {
                let instruments = family.enumerate(sample)?;
                let mut g = Vec::with_capacity(instruments.len() * sample.n());
                for inst in &instruments {
                    g.extend((0..sample.n()).map(|i| inst.value(sample.x_row(i))));
                }
                Layout::Explicit { instruments, g }
            }
        };
        Ok(Self {
            sample,
            model,
            layout,
            s,
            weighting,
            scale,
        })
    }

    pub(crate) fn n(&self) -> usize {
        self.sample.n()
    }

    pub(crate) fn d_y(&self) -> usize {
        self.model.d_y()
    }

    /// Monotonicity usable for locating region rows by bisection: needs a
    /// separable `S`, a monotone model, and for truncated weights two-valued
    /// moments paired with indicator instruments.
    pub(crate) fn monotone_rows(&self) -> Option<Monotonicity> {
        let mono = self.model.monotonicity()?;
        if !self.s.is_separable_max() {
            return None;
        }
        let ok = match &self.weighting {
            Weighting::Truncated { .. } => {
                mono.two_valued && !matches!(self.layout, Layout::Explicit { .. })
            }
            Weighting::Bounded(omega) => matches!(omega, Omega::Unit),
        };
        ok.then_some(mono)
    }

    fn moments(&self, theta: &[f64]) -> Vec<f64> {
        let d_y = self.model.d_y();
        let mut out = vec![0.0; self.sample.n() * d_y];
        for (i, chunk) in out.chunks_exact_mut(d_y).enumerate() {
            self.model
                .eval_into(self.sample.x_row(i), self.sample.w_row(i), theta, chunk);
        }
        out
    }

    fn bucket_sums(&self, buckets: &Buckets, m: &[f64]) -> Sums {
        let d_y = self.model.d_y();
        let nb = buckets.len();
        let mut b1 = vec![0.0; nb * d_y];
        let mut b2 = vec![0.0; nb * d_y];
        for (i, &k) in buckets.bucket_of.iter().enumerate() {
            for j in 0..d_y {
                let v = m[i * d_y + j];
                b1[j * nb + k] += v;
                b2[j * nb + k] += v * v;
            }
        }
        Sums { nb, b1, b2 }
    }

    fn component_slices<'s>(&self, sums: &'s Sums, j: usize) -> (&'s [f64], &'s [f64]) {
        let nb = sums.nb;
        (&sums.b1[j * nb..(j + 1) * nb], &sums.b2[j * nb..(j + 1) * nb])
    }

    #[inline]
    fn criterion(
        &self,
        theta: &[f64],
        instrument: impl FnOnce() -> Instrument,
        j: usize,
        s1: f64,
        s2: f64,
    ) -> f64 {
        let n = self.sample.n() as f64;
        let mu = s1 / n;
        match &self.weighting {
            Weighting::Truncated { sigma_n } => {
                let sd = (s2 / n - mu * mu).max(0.0).sqrt();
                mu / sd.max(*sigma_n)
            }
            Weighting::Bounded(omega) => omega.weight(theta, instrument, j) * mu,
        }
    }

    fn finish(&self, t_value: f64, argmax: Option<ArgMax>) -> StatResult {
        StatResult {
            t_value,
            scaled: self.scale * t_value,
            argmax: if t_value > 0.0 { argmax } else { None },
        }
    }

    fn argmax_from(&self, instrument: Instrument, studentized: Vec<f64>) -> ArgMax {
        let component = studentized
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        ArgMax {
            instrument,
            component,
            studentized,
        }
    }

    fn interval(buckets: &Buckets, a: usize, b: usize) -> Instrument {
        Instrument::interval(buckets.cuts[a], buckets.cuts[b + 1])
    }

    pub(crate) fn evaluate(&self, theta: &[f64]) -> Result<StatResult> {
        self.model.check_theta(theta)?;
        let m = self.moments(theta);
        match &self.layout {
            Layout::Intervals(buckets) => Ok(self.eval_intervals(theta, buckets, &m)),
            Layout::Boxes(bx, by) => Ok(self.eval_boxes(theta, bx, by, &m)),
            Layout::Explicit { instruments, g } => Ok(self.eval_explicit(theta, instruments, g, &m)),
        }
    }

    fn studentized_over(&self, theta: &[f64], sums: &Sums, inst: &Instrument, a: usize, b: usize) -> Vec<f64> {
        (0..self.d_y())
            .map(|j| {
                let (b1, b2) = self.component_slices(sums, j);
                let s1: f64 = b1[a..=b].iter().sum();
                let s2: f64 = b2[a..=b].iter().sum();
                self.criterion(theta, || inst.clone(), j, s1, s2)
            })
            .collect()
    }

    fn eval_intervals(&self, theta: &[f64], buckets: &Buckets, m: &[f64]) -> StatResult {
        let sums = self.bucket_sums(buckets, m);
        let n = self.sample.n() as f64;
        let separable = self.s.is_separable_max();
        match (&self.weighting, separable) {
            (Weighting::Truncated { sigma_n }, true) => {
                let mut best = 0.0;
                let mut run = None;
                for j in 0..self.d_y() {
                    let (b1, b2) = self.component_slices(&sums, j);
                    let cb = scan::truncated_sup(b1, b2, n, *sigma_n);
                    if cb.value > best {
                        best = cb.value;
                        run = cb.run;
                    }
                }
                let argmax = run.map(|(a, b)| {
                    let inst = Self::interval(buckets, a, b);
                    let st = self.studentized_over(theta, &sums, &inst, a, b);
                    self.argmax_from(inst, st)
                });
                self.finish(best, argmax)
            }
            (Weighting::Bounded(Omega::Unit), true) => {
                let mut best = 0.0;
                let mut run = None;
                for j in 0..self.d_y() {
                    let (b1, _) = self.component_slices(&sums, j);
                    let (min_sum, r) = scan::min_run_sum(b1);
                    let v = -min_sum / n;
                    if v > best {
                        best = v;
                        run = r;
                    }
                }
                let argmax = run.map(|(a, b)| {
                    let inst = Self::interval(buckets, a, b);
                    let st = self.studentized_over(theta, &sums, &inst, a, b);
                    self.argmax_from(inst, st)
                });
                self.finish(best, argmax)
            }
            _ => {
                let d_y = self.d_y();
                let nb = sums.nb;
                let mut s1 = vec![0.0; d_y];
                let mut s2 = vec![0.0; d_y];
                let mut t = vec![0.0; d_y];
                let mut best = 0.0;
                let mut arg = None;
                for a in 0..nb {
                    s1.iter_mut().for_each(|v| *v = 0.0);
                    s2.iter_mut().for_each(|v| *v = 0.0);
                    for b in a..nb {
                        for j in 0..d_y {
                            s1[j] += sums.b1[j * nb + b];
                            s2[j] += sums.b2[j * nb + b];
                            t[j] = self.criterion(theta, || Self::interval(buckets, a, b), j, s1[j], s2[j]);
                        }
                        let v = self.s.value(&t);
                        if v > best {
                            best = v;
                            arg = Some((a, b, t.clone()));
                        }
                    }
                }
                let argmax = arg.map(|(a, b, t)| self.argmax_from(Self::interval(buckets, a, b), t));
                self.finish(best, argmax)
            }
        }
    }

    fn eval_boxes(&self, theta: &[f64], bx: &Buckets, by: &Buckets, m: &[f64]) -> StatResult {
        let d_y = self.d_y();
        let (nx, ny) = (bx.len(), by.len());
        // 2-d prefix sums, (nx + 1) x (ny + 1) per component
        let stride = ny + 1;
        let plane = (nx + 1) * stride;
        let mut p1 = vec![0.0; plane * d_y];
        let mut p2 = vec![0.0; plane * d_y];
        for i in 0..self.sample.n() {
            let (u, v) = (bx.bucket_of[i], by.bucket_of[i]);
            for j in 0..d_y {
                let val = m[i * d_y + j];
                p1[j * plane + (u + 1) * stride + v + 1] += val;
                p2[j * plane + (u + 1) * stride + v + 1] += val * val;
            }
        }
        for j in 0..d_y {
            for u in 1..=nx {
                for v in 1..=ny {
                    let idx = j * plane + u * stride + v;
                    let up = idx - stride;
                    p1[idx] += p1[up] + p1[idx - 1] - p1[up - 1];
                    p2[idx] += p2[up] + p2[idx - 1] - p2[up - 1];
                }
            }
        }
        let rect = |p: &[f64], j: usize, a1: usize, b1: usize, a2: usize, b2: usize| {
            let base = j * plane;
            p[base + (b1 + 1) * stride + b2 + 1] - p[base + a1 * stride + b2 + 1]
                - p[base + (b1 + 1) * stride + a2]
                + p[base + a1 * stride + a2]
        };
        let make = |a1: usize, b1: usize, a2: usize, b2: usize| Instrument::Box {
            lower: vec![bx.cuts[a1], by.cuts[a2]],
            upper: vec![bx.cuts[b1 + 1], by.cuts[b2 + 1]],
        };
        let mut t = vec![0.0; d_y];
        let mut best = 0.0;
        let mut arg = None;
        for a1 in 0..nx {
            for b1 in a1..nx {
                for a2 in 0..ny {
                    for b2 in a2..ny {
                        for (j, tj) in t.iter_mut().enumerate() {
                            let s1 = rect(&p1, j, a1, b1, a2, b2);
                            let s2 = rect(&p2, j, a1, b1, a2, b2);
                            *tj = self.criterion(theta, || make(a1, b1, a2, b2), j, s1, s2);
                        }
                        let v = self.s.value(&t);
                        if v > best {
                            best = v;
                            arg = Some(((a1, b1, a2, b2), t.clone()));
                        }
                    }
                }
            }
        }
        let argmax = arg.map(|((a1, b1, a2, b2), t)| self.argmax_from(make(a1, b1, a2, b2), t));
        self.finish(best, argmax)
    }

    fn eval_explicit(&self, theta: &[f64], instruments: &[Instrument], g: &[f64], m: &[f64]) -> StatResult {
        let d_y = self.d_y();
        let n = self.sample.n();
        let mut t = vec![0.0; d_y];
        let mut s1 = vec![0.0; d_y];
        let mut s2 = vec![0.0; d_y];
        let mut best = 0.0;
        let mut arg = None;
        for (k, inst) in instruments.iter().enumerate() {
            s1.iter_mut().for_each(|v| *v = 0.0);
            s2.iter_mut().for_each(|v| *v = 0.0);
            for (i, gi) in g[k * n..(k + 1) * n].iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                for j in 0..d_y {
                    let v = m[i * d_y + j] * gi;
                    s1[j] += v;
                    s2[j] += v * v;
                }
            }
            for j in 0..d_y {
                t[j] = self.criterion(theta, || inst.clone(), j, s1[j], s2[j]);
            }
            let v = self.s.value(&t);
            if v > best {
                best = v;
                arg = Some((k, t.clone()));
            }
        }
        let argmax = arg.map(|(k, t)| self.argmax_from(instruments[k].clone(), t));
        self.finish(best, argmax)
    }

    /// Whether component `j` alone pushes the scaled statistic above `c`.
    /// Only meaningful for separable `S`.
    pub(crate) fn component_exceeds(&self, theta: &[f64], j: usize, c: f64) -> Result<bool> {
        self.model.check_theta(theta)?;
        let thr = c / self.scale;
        if let (Layout::Intervals(buckets), Weighting::Truncated { sigma_n }) = (&self.layout, &self.weighting) {
            let m = self.moments(theta);
            let sums = self.bucket_sums(buckets, &m);
            let (b1, b2) = self.component_slices(&sums, j);
            return Ok(scan::truncated_exceeds(b1, b2, self.sample.n() as f64, *sigma_n, thr));
        }
        if let (Layout::Intervals(buckets), Weighting::Bounded(Omega::Unit)) = (&self.layout, &self.weighting) {
            let m = self.moments(theta);
            let sums = self.bucket_sums(buckets, &m);
            let (b1, _) = self.component_slices(&sums, j);
            let (min_sum, _) = scan::min_run_sum(b1);
            return Ok(-min_sum / self.sample.n() as f64 > thr);
        }
        // general layouts: evaluate the full statistic restricted to component j
        Ok(self.evaluate_component(theta, j)? > thr)
    }

    fn evaluate_component(&self, theta: &[f64], j: usize) -> Result<f64> {
        let m = self.moments(theta);
        let d_y = self.d_y();
        // zero out the other components so the separable max sees only j
        let masked: Vec<f64> = m
            .iter()
            .enumerate()
            .map(|(idx, v)| if idx % d_y == j { *v } else { 0.0 })
            .collect();
        let res = match &self.layout {
            Layout::Intervals(buckets) => self.eval_intervals(theta, buckets, &masked),
            Layout::Boxes(bx, by) => self.eval_boxes(theta, bx, by, &masked),
            Layout::Explicit { instruments, g } => self.eval_explicit(theta, instruments, g, &masked),
        };
        Ok(res.t_value)
    }
}

/// Weighted KS statistic with truncation point `sigma_n`, ready to be
/// evaluated at many parameter values.
#[derive(Debug)]
pub struct WeightedKs<'a> {
    pub(crate) engine: KsEngine<'a>,
    sigma_n: f64,
    c_n: f64,
}

impl<'a> WeightedKs<'a> {
    pub fn new(
        sample: &'a Sample,
        model: &'a MomentModel,
        family: &InstrumentFamily,
        s: SFunction,
        tuning: &TuningPolicy,
    ) -> Result<Self> {
        let n = sample.n();
        if n < 2 {
            return Err(Error::SampleSize { need: 2, got: n });
        }
        let sigma_n = sigma_n(tuning, n)?;
        let c_n = critical_value(tuning, n)?;
        let engine = KsEngine::new(
            sample,
            model,
            family,
            s,
            Weighting::Truncated { sigma_n },
            rate_scale(n)?,
        )?;
        Ok(Self {
            engine,
            sigma_n,
            c_n,
        })
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn critical_value(&self) -> f64 {
        self.c_n
    }

    pub fn statistic(&self, theta: &[f64]) -> Result<StatResult> {
        self.engine.evaluate(theta)
    }
}

pub fn ks_statistic(
    sample: &Sample,
    model: &MomentModel,
    theta: &[f64],
    family: &InstrumentFamily,
    s: &SFunction,
    tuning: &TuningPolicy,
) -> Result<StatResult> {
    WeightedKs::new(sample, model, family, *s, tuning)?.statistic(theta)
}

/// Largest sample standard deviation of any `m_j(W_i, theta)` over the grid.
/// A data-driven scale for `sigma_n`; returns 0 when the moments do not vary,
/// in which case callers should fall back to `y_bar`.
pub fn plugin_sd_scale(sample: &Sample, model: &MomentModel, thetas: &[Vec<f64>]) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::Empty("theta grid"));
    }
    if sample.is_empty() {
        return Err(Error::SampleSize { need: 1, got: 0 });
    }
    model.validate_sample(sample)?;
    let d_y = model.d_y();
    let n = sample.n() as f64;
    let mut m = vec![0.0; d_y];
    let mut best = 0.0_f64;
    for theta in thetas {
        model.check_theta(theta)?;
        let mut s1 = vec![0.0; d_y];
        let mut s2 = vec![0.0; d_y];
        for i in 0..sample.n() {
            model.eval_into(sample.x_row(i), sample.w_row(i), theta, &mut m);
            for j in 0..d_y {
                s1[j] += m[j];
                s2[j] += m[j] * m[j];
            }
        }
        for j in 0..d_y {
            let mu = s1[j] / n;
            best = best.max((s2[j] / n - mu * mu).max(0.0).sqrt());
        }
    }
    Ok(best)
}

/// Writes statistic traces: theta coordinates, `t_value`, `scaled`, the
/// argmax interval endpoints and the argmin component.
pub fn write_trace_csv<W: Write>(writer: W, rows: &[(Vec<f64>, StatResult)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = rows.first().map_or(0, |r| r.0.len());
    let mut header: Vec<String> = (1..=dim).map(|k| format!("theta{k}")).collect();
    header.extend(["t_value", "scaled", "argmax_s", "argmax_t", "argmin_j"].map(String::from));
    wtr.write_record(&header)?;
    for (theta, res) in rows {
        let mut rec: Vec<String> = theta.iter().map(|v| format_value(*v)).collect();
        rec.push(format_value(res.t_value));
        rec.push(format_value(res.scaled));
        match &res.argmax {
            Some(am) => {
                let (s, t) = match &am.instrument {
                    Instrument::Box { lower, upper } => (
                        lower.iter().map(|v| format_value(*v)).collect::<Vec<_>>().join(" "),
                        upper.iter().map(|v| format_value(*v)).collect::<Vec<_>>().join(" "),
                    ),
                    Instrument::KernelDilation { center, bandwidth, .. } => (
                        center.iter().map(|v| format_value(*v)).collect::<Vec<_>>().join(" "),
                        format_value(*bandwidth),
                    ),
                };
                rec.push(s);
                rec.push(t);
                rec.push(am.component.to_string());
            }
            None => rec.extend([String::new(), String::new(), String::new()]),
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
