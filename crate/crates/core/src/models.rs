//! Bundled moment models: one-sided and interval regression, their quantile
//! versions, and the selection model for a partially observed mean, plus the
//! monotone reparameterizations of `X` used for identification at the
//! boundary of the support.
//!
//! Regression kinds use `theta = (intercept, slopes...)` and the line
//! `theta_1 + x' theta_{-1}`. The `w` layout is `[W^H]` for one-sided kinds
//! and `[W^L, W^H]` for interval kinds and the selection model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, MomentFunction, MomentModel, Monotonicity};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    OneSidedRegression,
    IntervalRegression,
    OneSidedQuantile { tau: f64 },
    IntervalQuantile { tau: f64 },
    Selection { y_lower: f64, y_upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default = "one")]
    pub d_x: usize,
    pub theta_box: Vec<(f64, f64)>,
    /// Bound on `|W|` for mean kinds; `y_bar` is infinite when absent.
    #[serde(default)]
    pub w_bound: Option<f64>,
    /// Bound on `|x_k|` for mean kinds.
    #[serde(default)]
    pub x_bound: Option<f64>,
    /// Applied to `X` before estimation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<BoundaryTransform>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn new(kind: ModelKind, d_x: usize, theta_box: Vec<(f64, f64)>) -> Self {
        Self {
            kind,
            d_x,
            theta_box,
            w_bound: None,
            x_bound: None,
            transform: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::OneSidedQuantile { tau } | ModelKind::IntervalQuantile { tau } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::config("tau", format!("must lie in (0, 1), got {tau}")));
                }
            }
            ModelKind::Selection { y_lower, y_upper } => {
                if !(y_lower.is_finite() && y_upper.is_finite() && y_lower < y_upper) {
                    return Err(Error::config(
                        "y_lower",
                        format!("need finite y_lower < y_upper, got [{y_lower}, {y_upper}]"),
                    ));
                }
            }
            _ => {}
        }
        if self.d_x == 0 {
            return Err(Error::config("d_x", "must be at least 1"));
        }
        let expected = self.theta_dim();
        if self.theta_box.len() != expected {
            return Err(Error::config(
                "theta_box",
                format!("expected {expected} axes, got {}", self.theta_box.len()),
            ));
        }
        if let Some(t) = &self.transform {
            t.check(self.d_x)?;
        }
        for (k, (lo, hi)) in self.theta_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) && self.is_mean_kind() {
                return Err(Error::config(
                    format!("theta_box[{k}]"),
                    "mean models need a bounded parameter box",
                ));
            }
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::config(format!("theta_box[{k}]"), "invalid bounds"));
            }
        }
        Ok(())
    }

    fn is_mean_kind(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::OneSidedRegression | ModelKind::IntervalRegression | ModelKind::Selection { .. }
        )
    }

    pub fn theta_dim(&self) -> usize {
        match self.kind {
            ModelKind::Selection { .. } => 1,
            _ => 1 + self.d_x,
        }
    }

    pub fn d_w(&self) -> usize {
        match self.kind {
            ModelKind::OneSidedRegression | ModelKind::OneSidedQuantile { .. } => 1,
            _ => 2,
        }
    }

    pub fn d_y(&self) -> usize {
        match self.kind {
            ModelKind::OneSidedRegression | ModelKind::OneSidedQuantile { .. } => 1,
            _ => 2,
        }
    }

    fn y_bar(&self) -> f64 {
        match self.kind {
            ModelKind::OneSidedQuantile { tau } | ModelKind::IntervalQuantile { tau } => tau.max(1.0 - tau),
            ModelKind::Selection { y_lower, y_upper } => {
                let (lo, hi) = self.theta_box[0];
                [lo - y_lower, hi - y_lower, y_upper - lo, y_upper - hi]
                    .iter()
                    .fold(0.0_f64, |a, v| a.max(v.abs()))
            }
            ModelKind::OneSidedRegression | ModelKind::IntervalRegression => {
                match (self.w_bound, self.x_bound) {
                    (Some(wb), Some(xb)) => {
                        let abs_max = |(lo, hi): (f64, f64)| lo.abs().max(hi.abs());
                        let slopes: f64 = self.theta_box[1..].iter().map(|b| abs_max(*b)).sum();
                        wb + abs_max(self.theta_box[0]) + xb * slopes
                    }
                    _ => f64::INFINITY,
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct RegressionMoments {
    kind: ModelKind,
}

#[inline]
fn line(x: &[f64], theta: &[f64]) -> f64 {
    theta[0] + x.iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>()
}

#[inline]
fn indicator(cond: bool) -> f64 {
    if cond {
        1.0
    } else {
        0.0
    }
}

impl MomentFunction for RegressionMoments {
    #[inline]
    fn eval(&self, x: &[f64], w: &[f64], theta: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::OneSidedRegression => out[0] = w[0] - line(x, theta),
            ModelKind::IntervalRegression => {
                let l = line(x, theta);
                out[0] = w[1] - l;
                out[1] = l - w[0];
            }
            ModelKind::OneSidedQuantile { tau } => out[0] = tau - indicator(w[0] <= line(x, theta)),
            ModelKind::IntervalQuantile { tau } => {
                let l = line(x, theta);
                out[0] = tau - indicator(w[1] <= l);
                out[1] = indicator(w[0] <= l) - tau;
            }
            ModelKind::Selection { .. } => {
                out[0] = theta[0] - w[0];
                out[1] = w[1] - theta[0];
            }
        }
    }

    fn censorable(&self, _col: usize) -> bool {
        matches!(
            self.kind,
            ModelKind::OneSidedQuantile { .. } | ModelKind::IntervalQuantile { .. }
        )
    }

    fn monotonicity(&self) -> Option<Monotonicity> {
        use Direction::*;
        let (directions, two_valued) = match self.kind {
            ModelKind::OneSidedRegression => (vec![Decreasing], false),
            ModelKind::IntervalRegression => (vec![Decreasing, Increasing], false),
            ModelKind::OneSidedQuantile { .. } => (vec![Decreasing], true),
            ModelKind::IntervalQuantile { .. } => (vec![Decreasing, Increasing], true),
            ModelKind::Selection { .. } => (vec![Increasing, Decreasing], false),
        };
        Some(Monotonicity {
            axis: 0,
            directions,
            two_valued,
        })
    }
}

pub fn build_model(spec: &ModelSpec) -> Result<MomentModel> {
    spec.validate()?;
    MomentModel::new(
        spec.d_y(),
        spec.d_x,
        spec.d_w(),
        spec.theta_box.clone(),
        spec.y_bar(),
        Arc::new(RegressionMoments { kind: spec.kind }),
    )
}

/// Builds the `[W^L, W^H]` sample for the selection model from outcomes `y`
/// and participation flags `d`. Observed outcomes must lie in
/// `[y_lower, y_upper]`.
pub fn selection_sample(x: Vec<f64>, d_x: usize, y: &[f64], d: &[bool], y_lower: f64, y_upper: f64) -> Result<Sample> {
    if y.len() != d.len() {
        return Err(Error::Dimension {
            what: "participation flags",
            expected: y.len(),
            got: d.len(),
        });
    }
    let mut w = Vec::with_capacity(2 * y.len());
    for (i, (yi, di)) in y.iter().zip(d).enumerate() {
        if *di {
            if !(*yi >= y_lower && *yi <= y_upper) {
                return Err(Error::Domain {
                    row: i,
                    reason: format!("outcome {yi} outside [{y_lower}, {y_upper}]"),
                });
            }
            w.extend([*yi, *yi]);
        } else {
            w.extend([y_lower, y_upper]);
        }
    }
    Sample::new(x, w, d_x, 2)
}

/// Monotone reparameterization of each coordinate of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryTransform {
    /// `x -> x0 - (x0 - x)^(phi_x + 1)` for `x0 - 1 < x < x0`, identity
    /// elsewhere. The window width 1 keeps the map continuous at `x0 - 1`.
    FiniteSupport { x0: Vec<f64>, phi_x: f64 },
    /// `x -> k_x + 1 - 1 / (x - k_x + 1)` for `x > k_x`, identity elsewhere.
    AtInfinity { k_x: f64, phi_x: f64 },
}

impl BoundaryTransform {
    fn check(&self, d_x: usize) -> Result<()> {
        match self {
            BoundaryTransform::FiniteSupport { x0, phi_x } => {
                if x0.len() != d_x {
                    return Err(Error::Dimension {
                        what: "transform x0",
                        expected: d_x,
                        got: x0.len(),
                    });
                }
                if !(*phi_x > -1.0) {
                    return Err(Error::config("phi_x", "finite-support transform needs phi_x > -1"));
                }
            }
            BoundaryTransform::AtInfinity { k_x, phi_x } => {
                if !(*phi_x > 1.0) {
                    return Err(Error::config("phi_x", "transform at infinity needs phi_x > 1"));
                }
                if !k_x.is_finite() {
                    return Err(Error::config("k_x", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Transforms one coordinate. Returns None outside the transform's domain.
    pub fn map(&self, k: usize, x: f64) -> Option<f64> {
        match self {
            BoundaryTransform::FiniteSupport { x0, phi_x } => {
                let c = x0[k];
                if x > c - 1.0 && x < c {
                    Some(c - (c - x).powf(phi_x + 1.0))
                } else {
                    Some(x)
                }
            }
            BoundaryTransform::AtInfinity { k_x, .. } => {
                if x > *k_x {
                    Some(k_x + 1.0 - 1.0 / (x - k_x + 1.0))
                } else if x > k_x - 1.0 {
                    Some(x)
                } else {
                    None
                }
            }
        }
    }

    pub fn inverse(&self, k: usize, v: f64) -> Option<f64> {
        match self {
            BoundaryTransform::FiniteSupport { x0, phi_x } => {
                let c = x0[k];
                if v > c - 1.0 && v < c {
                    Some(c - (c - v).powf(1.0 / (phi_x + 1.0)))
                } else {
                    Some(v)
                }
            }
            BoundaryTransform::AtInfinity { k_x, .. } => {
                if v > *k_x && v < k_x + 1.0 {
                    Some(k_x - 1.0 + 1.0 / (k_x + 1.0 - v))
                } else if v > k_x - 1.0 && v <= *k_x {
                    Some(v)
                } else {
                    None
                }
            }
        }
    }
}

/// Applies the transform to every `X` coordinate; `W` is left unchanged.
/// The transform at infinity needs every coordinate above `k_x - 1`, where
/// `1 / (x - k_x + 1)` has its pole.
pub fn apply_boundary_transform(sample: &Sample, t: &BoundaryTransform) -> Result<Sample> {
    t.check(sample.d_x())?;
    let d_x = sample.d_x();
    let mut x = Vec::with_capacity(sample.x().len());
    for i in 0..sample.n() {
        for (k, v) in sample.x_row(i).iter().enumerate() {
            let mapped = t.map(k, *v).ok_or_else(|| Error::Domain {
                row: i,
                reason: format!("x{} = {v} is outside the transform domain", k + 1),
            })?;
            x.push(mapped);
        }
    }
    debug_assert_eq!(x.len(), sample.n() * d_x);
    sample.with_x(x)
}
