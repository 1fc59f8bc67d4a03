//! Criterion functions `S: R^{d_Y} -> R_+` applied to studentized moments.

use serde::{Deserialize, Serialize};

/// `S(t)` is positive exactly when some `t_j < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SFunction {
    /// `max_j max(-t_j, 0)`, i.e. the sup norm of `t ∧ 0`.
    #[default]
    NegPartSupNorm,
    /// `(sum_j max(-t_j, 0)^p)^(1/p)`.
    NegPartPNorm { p: f64 },
}

impl SFunction {
    #[inline]
    pub fn value(&self, t: &[f64]) -> f64 {
        match *self {
            SFunction::NegPartSupNorm => t.iter().fold(0.0_f64, |acc, v| acc.max(-v)),
            SFunction::NegPartPNorm { p } => t
                .iter()
                .map(|v| (-v).max(0.0).powf(p))
                .sum::<f64>()
                .powf(1.0 / p),
        }
    }

    /// Constants `(K_1, K_2)` with `S(t) >= c => min_j t_j <= -c K_1` and
    /// `S(t) <= c => min_j t_j >= -c K_2` for vectors of length `d`.
    pub fn constants(&self, d: usize) -> (f64, f64) {
        match *self {
            SFunction::NegPartSupNorm => (1.0, 1.0),
            SFunction::NegPartPNorm { p } => ((d as f64).powf(-1.0 / p), 1.0),
        }
    }

    /// True when `S` is the maximum of per-component negative parts, so the
    /// supremum over instruments splits across components.
    pub fn is_separable_max(&self) -> bool {
        matches!(self, SFunction::NegPartSupNorm)
    }
}

pub fn s_value(s: &SFunction, t: &[f64]) -> f64 {
    s.value(t)
}
