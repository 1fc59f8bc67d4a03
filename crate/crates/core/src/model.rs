//! The moment map `(x, w, theta) -> m(w, theta)` and its parameter space.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sample::Sample;

/// How each moment component moves along one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `m_j` is nonincreasing in the axis coordinate for every observation.
    Decreasing,
    /// `m_j` is nondecreasing in the axis coordinate for every observation.
    Increasing,
}

/// Structural monotonicity of a moment function along a parameter axis.
///
/// When every component is monotone along `axis`, the violation measure of
/// each component is monotone as well, so confidence-region rows along that
/// axis are intervals and can be located by bisection. `two_valued` states
/// that each `m_j` takes at most two values; the studentized statistic over
/// indicator instruments is then monotone too.
#[derive(Debug, Clone, PartialEq)]
pub struct Monotonicity {
    pub axis: usize,
    pub directions: Vec<Direction>,
    pub two_valued: bool,
}

/// A user-supplied moment function. Implementations must be pure.
pub trait MomentFunction: Send + Sync + fmt::Debug {
    /// Writes `m(w, theta)` into `out` (length `d_y`). `x` is passed for
    /// models whose moments involve the regressors.
    fn eval(&self, x: &[f64], w: &[f64], theta: &[f64], out: &mut [f64]);

    /// Whether column `col` of `w` may hold `+-inf`.
    fn censorable(&self, _col: usize) -> bool {
        false
    }

    fn monotonicity(&self) -> Option<Monotonicity> {
        None
    }
}

/// A moment model: the evaluator plus its box-shaped parameter space `Theta`
/// and the bound `y_bar` on `|m_j|`.
#[derive(Clone)]
pub struct MomentModel {
    d_y: usize,
    d_x: usize,
    d_w: usize,
    theta_box: Vec<(f64, f64)>,
    y_bar: f64,
    func: Arc<dyn MomentFunction>,
}

impl fmt::Debug for MomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentModel")
            .field("d_y", &self.d_y)
            .field("d_x", &self.d_x)
            .field("d_w", &self.d_w)
            .field("theta_box", &self.theta_box)
            .field("y_bar", &self.y_bar)
            .field("func", &self.func)
            .finish()
    }
}

impl MomentModel {
    pub fn new(
        d_y: usize,
        d_x: usize,
        d_w: usize,
        theta_box: Vec<(f64, f64)>,
        y_bar: f64,
        func: Arc<dyn MomentFunction>,
    ) -> Result<Self> {
        if d_y == 0 {
            return Err(Error::config("d_y", "must be at least 1"));
        }
        if theta_box.is_empty() {
            return Err(Error::config("theta_box", "must have at least one axis"));
        }
        for (k, (lo, hi)) in theta_box.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::config(
                    format!("theta_box[{k}]"),
                    format!("invalid bounds [{lo}, {hi}]"),
                ));
            }
        }
        if !(y_bar > 0.0) {
            return Err(Error::config("y_bar", "must be positive"));
        }
        Ok(Self {
            d_y,
            d_x,
            d_w,
            theta_box,
            y_bar,
            func,
        })
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_w(&self) -> usize {
        self.d_w
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_box.len()
    }

    pub fn theta_box(&self) -> &[(f64, f64)] {
        &self.theta_box
    }

    pub fn y_bar(&self) -> f64 {
        self.y_bar
    }

    pub fn monotonicity(&self) -> Option<Monotonicity> {
        self.func.monotonicity()
    }

    pub fn censorable(&self, col: usize) -> bool {
        self.func.censorable(col)
    }

    /// Same model with a different parameter box.
    pub fn with_theta_box(&self, theta_box: Vec<(f64, f64)>) -> Result<Self> {
        if theta_box.len() != self.theta_box.len() {
            return Err(Error::Dimension {
                what: "theta_box",
                expected: self.theta_box.len(),
                got: theta_box.len(),
            });
        }
        Self::new(
            self.d_y,
            self.d_x,
            self.d_w,
            theta_box,
            self.y_bar,
            self.func.clone(),
        )
    }

    /// Unchecked evaluation used in hot loops.
    #[inline]
    pub fn eval_into(&self, x: &[f64], w: &[f64], theta: &[f64], out: &mut [f64]) {
        self.func.eval(x, w, theta, out);
    }

    /// Checked evaluation of `m(w, theta)`.
    pub fn eval_moment(&self, x: &[f64], w: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_x {
            return Err(Error::Dimension {
                what: "x row",
                expected: self.d_x,
                got: x.len(),
            });
        }
        if w.len() != self.d_w {
            return Err(Error::Dimension {
                what: "w row",
                expected: self.d_w,
                got: w.len(),
            });
        }
        if theta.len() != self.theta_dim() {
            return Err(Error::Dimension {
                what: "theta",
                expected: self.theta_dim(),
                got: theta.len(),
            });
        }
        let mut out = vec![0.0; self.d_y];
        self.func.eval(x, w, theta, &mut out);
        for (j, v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Invariant(format!("m_{j} is not finite ({v})")));
            }
            if v.abs() > self.y_bar * (1.0 + 1e-12) {
                return Err(Error::Invariant(format!(
                    "|m_{j}| = {} exceeds y_bar = {}",
                    v.abs(),
                    self.y_bar
                )));
            }
        }
        Ok(out)
    }

    /// Checks that a sample fits the model: dimensions match and infinities
    /// only appear in censorable columns.
    pub fn validate_sample(&self, sample: &Sample) -> Result<()> {
        if sample.d_x() != self.d_x {
            return Err(Error::Dimension {
                what: "sample d_x",
                expected: self.d_x,
                got: sample.d_x(),
            });
        }
        if sample.d_w() != self.d_w {
            return Err(Error::Dimension {
                what: "sample d_w",
                expected: self.d_w,
                got: sample.d_w(),
            });
        }
        for i in 0..sample.n() {
            for (c, v) in sample.w_row(i).iter().enumerate() {
                if v.is_infinite() && !self.censorable(c) {
                    return Err(Error::Domain {
                        row: i,
                        reason: format!("column w{} is not censorable but holds {v}", c + 1),
                    });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dim() {
            return Err(Error::Dimension {
                what: "theta",
                expected: self.theta_dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}
