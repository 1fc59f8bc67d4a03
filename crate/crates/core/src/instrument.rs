//! Nonnegative instrument functions `g(x)` and the families they are drawn from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Second-order kernels with compact support `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    #[default]
    Uniform,
    Epanechnikov,
    Triangular,
}

impl KernelId {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelId::Uniform => 0.5,
            KernelId::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelId::Triangular => 1.0 - a,
        }
    }

    /// `int k(u)^2 du`.
    pub fn roughness(self) -> f64 {
        match self {
            KernelId::Uniform => 0.5,
            KernelId::Epanechnikov => 0.6,
            KernelId::Triangular => 2.0 / 3.0,
        }
    }

    /// Product kernel over coordinates.
    pub fn eval_product(self, x: &[f64], center: &[f64], bandwidth: f64) -> f64 {
        x.iter()
            .zip(center)
            .map(|(xi, ci)| self.eval((xi - ci) / bandwidth))
            .product()
    }
}

/// A single instrument function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instrument {
    /// Indicator of the half-open box `lower < x <= upper` (componentwise).
    /// `lower` may hold `-inf`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `x -> k((x - center) / bandwidth)`, a product kernel when `d_x > 1`.
    KernelDilation {
        center: Vec<f64>,
        bandwidth: f64,
        kernel: KernelId,
    },
}

impl Instrument {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Instrument::Box {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Instrument::Box { lower, .. } => lower.len(),
            Instrument::KernelDilation { center, .. } => center.len(),
        }
    }

    /// Unchecked evaluation.
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Instrument::Box { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (s, t))| *s < *v && *v <= *t);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Instrument::KernelDilation {
                center,
                bandwidth,
                kernel,
            } => kernel.eval_product(x, center, *bandwidth),
        }
    }

    pub fn eval_instrument(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: "instrument argument",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.value(x))
    }
}

/// The class `G` of instruments over which the statistic takes its supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstrumentFamily {
    /// Every interval `(s, t]` with endpoints at data points or `-inf`
    /// (`d_x = 1`).
    AllDataIntervals,
    /// Every box whose corners sit at data coordinates (`d_x <= 2`). With
    /// `max_cuts` set, each axis keeps at most that many evenly spaced order
    /// statistics as candidate corners, which approximates the supremum.
    AllDataBoxes {
        #[serde(default)]
        max_cuts: Option<usize>,
    },
    /// Kernel dilations over a grid of centers and bandwidths.
    KernelDilations {
        centers: Vec<Vec<f64>>,
        bandwidths: Vec<f64>,
        #[serde(default)]
        kernel: KernelId,
    },
}

impl Default for InstrumentFamily {
    fn default() -> Self {
        InstrumentFamily::AllDataIntervals
    }
}

impl InstrumentFamily {
    pub fn is_indicator(&self) -> bool {
        !matches!(self, InstrumentFamily::KernelDilations { .. })
    }

    pub(crate) fn check(&self, d_x: usize) -> Result<()> {
        match self {
            InstrumentFamily::AllDataIntervals if d_x != 1 => Err(Error::config(
                "family",
                format!("all_data_intervals needs d_x = 1, got {d_x}"),
            )),
            InstrumentFamily::AllDataBoxes { .. } if d_x > 2 => Err(Error::config(
                "family",
                format!("all_data_boxes supports d_x <= 2, got {d_x}"),
            )),
            InstrumentFamily::AllDataBoxes { max_cuts: Some(c) } if *c < 1 => {
                Err(Error::config("family.max_cuts", "must be at least 1"))
            }
            InstrumentFamily::KernelDilations {
                centers,
                bandwidths,
                ..
            } => {
                if centers.is_empty() || bandwidths.is_empty() {
                    return Err(Error::config("family", "kernel_dilations is empty"));
                }
                if let Some(c) = centers.iter().find(|c| c.len() != d_x) {
                    return Err(Error::Dimension {
                        what: "kernel center",
                        expected: d_x,
                        got: c.len(),
                    });
                }
                if bandwidths.iter().any(|h| !(*h > 0.0)) {
                    return Err(Error::config("family.bandwidths", "must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Lists every instrument in the family for this sample. Data-driven
    /// families grow as `O(n^2)` (intervals) or `O(n^4)` (boxes).
    pub fn enumerate(&self, sample: &Sample) -> Result<Vec<Instrument>> {
        self.check(sample.d_x())?;
        match self {
            InstrumentFamily::AllDataIntervals => {
                let cuts = axis_cuts(sample, 0, None);
                Ok(interval_pairs(&cuts)
                    .map(|(s, t)| Instrument::interval(s, t))
                    .collect())
            }
            InstrumentFamily::AllDataBoxes { max_cuts } => {
                let per_axis: Vec<Vec<(f64, f64)>> = (0..sample.d_x())
                    .map(|k| interval_pairs(&axis_cuts(sample, k, *max_cuts)).collect())
                    .collect();
                let mut out = Vec::new();
                let mut idx = vec![0usize; per_axis.len()];
                if per_axis.iter().any(Vec::is_empty) {
                    return Ok(out);
                }
                loop {
                    let lower = idx.iter().zip(&per_axis).map(|(i, a)| a[*i].0).collect();
                    let upper = idx.iter().zip(&per_axis).map(|(i, a)| a[*i].1).collect();
                    out.push(Instrument::Box { lower, upper });
                    let mut k = 0;
                    loop {
                        if k == idx.len() {
                            return Ok(out);
                        }
                        idx[k] += 1;
                        if idx[k] < per_axis[k].len() {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                    }
                }
            }
            InstrumentFamily::KernelDilations {
                centers,
                bandwidths,
                kernel,
            } => Ok(centers
                .iter()
                .flat_map(|c| {
                    bandwidths.iter().map(move |h| Instrument::KernelDilation {
                        center: c.clone(),
                        bandwidth: *h,
                        kernel: *kernel,
                    })
                })
                .collect()),
        }
    }
}

/// Candidate cut points on one axis: `-inf` followed by the sorted distinct
/// data values, optionally thinned to `max_cuts` evenly spaced values (the
/// largest value is always kept).
pub(crate) fn axis_cuts(sample: &Sample, axis: usize, max_cuts: Option<usize>) -> Vec<f64> {
    let mut vals: Vec<f64> = (0..sample.n()).map(|i| sample.x_row(i)[axis]).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    if let Some(cap) = max_cuts {
        if vals.len() > cap {
            let m = vals.len();
            vals = (1..=cap).map(|k| vals[(k * m) / cap - 1]).collect();
        }
    }
    let mut cuts = Vec::with_capacity(vals.len() + 1);
    cuts.push(f64::NEG_INFINITY);
    cuts.extend(vals);
    cuts
}

fn interval_pairs(cuts: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..cuts.len()).flat_map(move |a| ((a + 1)..cuts.len()).map(move |b| (cuts[a], cuts[b])))
}
