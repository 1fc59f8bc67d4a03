//! Confidence regions over a discretized parameter space, plus set geometry
//! (Hausdorff distance, coordinate projections).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::InstrumentFamily;
use crate::ksstat::{TuningPolicy, WeightedKs};
use crate::model::{Direction, MomentModel, Monotonicity};
use crate::sample::{format_value, Sample};
use crate::sfunc::SFunction;

/// Cartesian grid over `Theta`; axis 0 varies slowest in the flat index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    axes: Vec<Vec<f64>>,
}

impl ThetaGrid {
    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Empty("theta grid axes"));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.is_empty() {
                return Err(Error::config(format!("grid.axes[{k}]"), "axis has no points"));
            }
            if ax.iter().any(|v| !v.is_finite()) || ax.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(
                    format!("grid.axes[{k}]"),
                    "breakpoints must be finite and strictly increasing",
                ));
            }
        }
        Ok(Self { axes })
    }

    /// Uniform grid with spacing `pitch` covering each `[lo, hi]`; the upper
    /// end is included when it falls on the lattice.
    pub fn uniform(bounds: &[(f64, f64)], pitch: f64) -> Result<Self> {
        if !(pitch > 0.0) {
            return Err(Error::config("grid.pitch", "must be positive"));
        }
        let axes = bounds
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::config(format!("grid.bounds[{k}]"), "invalid bounds"));
                }
                let steps = ((hi - lo) / pitch + 1e-9).floor() as usize;
                Ok((0..=steps).map(|i| round12(lo + i as f64 * pitch)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_axes(axes)
    }

    /// Grid restricted to the model's parameter box.
    pub fn within(&self, theta_box: &[(f64, f64)]) -> Result<()> {
        if theta_box.len() != self.dim() {
            return Err(Error::Dimension {
                what: "grid dimension",
                expected: theta_box.len(),
                got: self.dim(),
            });
        }
        for (k, (ax, (lo, hi))) in self.axes.iter().zip(theta_box).enumerate() {
            if ax[0] < lo - 1e-12 || ax[ax.len() - 1] > hi + 1e-12 {
                return Err(Error::config(
                    format!("grid.axes[{k}]"),
                    format!("breakpoints leave theta_box [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.axes[k + 1].len();
        }
        strides
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            let len = self.axes[k].len();
            out[k] = idx % len;
            idx /= len;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .zip(&self.axes)
            .map(|(i, ax)| ax[*i])
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Largest distance from any point of the grid's bounding box to the
    /// nearest grid point.
    pub fn half_diagonal(&self) -> f64 {
        self.axes
            .iter()
            .map(|ax| {
                let gap = ax.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                (gap / 2.0).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Finite point set in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let mut set = Self::new(dim);
        for p in points {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::Dimension {
                what: "point",
                expected: self.dim,
                got: p.len(),
            });
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetDistanceReport {
    pub d_h: f64,
    pub directed_ab: f64,
    pub directed_ba: f64,
    /// Exactly one of the two sets was empty (`d_h` is `+inf`).
    pub one_empty: bool,
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sup_{a in A} inf_{b in B} |a - b|` with early exit once a point of `A`
/// is known to be closer to `B` than the running maximum.
fn directed(a: &PointSet, b: &PointSet) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if b.is_empty() {
        return f64::INFINITY;
    }
    let mut cmax = 0.0_f64;
    for p in a.iter() {
        let mut cmin = f64::INFINITY;
        for q in b.iter() {
            let d = dist_sq(p, q);
            if d < cmin {
                cmin = d;
                if cmin <= cmax {
                    break;
                }
            }
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax.sqrt()
}

/// Euclidean Hausdorff distance. Empty against nonempty is `+inf`; two empty
/// sets are at distance 0.
pub fn hausdorff(a: &PointSet, b: &PointSet) -> SetDistanceReport {
    let directed_ab = directed(a, b);
    let directed_ba = directed(b, a);
    SetDistanceReport {
        d_h: directed_ab.max(directed_ba),
        directed_ab,
        directed_ba,
        one_empty: a.is_empty() != b.is_empty(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    WeightedKs,
    BoundedKs,
    Kernel,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::WeightedKs => "weighted_ks",
            EstimatorTag::BoundedKs => "bounded_ks",
            EstimatorTag::Kernel => "kernel",
        }
    }
}

/// How grid membership is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Evaluate the statistic at every grid point.
    #[default]
    Exhaustive,
    /// When the statistic is monotone along an axis, locate the two ends of
    /// each grid row by bisection; falls back to exhaustive otherwise. Only
    /// membership is produced, `stat` entries stay `None`.
    Auto,
}

/// A statistic that can be inverted over a grid.
pub(crate) trait GridStatistic: Sync {
    fn tag(&self) -> EstimatorTag;
    fn scaled(&self, theta: &[f64]) -> Result<f64>;
    fn monotone_rows(&self) -> Option<Monotonicity>;
    fn component_exceeds(&self, theta: &[f64], j: usize, c: f64) -> Result<bool>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub grid: ThetaGrid,
    pub member: Vec<bool>,
    /// Scaled statistic per grid point, when it was evaluated.
    pub stat: Vec<Option<f64>>,
    pub c_used: f64,
    pub estimator: EstimatorTag,
}

/// Coordinate projection of a grid set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub values: Vec<f64>,
    pub hull: Option<(f64, f64)>,
}

impl ConfidenceRegion {
    pub fn count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn members(&self) -> PointSet {
        let mut set = PointSet::new(self.grid.dim());
        for (i, _) in self.member.iter().enumerate().filter(|(_, m)| **m) {
            set.coords.extend(self.grid.point(i));
        }
        set
    }

    pub fn project(&self, axis: usize) -> Result<Projection> {
        project_points(&self.members(), axis)
    }

    /// Whether every point flagged in `other` (same grid) is a member.
    pub fn contains_all(&self, other: &[bool]) -> bool {
        self.member.len() == other.len() && self.member.iter().zip(other).all(|(m, o)| *m || !*o)
    }

    /// Whether any member sits on the outer boundary of the grid.
    pub fn touches_grid_edge(&self) -> bool {
        self.member.iter().enumerate().any(|(i, m)| {
            *m && self
                .grid
                .multi_index(i)
                .iter()
                .zip(self.grid.axes())
                .any(|(k, ax)| ax.len() > 1 && (*k == 0 || *k == ax.len() - 1))
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_regions_csv(writer, &[self])
    }

    pub fn summary(&self) -> Result<RegionSummary> {
        let hulls = (0..self.grid.dim())
            .map(|k| self.project(k).map(|p| p.hull))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionSummary {
            estimator: self.estimator,
            c_used: self.c_used,
            grid_points: self.grid.len(),
            members: self.count(),
            hulls,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub estimator: EstimatorTag,
    pub c_used: f64,
    pub grid_points: usize,
    pub members: usize,
    pub hulls: Vec<Option<(f64, f64)>>,
}

/// CSV with an estimator tag column, theta coordinates, the scaled statistic
/// (blank when not evaluated) and the membership flag.
pub fn write_regions_csv<W: Write>(writer: W, regions: &[&ConfidenceRegion]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = regions.first().map_or(0, |r| r.grid.dim());
    let mut header = vec!["estimator".to_string()];
    header.extend((1..=dim).map(|k| format!("theta{k}")));
    header.extend(["stat".to_string(), "member".to_string()]);
    wtr.write_record(&header)?;
    for region in regions {
        for i in 0..region.grid.len() {
            let mut rec = vec![region.estimator.as_str().to_string()];
            rec.extend(region.grid.point(i).iter().map(|v| format_value(*v)));
            rec.push(region.stat[i].map(format_value).unwrap_or_default());
            rec.push(u8::from(region.member[i]).to_string());
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn project_points(set: &PointSet, axis: usize) -> Result<Projection> {
    if axis >= set.dim() && !set.is_empty() {
        return Err(Error::Dimension {
            what: "projection axis",
            expected: set.dim(),
            got: axis,
        });
    }
    let mut values: Vec<f64> = set.iter().map(|p| p[axis]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let hull = match (values.first(), values.last()) {
        (Some(lo), Some(hi)) => Some((*lo, *hi)),
        _ => None,
    };
    Ok(Projection { values, hull })
}

pub fn project(region: &ConfidenceRegion, axis: usize) -> Result<Projection> {
    if axis >= region.grid.dim() {
        return Err(Error::Dimension {
            what: "projection axis",
            expected: region.grid.dim(),
            got: axis,
        });
    }
    region.project(axis)
}

/// First index in `0..len` where the monotone predicate turns true (or `len`),
/// searching outward from `guess` by doubling steps and then bisecting.
fn first_true(len: usize, guess: usize, mut pred: impl FnMut(usize) -> Result<bool>) -> Result<usize> {
    if len == 0 {
        return Ok(0);
    }
    let g = guess.min(len - 1);
    // invariant: pred(lo - 1) false (or lo == 0), pred(hi) true (or hi == len)
    let (mut lo, mut hi);
    if pred(g)? {
        hi = g;
        let mut step = 1;
        loop {
            if step > hi {
                lo = 0;
                break;
            }
            let probe = hi - step;
            if pred(probe)? {
                hi = probe;
                step *= 2;
            } else {
                lo = probe + 1;
                break;
            }
        }
    } else {
        lo = g + 1;
        let mut step = 1;
        loop {
            let probe = g + step;
            if probe >= len {
                hi = len;
                break;
            }
            if pred(probe)? {
                hi = probe;
                break;
            }
            lo = probe + 1;
            step *= 2;
        }
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

fn exhaustive_region(
    stat: &dyn GridStatistic,
    grid: &ThetaGrid,
    c: f64,
) -> Result<(Vec<bool>, Vec<Option<f64>>)> {
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| stat.scaled(&grid.point(i)))
        .collect::<Result<Vec<f64>>>()?;
    let member = values.iter().map(|v| *v <= c).collect();
    Ok((member, values.into_iter().map(Some).collect()))
}

fn monotone_region(
    stat: &dyn GridStatistic,
    grid: &ThetaGrid,
    c: f64,
    mono: &Monotonicity,
) -> Result<Vec<bool>> {
    let axis = mono.axis;
    let strides = grid.strides();
    let line_len = grid.axes()[axis].len();
    let stride = strides[axis];
    // one row per combination of the other coordinates
    let row_count = grid.len() / line_len;
    let row_starts: Vec<usize> = (0..grid.len())
        .filter(|i| (i / stride) % line_len == 0)
        .collect();
    debug_assert_eq!(row_starts.len(), row_count);

    const CHUNK: usize = 8;
    let ranges = row_starts
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut guesses = vec![line_len / 2; mono.directions.len()];
            let mut out = Vec::with_capacity(chunk.len());
            for &start in chunk {
                let mut base = grid.point(start);
                let mut lo = 0usize;
                let mut hi = line_len;
                for (j, dir) in mono.directions.iter().enumerate() {
                    if lo >= hi {
                        break;
                    }
                    let mut exceeds = |k: usize| -> Result<bool> {
                        base[axis] = grid.axes()[axis][k];
                        stat.component_exceeds(&base, j, c)
                    };
                    // one probe at the far end of the current range settles
                    // whether this component can cut it at all
                    match dir {
                        Direction::Decreasing if hi < line_len && !exceeds(hi - 1)? => continue,
                        Direction::Increasing if lo > 0 && !exceeds(lo)? => continue,
                        Direction::Increasing if hi < line_len && exceeds(hi - 1)? => {
                            lo = hi;
                            break;
                        }
                        _ => {}
                    }
                    match dir {
                        // violation grows with the coordinate: passing set is a prefix
                        Direction::Decreasing => {
                            let f = first_true(line_len, guesses[j], &mut exceeds)?;
                            guesses[j] = f;
                            hi = hi.min(f);
                        }
                        Direction::Increasing => {
                            let g = first_true(line_len, guesses[j], |k| exceeds(k).map(|e| !e))?;
                            guesses[j] = g;
                            lo = lo.max(g);
                        }
                    }
                }
                out.push((start, lo, hi));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut member = vec![false; grid.len()];
    for (start, lo, hi) in ranges.into_iter().flatten() {
        for k in lo..hi {
            member[start + k * stride] = true;
        }
    }
    Ok(member)
}

pub(crate) fn build_region(
    stat: &dyn GridStatistic,
    grid: &ThetaGrid,
    c: f64,
    strategy: SearchStrategy,
) -> Result<ConfidenceRegion> {
    if grid.is_empty() {
        return Err(Error::Empty("theta grid"));
    }
    let mono = match strategy {
        SearchStrategy::Auto => stat.monotone_rows(),
        SearchStrategy::Exhaustive => None,
    };
    let (member, values) = match mono {
        Some(m) if m.axis < grid.dim() => (monotone_region(stat, grid, c, &m)?, vec![None; grid.len()]),
        _ => exhaustive_region(stat, grid, c)?,
    };
    Ok(ConfidenceRegion {
        grid: grid.clone(),
        member,
        stat: values,
        c_used: c,
        estimator: stat.tag(),
    })
}

impl GridStatistic for WeightedKs<'_> {
    fn tag(&self) -> EstimatorTag {
        EstimatorTag::WeightedKs
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

/// `{theta in grid : sqrt(n / log n) T_n(theta) <= c_n}`, evaluated at every
/// grid point.
pub fn confidence_region(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    family: &InstrumentFamily,
    s: &SFunction,
    tuning: &TuningPolicy,
) -> Result<ConfidenceRegion> {
    confidence_region_with(sample, model, grid, family, s, tuning, SearchStrategy::Exhaustive)
}

pub fn confidence_region_with(
    sample: &Sample,
    model: &MomentModel,
    grid: &ThetaGrid,
    family: &InstrumentFamily,
    s: &SFunction,
    tuning: &TuningPolicy,
    strategy: SearchStrategy,
) -> Result<ConfidenceRegion> {
    grid.within(model.theta_box())?;
    let ks = WeightedKs::new(sample, model, family, *s, tuning)?;
    let c = ks.critical_value();
    build_region(&ks, grid, c, strategy)
}
