//! Supremum scans over data intervals using bucket sums of `m_j g` and
//! `(m_j g)^2`.
//!
//! Observations are grouped into buckets of tied (or thinned) `x` values, so
//! every admissible interval is a contiguous run of buckets. All routines
//! work in "sum units": for an interval with sums `s1 = sum m`, `s2 = sum m^2`
//! over `n` observations, `mu = s1 / n` and `n^2 sigma^2 = n s2 - s1^2`.

use crate::sample::Sample;

/// Sorted cut points on one axis; bucket `k` covers `(cuts[k], cuts[k + 1]]`.
#[derive(Debug, Clone)]
pub(crate) struct Buckets {
    pub cuts: Vec<f64>,
    pub bucket_of: Vec<usize>,
}

impl Buckets {
    pub fn new(sample: &Sample, axis: usize, max_cuts: Option<usize>) -> Self {
        let cuts = crate::instrument::axis_cuts(sample, axis, max_cuts);
        let bucket_of = (0..sample.n())
            .map(|i| {
                let v = sample.x_row(i)[axis];
                // first cut >= v, minus the leading -inf
                cuts[1..].partition_point(|c| *c < v)
            })
            .collect();
        Self { cuts, bucket_of }
    }

    pub fn len(&self) -> usize {
        self.cuts.len() - 1
    }
}

/// Best interval for one component: `value` is the positive part of the
/// criterion, `run` the bucket range `[a, b]` attaining it (None if no
/// interval has a negative mean).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ComponentBest {
    pub value: f64,
    pub run: Option<(usize, usize)>,
}

fn prefix_and_suffix_min(b1: &[f64], prefix: &mut Vec<f64>, suffix_min: &mut Vec<f64>) {
    let nb = b1.len();
    prefix.clear();
    prefix.reserve(nb + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in b1 {
        acc += v;
        prefix.push(acc);
    }
    suffix_min.clear();
    suffix_min.resize(nb + 2, f64::INFINITY);
    for k in (0..=nb).rev() {
        suffix_min[k] = prefix[k].min(suffix_min[k + 1]);
    }
}

/// `sup_{[a,b]} -mu / max(sigma, sigma_n)` (positive part) for one component.
///
/// Starts are visited in order of their best achievable `-s1`, and a start is
/// abandoned once even the most negative remaining partial sum cannot beat the
/// incumbent when divided by the truncation floor.
pub(crate) fn truncated_sup(b1: &[f64], b2: &[f64], n: f64, sigma_n: f64) -> ComponentBest {
    let nb = b1.len();
    let mut prefix = Vec::new();
    let mut smin = Vec::new();
    prefix_and_suffix_min(b1, &mut prefix, &mut smin);
    let floor = n * sigma_n;
    let floor_sq = floor * floor;

    let mut starts: Vec<(f64, usize)> = (0..nb)
        .map(|a| (prefix[a] - smin[a + 1], a))
        .filter(|(ub, _)| *ub > 0.0)
        .collect();
    starts.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let mut best_sq = 0.0_f64;
    let mut best_val = 0.0_f64;
    let mut run = None;
    for (ub, a) in starts {
        if ub / floor <= best_val {
            break;
        }
        let pa = prefix[a];
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for b in a..nb {
            s1 += b1[b];
            s2 += b2[b];
            if s1 < 0.0 {
                let den = (n * s2 - s1 * s1).max(floor_sq);
                let num = s1 * s1;
                if num > best_sq * den {
                    best_sq = num / den;
                    best_val = -s1 / den.sqrt();
                    run = Some((a, b));
                }
            }
            if (pa - smin[b + 2]) / floor <= best_val {
                break;
            }
        }
    }
    ComponentBest {
        value: best_val,
        run,
    }
}

/// Whether some interval has `-mu / max(sigma, sigma_n) > thr`.
pub(crate) fn truncated_exceeds(b1: &[f64], b2: &[f64], n: f64, sigma_n: f64, thr: f64) -> bool {
    if thr < 0.0 {
        return true;
    }
    let nb = b1.len();
    let mut prefix = Vec::new();
    let mut smin = Vec::new();
    prefix_and_suffix_min(b1, &mut prefix, &mut smin);
    let floor = n * sigma_n;
    let floor_sq = floor * floor;
    let need = thr * floor;
    let thr_sq = thr * thr;
    for a in 0..nb {
        let pa = prefix[a];
        if pa - smin[a + 1] <= need {
            continue;
        }
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for b in a..nb {
            s1 += b1[b];
            s2 += b2[b];
            if s1 < 0.0 {
                let den = (n * s2 - s1 * s1).max(floor_sq);
                if s1 * s1 > thr_sq * den {
                    return true;
                }
            }
            if pa - smin[b + 2] <= need {
                break;
            }
        }
    }
    false
}

/// Most negative contiguous sum (Kadane). Returns `(min_sum, run)` with
/// `min_sum <= 0`; `run` is None when every sum is nonnegative.
pub(crate) fn min_run_sum(b1: &[f64]) -> (f64, Option<(usize, usize)>) {
    let mut best = 0.0;
    let mut run = None;
    let mut cur = 0.0;
    let mut start = 0;
    for (k, v) in b1.iter().enumerate() {
        if cur > 0.0 {
            cur = 0.0;
            start = k;
        }
        cur += v;
        if cur < best {
            best = cur;
            run = Some((start, k));
        }
    }
    (best, run)
}
