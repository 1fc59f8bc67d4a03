//! Brute-force oracles and sample generators shared by the integration
//! tests and the acceptance suite.
#![allow(dead_code)]

use momentset::models::{build_model, ModelKind, ModelSpec};
use momentset::regions::PointSet;
use momentset::{MomentModel, Sample, SFunction};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn interval_regression() -> MomentModel {
    build_model(&ModelSpec::new(ModelKind::IntervalRegression, 1, vec![(-5.0, 5.0), (-5.0, 5.0)])).unwrap()
}

pub fn one_sided_regression() -> MomentModel {
    build_model(&ModelSpec::new(ModelKind::OneSidedRegression, 1, vec![(-50.0, 50.0), (-50.0, 50.0)])).unwrap()
}

/// Interval-outcome sample; with `ties`, x is rounded to a coarse lattice.
pub fn interval_sample(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Sample {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let mut xi: f64 = rng.random_range(-2.0..2.0);
        if ties {
            xi = (xi * 2.0).round() / 2.0;
        }
        let lo = 0.5 * xi + rng.random_range(-1.5..0.5);
        let width: f64 = rng.random_range(0.0..2.0);
        x.push(xi);
        w.extend([lo, lo + width]);
    }
    Sample::new(x, w, 1, 2).unwrap()
}

/// Exhaustive KS statistic over every interval `(s, t]` with `s` in
/// `{-inf} U {x_i}` and `t` in `{x_i}`, mean and variance by two passes.
pub fn brute_ks(sample: &Sample, model: &MomentModel, theta: &[f64], s: &SFunction, sigma_n: f64) -> f64 {
    let n = sample.n();
    let d_y = model.d_y();
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| model.eval_moment(sample.x_row(i), sample.w_row(i), theta).unwrap())
        .collect();
    let xs: Vec<f64> = (0..n).map(|i| sample.x_row(i)[0]).collect();
    let mut lowers = vec![f64::NEG_INFINITY];
    lowers.extend(&xs);
    let mut best = 0.0_f64;
    for &lo in &lowers {
        for &hi in &xs {
            if !(lo < hi) {
                continue;
            }
            let mut t = vec![0.0; d_y];
            for (j, tj) in t.iter_mut().enumerate() {
                let vals: Vec<f64> = (0..n)
                    .map(|i| if lo < xs[i] && xs[i] <= hi { m[i][j] } else { 0.0 })
                    .collect();
                let mu = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
                *tj = mu / var.sqrt().max(sigma_n);
            }
            best = best.max(s.value(&t));
        }
    }
    best
}

pub fn brute_hausdorff(a: &PointSet, b: &PointSet) -> f64 {
    let d = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let dir = |a: &PointSet, b: &PointSet| {
        a.iter()
            .map(|p| b.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    dir(a, b).max(dir(b, a))
}

/// Random subset of a `k x k` lattice with pitch `0.05`, each point kept
/// with probability `keep`.
pub fn random_grid_set(rng: &mut ChaCha8Rng, k: usize, keep: f64) -> PointSet {
    let mut set = PointSet::new(2);
    for i in 0..k {
        for j in 0..k {
            if rng.random::<f64>() < keep {
                set.push(&[i as f64 * 0.05, j as f64 * 0.05]).unwrap();
            }
        }
    }
    set
}
