mod common;

use common::*;
use momentset::alt::{bounded_ks_statistic, kernel_cond_mean, BandwidthRule, BoundedWeightPolicy, KernelSpec};
use momentset::ksstat::{ks_statistic, moment_pair, SigmaRule, TuningPolicy};
use momentset::regions::hausdorff;
use momentset::{Instrument, InstrumentFamily, KernelId, SFunction};
use rand::Rng;

fn fixed_sigma(value: f64) -> TuningPolicy {
    TuningPolicy {
        sigma_rule: SigmaRule::Fixed { value },
        ..Default::default()
    }
}

#[test]
fn interval_supremum_matches_enumeration() {
    let mut r = rng(11);
    let model = interval_regression();
    let family = InstrumentFamily::AllDataIntervals;
    let mut worst = 0.0_f64;
    for k in 0..200 {
        let n = r.random_range(3..=30);
        let sample = interval_sample(&mut r, n, k % 2 == 0);
        let theta = [r.random_range(-2.0..2.0), r.random_range(-1.5..1.5)];
        let sigma = [0.02, 0.1, 0.4][k % 3];
        let s = if k % 4 == 0 {
            SFunction::NegPartPNorm { p: 2.0 }
        } else {
            SFunction::default()
        };
        let fast = ks_statistic(&sample, &model, &theta, &family, &s, &fixed_sigma(sigma)).unwrap();
        let slow = brute_ks(&sample, &model, &theta, &s, sigma);
        worst = worst.max((fast.t_value - slow).abs());
    }
    assert!(worst <= 1e-12, "max abs diff {worst}");
}

#[test]
fn one_sided_far_above_matches_enumeration() {
    let mut r = rng(12);
    let model = one_sided_regression();
    let x: Vec<f64> = (0..20).map(|_| r.random_range(0.0..1.0)).collect();
    let w: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
    let sample = momentset::Sample::new(x, w, 1, 1).unwrap();
    let theta = [5.0, 0.0];
    let tuning = TuningPolicy::default();
    let fast = ks_statistic(&sample, &model, &theta, &InstrumentFamily::AllDataIntervals, &SFunction::default(), &tuning)
        .unwrap();
    let sigma = momentset::ksstat::sigma_n(&tuning, 20).unwrap();
    let slow = brute_ks(&sample, &model, &theta, &SFunction::default(), sigma);
    assert!(fast.t_value > 0.0);
    assert!((fast.t_value - slow).abs() <= 1e-12);
}

#[test]
fn bounded_statistic_matches_unstudentized_enumeration() {
    let mut r = rng(13);
    let model = interval_regression();
    for _ in 0..50 {
        let n = r.random_range(3..=20);
        let sample = interval_sample(&mut r, n, false);
        let theta = [r.random_range(-2.0..2.0), r.random_range(-1.0..1.0)];
        let fast = bounded_ks_statistic(
            &sample,
            &model,
            &theta,
            &InstrumentFamily::AllDataIntervals,
            &SFunction::default(),
            &BoundedWeightPolicy::default(),
        )
        .unwrap();
        // unit weights: studentizing by max(sigma_hat, huge) then rescaling
        // recovers the raw moments
        let big = 1e6;
        let slow = brute_ks(&sample, &model, &theta, &SFunction::default(), big) * big;
        assert!((fast.t_value - slow).abs() <= 1e-9 * slow.max(1.0), "{} vs {slow}", fast.t_value);
        assert!((fast.scaled - fast.t_value * (n as f64).sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn moment_pair_matches_two_pass() {
    let mut r = rng(14);
    let model = interval_regression();
    let sample = interval_sample(&mut r, 25, false);
    let g = Instrument::Box {
        lower: vec![-1.0],
        upper: vec![1.0],
    };
    for _ in 0..20 {
        let theta = [r.random_range(-2.0..2.0), r.random_range(-1.0..1.0)];
        let got = moment_pair(&sample, &model, &theta, &g).unwrap();
        for j in 0..2 {
            let vals: Vec<f64> = (0..sample.n())
                .map(|i| {
                    let x = sample.x_row(i)[0];
                    let gi = if -1.0 < x && x <= 1.0 { 1.0 } else { 0.0 };
                    gi * model.eval_moment(sample.x_row(i), sample.w_row(i), &theta).unwrap()[j]
                })
                .collect();
            let mu = vals.iter().sum::<f64>() / 25.0;
            let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 25.0).sqrt();
            assert!((got.mu_hat[j] - mu).abs() <= 1e-12);
            assert!((got.sigma_hat[j] - sd).abs() <= 1e-10 * sd.max(1e-300));
        }
    }
}

#[test]
fn hausdorff_matches_brute_force() {
    let mut r = rng(15);
    for k in 0..100 {
        let keep = [0.02, 0.1, 0.4][k % 3];
        let a = random_grid_set(&mut r, 12, keep);
        let b = random_grid_set(&mut r, 12, keep);
        let fast = hausdorff(&a, &b).d_h;
        let slow = brute_hausdorff(&a, &b);
        if slow.is_infinite() {
            assert_eq!(fast, slow);
        } else {
            assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow}");
        }
        assert_eq!(fast, hausdorff(&b, &a).d_h);
    }
}

#[test]
fn kernel_mean_matches_direct_sum() {
    let mut r = rng(16);
    let model = interval_regression();
    let sample = interval_sample(&mut r, 25, false);
    let spec = KernelSpec {
        kernel: KernelId::Uniform,
        h_rule: BandwidthRule::Fixed { h: 0.5 },
        side_constant: 1.0,
    };
    let theta = [0.1, 0.3];
    for k in 0..25 {
        let x0 = sample.x_row(k)[0];
        let got = kernel_cond_mean(&sample, &model, &theta, &[x0], &spec).unwrap();
        let mut num = [0.0; 2];
        let mut den = 0.0;
        for i in 0..25 {
            let u = (sample.x_row(i)[0] - x0) / 0.5;
            if u.abs() <= 1.0 {
                let m = model.eval_moment(sample.x_row(i), sample.w_row(i), &theta).unwrap();
                den += 0.5;
                num[0] += 0.5 * m[0];
                num[1] += 0.5 * m[1];
            }
        }
        for j in 0..2 {
            assert!((got[j] - num[j] / den).abs() <= 1e-12);
        }
    }
}
