mod common;

use common::*;
use momentset::alt::{bounded_region_with, kernel_cond_mean, kernel_region, BoundedWeightPolicy, KernelSpec};
use momentset::ksstat::{CriticalRule, SigmaRule, TuningPolicy};
use momentset::mc::{simulate, DgpSpec};
use momentset::models::{build_model, BoundaryTransform, ModelKind, ModelSpec};
use momentset::regions::{confidence_region_with, hausdorff};
use momentset::{InstrumentFamily, SFunction, Sample, SearchStrategy, ThetaGrid};
use proptest::prelude::*;
use rand::Rng;

fn tuning(sigma: f64, c: f64) -> TuningPolicy {
    TuningPolicy {
        sigma_rule: SigmaRule::Fixed { value: sigma },
        c_rule: CriticalRule::Fixed { value: c },
    }
}

fn small_grid() -> ThetaGrid {
    ThetaGrid::uniform(&[(-1.0, 1.0), (-1.0, 1.0)], 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statistic_is_nonnegative(seed in any::<u64>(), n in 3usize..40, t1 in -3.0..3.0f64, t2 in -2.0..2.0f64) {
        let mut r = rng(seed);
        let sample = interval_sample(&mut r, n, seed % 2 == 0);
        let model = interval_regression();
        let st = momentset::ksstat::ks_statistic(
            &sample, &model, &[t1, t2], &InstrumentFamily::AllDataIntervals, &SFunction::default(), &TuningPolicy::default(),
        ).unwrap();
        prop_assert!(st.t_value >= 0.0);
        prop_assert_eq!(st.t_value == 0.0, st.argmax.is_none());
    }

    #[test]
    fn joint_scaling_leaves_statistic_unchanged(seed in any::<u64>(), n in 3usize..40, sigma in 0.01..0.5f64) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let theta = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let lambda = 3.0;
        let model = one_sided_regression();
        let base = Sample::new(x.clone(), w.clone(), 1, 1).unwrap();
        let scaled = Sample::new(x, w.iter().map(|v| lambda * v).collect(), 1, 1).unwrap();
        let fam = InstrumentFamily::AllDataIntervals;
        let s = SFunction::default();
        let a = momentset::ksstat::ks_statistic(&base, &model, &theta, &fam, &s, &tuning(sigma, 1.0)).unwrap();
        let b = momentset::ksstat::ks_statistic(
            &scaled, &model, &[lambda * theta[0], lambda * theta[1]], &fam, &s, &tuning(lambda * sigma, 1.0),
        ).unwrap();
        prop_assert!((a.t_value - b.t_value).abs() <= 1e-12, "{} vs {}", a.t_value, b.t_value);
    }

    #[test]
    fn larger_truncation_never_increases_statistic(seed in any::<u64>(), n in 3usize..40, s1 in 0.01..0.3f64, extra in 0.0..0.5f64) {
        let mut r = rng(seed);
        let sample = interval_sample(&mut r, n, false);
        let model = interval_regression();
        let theta = [r.random_range(-2.0..2.0), r.random_range(-1.0..1.0)];
        let fam = InstrumentFamily::AllDataIntervals;
        let s = SFunction::default();
        let a = momentset::ksstat::ks_statistic(&sample, &model, &theta, &fam, &s, &tuning(s1, 1.0)).unwrap();
        let b = momentset::ksstat::ks_statistic(&sample, &model, &theta, &fam, &s, &tuning(s1 + extra, 1.0)).unwrap();
        prop_assert!(b.t_value <= a.t_value + 1e-12);
    }

    #[test]
    fn regions_nest_in_critical_value(seed in any::<u64>(), n in 10usize..60, c in 0.0..3.0f64, dc in 0.0..2.0f64) {
        let mut r = rng(seed);
        let sample = interval_sample(&mut r, n, false);
        let model = interval_regression();
        let grid = small_grid();
        let fam = InstrumentFamily::AllDataIntervals;
        let s = SFunction::default();
        for strategy in [SearchStrategy::Exhaustive, SearchStrategy::Auto] {
            let a = confidence_region_with(&sample, &model, &grid, &fam, &s, &tuning(0.1, c), strategy).unwrap();
            let b = confidence_region_with(&sample, &model, &grid, &fam, &s, &tuning(0.1, c + dc), strategy).unwrap();
            prop_assert!(b.contains_all(&a.member));
        }
        let pa = BoundedWeightPolicy { c_rule: CriticalRule::Fixed { value: c }, ..Default::default() };
        let pb = BoundedWeightPolicy { c_rule: CriticalRule::Fixed { value: c + dc }, ..Default::default() };
        let a = bounded_region_with(&sample, &model, &grid, &fam, &s, &pa, SearchStrategy::Exhaustive).unwrap();
        let b = bounded_region_with(&sample, &model, &grid, &fam, &s, &pb, SearchStrategy::Exhaustive).unwrap();
        prop_assert!(b.contains_all(&a.member));
        let spec = KernelSpec::optimal(2.0);
        let a = kernel_region(&sample, &model, &grid, &spec, &s, c).unwrap();
        let b = kernel_region(&sample, &model, &grid, &spec, &s, c + dc).unwrap();
        prop_assert!(b.contains_all(&a.member));
    }

    #[test]
    fn kernel_estimates_are_convex_combinations(seed in any::<u64>(), n in 5usize..60, h in 0.2..2.0f64) {
        let mut r = rng(seed);
        let sample = interval_sample(&mut r, n, seed % 3 == 0);
        let model = interval_regression();
        let theta = [r.random_range(-2.0..2.0), r.random_range(-1.0..1.0)];
        let spec = KernelSpec {
            kernel: [momentset::KernelId::Uniform, momentset::KernelId::Epanechnikov, momentset::KernelId::Triangular][(seed % 3) as usize],
            h_rule: momentset::alt::BandwidthRule::Fixed { h },
            side_constant: 0.0,
        };
        for k in 0..n {
            let x0 = sample.x_row(k)[0];
            let est = kernel_cond_mean(&sample, &model, &theta, &[x0], &spec).unwrap();
            for (j, e) in est.iter().enumerate() {
                let vals: Vec<f64> = (0..n)
                    .filter(|i| spec.kernel.eval((sample.x_row(*i)[0] - x0) / h) > 0.0)
                    .map(|i| model.eval_moment(sample.x_row(i), sample.w_row(i), &theta).unwrap()[j])
                    .collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*e >= lo - 1e-12 && *e <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn hausdorff_triangle_inequality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_grid_set(&mut r, 8, 0.3);
        let b = random_grid_set(&mut r, 8, 0.3);
        let c = random_grid_set(&mut r, 8, 0.3);
        let ab = hausdorff(&a, &b).d_h;
        let bc = hausdorff(&b, &c).d_h;
        let ac = hausdorff(&a, &c).d_h;
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert_eq!(hausdorff(&a, &a).d_h, 0.0);
    }

    #[test]
    fn transforms_are_strictly_monotone(a in 2.01..40.0f64, b in 2.01..40.0f64, phi in 1.1..4.0f64, u in 0.0..1.0f64, v in 0.0..1.0f64, phi_f in -0.9..3.0f64) {
        prop_assume!(a != b && u != v);
        let t = BoundaryTransform::AtInfinity { k_x: 2.0, phi_x: phi };
        let (ta, tb) = (t.map(0, a).unwrap(), t.map(0, b).unwrap());
        prop_assert_eq!(a < b, ta < tb);
        prop_assert!(ta < 3.0 && tb < 3.0);
        let f = BoundaryTransform::FiniteSupport { x0: vec![1.0], phi_x: phi_f };
        let (fu, fv) = (f.map(0, u).unwrap(), f.map(0, v).unwrap());
        prop_assert_eq!(u < v, fu < fv);
    }
}

#[test]
fn auto_search_matches_exhaustive_on_the_median_design() {
    let dgp = DgpSpec::median_missing();
    let model = build_model(&dgp.model_spec()).unwrap();
    let grid = ThetaGrid::uniform(&[(-0.5, 1.0), (0.0, 1.0)], 0.02).unwrap();
    for seed in 0..6 {
        let sample = simulate(&dgp, 150, seed).unwrap();
        let t = TuningPolicy::default();
        let fam = InstrumentFamily::AllDataIntervals;
        let s = SFunction::default();
        let a = confidence_region_with(&sample, &model, &grid, &fam, &s, &t, SearchStrategy::Exhaustive).unwrap();
        let b = confidence_region_with(&sample, &model, &grid, &fam, &s, &t, SearchStrategy::Auto).unwrap();
        assert_eq!(a.member, b.member, "seed {seed}");
        let p = BoundedWeightPolicy::default();
        let a = bounded_region_with(&sample, &model, &grid, &fam, &s, &p, SearchStrategy::Exhaustive).unwrap();
        let b = bounded_region_with(&sample, &model, &grid, &fam, &s, &p, SearchStrategy::Auto).unwrap();
        assert_eq!(a.member, b.member, "seed {seed}");
    }
}

#[test]
fn moments_respect_their_bound() {
    let mut r = rng(21);
    let specs = [
        ModelSpec::new(ModelKind::OneSidedQuantile { tau: 0.3 }, 1, vec![(-3.0, 3.0), (-3.0, 3.0)]),
        ModelSpec::new(ModelKind::IntervalQuantile { tau: 0.5 }, 1, vec![(-3.0, 3.0), (-3.0, 3.0)]),
        ModelSpec {
            w_bound: Some(2.0),
            x_bound: Some(1.0),
            ..ModelSpec::new(ModelKind::IntervalRegression, 1, vec![(-3.0, 3.0), (-3.0, 3.0)])
        },
        ModelSpec {
            w_bound: Some(2.0),
            x_bound: Some(1.0),
            ..ModelSpec::new(ModelKind::OneSidedRegression, 1, vec![(-3.0, 3.0), (-3.0, 3.0)])
        },
        ModelSpec::new(ModelKind::Selection { y_lower: 0.0, y_upper: 1.0 }, 1, vec![(0.0, 1.0)]),
    ];
    for spec in specs {
        let model = build_model(&spec).unwrap();
        let y_bar = model.y_bar();
        let d_w = spec.d_w();
        for _ in 0..100_000 {
            let x = [r.random_range(-1.0..1.0)];
            let theta: Vec<f64> = spec.theta_box.iter().map(|(lo, hi)| r.random_range(*lo..=*hi)).collect();
            let mut w: Vec<f64> = (0..d_w).map(|_| r.random_range(-2.0..2.0)).collect();
            if matches!(spec.kind, ModelKind::Selection { .. }) {
                w = vec![r.random_range(0.0..0.5), r.random_range(0.5..1.0)];
            } else if d_w == 2 && w[0] > w[1] {
                w.swap(0, 1);
            }
            let m = model.eval_moment(&x, &w, &theta).unwrap();
            assert!(m.iter().all(|v| v.abs() <= y_bar + 1e-12), "{spec:?} {m:?} > {y_bar}");
            if let ModelKind::IntervalQuantile { tau } = spec.kind {
                assert!(m.iter().all(|v| [tau - 1.0, tau, -tau, 1.0 - tau].iter().any(|c| (v - c).abs() < 1e-15)));
            }
            if let ModelKind::IntervalRegression = spec.kind {
                assert!((m[0] + m[1] - (w[1] - w[0])).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn scaled_sigma_bound_is_increasing() {
    let t = TuningPolicy::default();
    let mut prev = 0.0;
    let mut n = 16usize;
    while n <= 1_000_000 {
        let v = momentset::ksstat::sigma_n(&t, n).unwrap() * momentset::ksstat::rate_scale(n).unwrap();
        assert!(v > prev, "n={n}");
        prev = v;
        n += if n < 1000 { 1 } else { 997 };
    }
}
