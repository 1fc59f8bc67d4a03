mod common;

use momentset::mc::{
    assess_region, estimate_region, median_bands, oracle_set, replication_seed, run_mc, simulate, DgpSpec, GridSpec,
    McDesign, OracleSummary,
};
use momentset::regions::EstimatorTag;

/// Empirical median of the slice `|x - x0| <= 0.025`, after removing the
/// drift of the regression line across the slice.
fn slice_medians(x0: f64, per_slice: usize) -> (f64, f64) {
    let dgp = DgpSpec::median_missing();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut seed = 1_000;
    while lo.len() < per_slice {
        let s = simulate(&dgp, 1_000_000, seed).unwrap();
        seed += 1;
        for i in 0..s.n() {
            let x = s.x_row(i)[0];
            if (x - x0).abs() <= 0.025 {
                let shift = 0.5 * (x - x0);
                let w = s.w_row(i);
                lo.push(w[0] - shift);
                hi.push(w[1] - shift);
            }
        }
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    };
    (med(&mut lo), med(&mut hi))
}

#[test]
fn median_bands_match_simulated_medians() {
    let dgp = DgpSpec::median_missing();
    for x0 in [-2.8, -1.0, 0.0, 2.2] {
        let (l, h) = median_bands(&dgp, x0).unwrap();
        let (el, eh) = slice_medians(x0, 200_000);
        assert!((el - l).abs() < 0.01, "x={x0}: q_L {l} vs {el}");
        assert!((eh - h).abs() < 0.01, "x={x0}: q_H {h} vs {eh}");
    }
}

#[test]
fn oracle_hulls_on_the_default_grid() {
    let dgp = DgpSpec::median_missing();
    let grid = dgp.default_grid().build().unwrap();
    let oracle = oracle_set(&dgp, &grid, 1201).unwrap();
    let (a, b) = oracle.project(0).unwrap().hull.unwrap();
    assert!((a - 0.17).abs() <= 0.005 + 1e-9 && (b - 0.33).abs() <= 0.005 + 1e-9, "[{a}, {b}]");
    let (a, b) = oracle.project(1).unwrap().hull.unwrap();
    assert!((a - 0.47).abs() <= 0.005 + 1e-9 && (b - 0.53).abs() <= 0.005 + 1e-9, "[{a}, {b}]");
}

fn small_design(reps: usize) -> McDesign {
    let mut d = McDesign::new(DgpSpec::median_missing(), vec![120, 200], reps);
    d.grid = Some(GridSpec {
        bounds: vec![(-0.75, 1.25), (-0.25, 1.25)],
        pitch: 0.02,
    });
    d.estimators = vec![EstimatorTag::WeightedKs, EstimatorTag::BoundedKs, EstimatorTag::Kernel];
    d.base_seed = 77;
    d.keep_replications = true;
    d
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let d = small_design(6);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_mc(&d).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.replications, b.replications);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let c = run(2);
    assert_eq!(a.rows, c.rows);
}

#[test]
fn single_replication_report_matches_hand_assembly() {
    let mut d = small_design(1);
    d.sizes = vec![200];
    d.estimators = vec![EstimatorTag::WeightedKs];
    let report = run_mc(&d).unwrap();
    let row = report.row(EstimatorTag::WeightedKs, 200).unwrap();

    let grid = d.grid().unwrap();
    let model = d.model().unwrap();
    let oracle = OracleSummary::new(&oracle_set(&d.dgp, &grid, d.x_check).unwrap()).unwrap();
    let sample = simulate(&d.dgp, 200, replication_seed(d.base_seed, 200, 0)).unwrap();
    let region = estimate_region(&d, EstimatorTag::WeightedKs, &sample, &model, &grid).unwrap();
    let a = assess_region(&region, &oracle).unwrap();

    assert_eq!(row.completed, 1);
    assert_eq!(row.coverage, if a.covered { 1.0 } else { 0.0 });
    assert!(row.d_h.iter().all(|q| *q == a.d_h));
    for k in 0..2 {
        assert!(row.proj_d_h[k].iter().all(|q| *q == a.proj_d_h[k]));
        assert!(row.lower[k].iter().all(|q| *q == a.lower[k]));
        assert!(row.upper[k].iter().all(|q| *q == a.upper[k]));
        assert_eq!(row.lower_positive[k], if a.lower[k] > 0.0 { 1.0 } else { 0.0 });
    }
    assert_eq!(report.replications[0].assessment, a);
}

#[test]
fn rerunning_a_design_is_bit_identical() {
    let d = small_design(3);
    let a = serde_json::to_string(&run_mc(&d).unwrap()).unwrap();
    let b = serde_json::to_string(&run_mc(&d).unwrap()).unwrap();
    assert_eq!(a, b);
}
