use std::sync::Arc;

use phjb_core::bsde::RegressionSpec;
use phjb_core::model::{control_grid, lq_1d, uncontrolled};
use phjb_core::value::{
    coefficient_stability_check, regularity_check, value_direct, value_dpp, Continuation, Perturbation, PolicyClass,
};
use phjb_core::{DiscretePath, HVector, PathGrid, Policy, SimOptions};

fn start(dt: f64, x0: f64) -> DiscretePath {
    let grid = PathGrid::with_horizon(1.0, dt).unwrap();
    DiscretePath::constant(grid, HVector(vec![x0]), 0).unwrap()
}

fn riccati(t: f64, x: f64) -> f64 {
    -x * x - (1.0 - t)
}

fn lq_class() -> PolicyClass {
    PolicyClass::FeedbackOnFeatures {
        gains_x: vec![-1.5, -1.0, -0.5],
        gains_max: vec![0.0],
        gains_integral: vec![0.0],
        offsets: vec![0.0],
    }
}

#[test]
fn open_loop_enumeration_is_lexicographic() {
    let m = lq_1d(1.0, vec![-1.0, 1.0]).unwrap();
    let c = PolicyClass::OpenLoopPiecewiseConstant {
        switch_times: vec![0.5],
    };
    let ps = c.enumerate(&m).unwrap();
    assert_eq!(ps.len(), 4);
    assert_eq!(
        ps[1],
        Policy::OpenLoop {
            switch_times: vec![0.5],
            controls: vec![-1.0, 1.0]
        }
    );
    let huge = PolicyClass::OpenLoopPiecewiseConstant {
        switch_times: (1..20).map(|i| i as f64 / 20.0).collect(),
    };
    assert!(matches!(huge.enumerate(&m), Err(phjb_core::Error::Refusal(_))));
    let empty = PolicyClass::Explicit { policies: vec![] };
    assert!(empty.enumerate(&m).is_err());
}

#[test]
fn lq_value_near_riccati() {
    let m = lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap();
    let opts = SimOptions::new(4000, 21);
    for &x in &[0.0, 1.0] {
        let r = value_direct(&m, &start(0.01, x), &lq_class(), &opts, &RegressionSpec::default()).unwrap();
        assert!((r.value - riccati(0.0, x)).abs() < 0.07, "x = {x}: {r:?}");
        assert_eq!(r.policy, Policy::feedback_x(-1.0));
        assert!(r.se > 0.0);
    }
}

#[test]
fn value_dominates_members_and_grows_with_the_class() {
    let m = lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap();
    let opts = SimOptions::new(1000, 22);
    let spec = RegressionSpec::default();
    let x0 = start(0.02, 0.5);
    let small = PolicyClass::Explicit {
        policies: vec![Policy::feedback_x(-0.5)],
    };
    let a = value_direct(&m, &x0, &small, &opts, &spec).unwrap();
    let b = value_direct(&m, &x0, &lq_class(), &opts, &spec).unwrap();
    assert!(b.value >= a.value);
    for e in &b.per_policy {
        assert!(b.value >= e.mean);
    }
    assert_eq!(b.per_policy[2], a.per_policy[0]);
}

#[test]
fn singleton_dpp_matches_direct() {
    let m = uncontrolled(1.0, -1.0, 0.5, 0.1).unwrap();
    let class = PolicyClass::Explicit {
        policies: vec![Policy::Constant { u: 0.0 }],
    };
    let x0 = start(0.02, 0.5);
    let opts = SimOptions::new(4000, 23);
    let spec = RegressionSpec::default();
    let direct = value_direct(&m, &x0, &class, &opts, &spec).unwrap();
    let cont = Continuation::Regressed {
        class: class.clone(),
        n_paths: 4000,
    };
    let dpp = value_dpp(&m, &x0, 0.4, &class, &cont, &opts, &spec).unwrap();
    assert!(
        (dpp.value - direct.value).abs() <= 3.0 * (dpp.se + direct.se) + 5.0 * 0.02,
        "{} vs {}",
        dpp.value,
        direct.value
    );
    // The whole horizon as window reduces to the direct solve.
    let whole = value_dpp(&m, &x0, 1.0, &class, &cont, &opts, &spec).unwrap();
    assert_eq!(whole.value, direct.value);
    assert!(value_dpp(&m, &x0, 0.011, &class, &cont, &opts, &spec).is_err());
}

#[test]
fn lq_dpp_with_analytic_continuation() {
    let m = lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap();
    let delta = 0.3;
    let cont = Continuation::Analytic(Arc::new(move |f| riccati(delta, f.endpoint[0])));
    let r = value_dpp(
        &m,
        &start(0.01, 0.0),
        delta,
        &lq_class(),
        &cont,
        &SimOptions::new(4000, 24),
        &RegressionSpec::default(),
    )
    .unwrap();
    assert!((r.value + 1.0).abs() < 0.05, "{r:?}");
}

#[test]
fn lq_regularity_within_riccati_bounds() {
    let m = lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap();
    let spec = RegressionSpec::default();
    let opts = SimOptions::new(2000, 25);
    let pairs = vec![
        (start(0.02, 0.0), start(0.02, 0.5)),
        (start(0.02, 0.5), start(0.02, 1.0)),
    ];
    let r = regularity_check(&m, &lq_class(), &pairs, &start(0.02, 0.5), &[0.1, 0.3], &opts, &spec).unwrap();
    for l in &r.lipschitz {
        // |V(x) - V(y)| / |x - y| = |x + y| <= 1.5 on this sample.
        assert!(l.ratio <= 1.5 * 1.5 + 0.1, "{l:?}");
    }
    for s in &r.time {
        assert!(s.ratio <= 10.0 * (s.s - s.t).sqrt(), "{s:?}");
    }
}

#[test]
fn terminal_shift_is_exact_and_zero_eps_vanishes() {
    let m = lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap();
    let paths = vec![start(0.05, 0.0), start(0.05, 1.0)];
    let r = coefficient_stability_check(
        &m,
        &paths,
        &lq_class(),
        Perturbation::Terminal,
        &[0.0, 0.1, 0.05],
        &SimOptions::new(1000, 26),
        &RegressionSpec::default(),
    )
    .unwrap();
    assert_eq!(r.points[0].sup_difference, 0.0);
    assert!((r.points[1].sup_difference - 0.1).abs() < 1e-9);
    assert!((r.points[2].sup_difference - 0.05).abs() < 1e-9);
}
