use phjb_core::bsde::{
    apriori_estimate_check, backward_semigroup, comparison_check, solve_lattice_1d, solve_lsmc, solve_lsmc_terminal,
    RegressionSpec, SweepOptions,
};
use phjb_core::model::{uncontrolled, Dependence};
use phjb_core::{simulate, ControlModel, DiscretePath, HVector, PathGrid, Policy, SimOptions, SpectralOperator};

fn start(dt: f64, x0: f64) -> DiscretePath {
    let grid = PathGrid::with_horizon(1.0, dt).unwrap();
    DiscretePath::constant(grid, HVector(vec![x0]), 0).unwrap()
}

fn brownian(sigma: f64) -> ControlModel {
    ControlModel::new("bm", SpectralOperator::zero(1).unwrap(), 1.0, 1, vec![0.0])
        .unwrap()
        .with_diffusion(move |_, _, g| g[(0, 0)] = sigma)
}

const STILL: Policy = Policy::Constant { u: 0.0 };

#[test]
fn constant_terminal_is_a_constant_martingale() {
    let m = brownian(1.0).with_terminal(|_| 2.5);
    let b = simulate(&m, &start(0.02, 0.3), &STILL, &SimOptions::new(500, 1)).unwrap();
    let s = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap();
    for i in 0..=b.end_index {
        for p in 0..b.n_paths {
            assert!((s.y(i, p) - 2.5).abs() < 1e-12);
            if i < b.end_index {
                assert!(s.z(i, p)[0].abs() < 1e-9);
            }
        }
    }
}

#[test]
fn terminal_anchoring_is_bit_exact() {
    let m = brownian(0.7).with_terminal(|f| f.endpoint[0].sin());
    let b = simulate(&m, &start(0.05, 0.0), &STILL, &SimOptions::new(300, 2)).unwrap();
    let s = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap();
    for p in 0..b.n_paths {
        let phi = m.terminal(&b.features(p, b.end_index));
        assert_eq!(s.y(b.end_index, p).to_bits(), phi.to_bits());
    }
}

#[test]
fn linear_driver_matches_exponential() {
    let alpha = 0.1;
    let m = uncontrolled(1.0, 0.0, 1.0, alpha)
        .unwrap()
        .with_driver_replaced(alpha, move |_, y, _, _| alpha * y)
        .with_terminal(|_| 1.0);
    let dt = 0.01;
    let b = simulate(&m, &start(dt, 0.0), &STILL, &SimOptions::new(2000, 3)).unwrap();
    let est = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap().estimate();
    assert!((est.mean - alpha.exp()).abs() <= 3.0 * est.se + 5.0 * dt);
}

#[test]
fn linear_terminal_has_constant_z() {
    // phi = c X_T, F = 0, G = 0.6: Y_t = c x0, Z = c G.
    let c = 1.7;
    let g = 0.6;
    let m = brownian(g).with_terminal(move |f| c * f.endpoint[0]);
    let b = simulate(&m, &start(0.02, 0.4), &STILL, &SimOptions::new(2000, 4)).unwrap();
    let s = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap();
    let est = s.estimate();
    assert!((est.mean - c * 0.4).abs() <= 3.0 * est.se, "{est:?}");
    assert!((s.y0 - c * 0.4).abs() < 0.05);
    let z: Vec<f64> = (0..b.n_paths).map(|p| s.z(10, p)[0]).collect();
    let zbar = z.iter().sum::<f64>() / z.len() as f64;
    assert!((zbar - c * g).abs() < 0.05, "{zbar}");
}

#[test]
fn zero_driver_martingale_increments() {
    let m = brownian(1.0).with_terminal(|f| f.endpoint[0].powi(2));
    let b = simulate(&m, &start(0.05, 0.2), &STILL, &SimOptions::new(4000, 5)).unwrap();
    let s = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap();
    for i in 0..b.end_index {
        let inc: Vec<f64> = (0..b.n_paths).map(|p| s.y(i + 1, p) - s.y(i, p)).collect();
        let e = phjb_core::stats::Estimate::of(&inc);
        assert!(e.mean.abs() <= 3.0 * e.se + 1e-12, "step {i}: {e:?}");
    }
}

#[test]
fn lattice_brownian_second_moment() {
    let m = brownian(1.0).with_terminal(|f| f.endpoint[0].powi(2));
    for &x0 in &[0.0, 0.5, -1.0] {
        let l = solve_lattice_1d(&m, &start(0.01, x0), &STILL, &RegressionSpec::default()).unwrap();
        assert!((l.y0 - (x0 * x0 + 1.0)).abs() < 1e-10, "{x0}: {}", l.y0);
    }
}

#[test]
fn lattice_decay_driver() {
    let m = brownian(1.0).with_driver(1.0, |_, y, _, _| -y).with_terminal(|_| 1.0);
    let dt = 0.01;
    let l = solve_lattice_1d(&m, &start(dt, 0.0), &STILL, &RegressionSpec::default()).unwrap();
    assert!((l.y0 - (-1.0f64).exp()).abs() < dt);
}

#[test]
fn lattice_matches_lsmc_on_quadratic_terminal() {
    let m = brownian(1.0).with_terminal(|f| f.endpoint[0].powi(2));
    let x0 = start(0.01, 0.3);
    let l = solve_lattice_1d(&m, &x0, &STILL, &RegressionSpec::default()).unwrap();
    let b = simulate(&m, &x0, &STILL, &SimOptions::new(4000, 6).antithetic()).unwrap();
    let e = solve_lsmc(&m, &b, &RegressionSpec::default()).unwrap().estimate();
    assert!(
        (l.y0 - e.mean).abs() <= (3.0 * e.se).max(5.0 * 0.01),
        "{} vs {e:?}",
        l.y0
    );
}

#[test]
fn lattice_tracks_running_max() {
    // phi = max|X|; compare with a Monte Carlo estimate.
    let m = brownian(1.0)
        .with_dependence(Dependence::RunningMax)
        .with_terminal(|f| f.running_max);
    let x0 = start(0.01, 0.0);
    let l = solve_lattice_1d(&m, &x0, &STILL, &RegressionSpec::default()).unwrap();
    assert!(l.max_nodes > 1);
    let b = simulate(&m, &x0, &STILL, &SimOptions::new(20000, 7)).unwrap();
    let mc: Vec<f64> = (0..b.n_paths).map(|p| b.running_max(p, b.end_index)).collect();
    let e = phjb_core::stats::Estimate::of(&mc);
    assert!((l.y0 - e.mean).abs() <= 3.0 * e.se + 0.02, "{} vs {e:?}", l.y0);
}

#[test]
fn lattice_refuses_general_dependence_and_vectors() {
    let m = brownian(1.0).with_dependence(Dependence::General);
    assert!(solve_lattice_1d(&m, &start(0.1, 0.0), &STILL, &RegressionSpec::default()).is_err());
    let heat = phjb_core::model::linear_heat(2, 1.0, -0.5, 0.5, vec![0.0]).unwrap();
    let grid = PathGrid::with_horizon(1.0, 0.1).unwrap();
    let x = DiscretePath::constant(grid, HVector(vec![0.0, 0.0]), 0).unwrap();
    assert!(solve_lattice_1d(&heat, &x, &STILL, &RegressionSpec::default()).is_err());
}

#[test]
fn picard_precondition_is_enforced() {
    let m = brownian(1.0).with_driver(60.0, |_, y, _, _| -60.0 * y);
    let b = simulate(&m, &start(0.01, 0.0), &STILL, &SimOptions::new(10, 1)).unwrap();
    assert!(matches!(
        solve_lsmc(&m, &b, &RegressionSpec::default()),
        Err(phjb_core::Error::PicardContraction(_))
    ));
}

#[test]
fn backward_semigroup_cases() {
    let m = brownian(1.0).with_terminal(|f| f.endpoint[0].powi(2));
    let x0 = start(0.02, 0.0);
    let spec = RegressionSpec::default();
    let opts = SimOptions::new(2000, 8);
    let c = backward_semigroup(&m, &x0, &STILL, 0.4, &opts, &spec, |_, _| 3.0).unwrap();
    assert!((c.estimate().mean - 3.0).abs() < 1e-12);
    // Whole window with zeta = phi reproduces the plain solve.
    let full = backward_semigroup(&m, &x0, &STILL, 1.0, &opts, &spec, |b, p| {
        m.terminal(&b.features(p, b.end_index))
    })
    .unwrap();
    let b = simulate(&m, &x0, &STILL, &opts).unwrap();
    let direct = solve_lsmc(&m, &b, &spec).unwrap();
    assert_eq!(full.estimate(), direct.estimate());
    // Nesting: continuation x^2 + (T - t - delta) on [0, 0.4].
    let nest = backward_semigroup(&m, &x0, &STILL, 0.4, &opts, &spec, |b, p| {
        b.state(p, b.end_index)[0].powi(2) + 0.6
    })
    .unwrap();
    let (a, d) = (nest.estimate(), direct.estimate());
    assert!((a.mean - d.mean).abs() <= 3.0 * (a.se + d.se) + 1e-9, "{a:?} {d:?}");
    assert!(backward_semigroup(&m, &x0, &STILL, 0.013, &opts, &spec, |_, _| 0.0).is_err());
}

#[test]
fn comparison_examples() {
    let base = brownian(1.0).with_terminal(|f| -f.endpoint[0].powi(2));
    let b = simulate(&base, &start(0.02, 0.0), &STILL, &SimOptions::new(2000, 9)).unwrap();
    let spec = RegressionSpec::default();
    let one = base.clone().with_terminal(|_| 1.0);
    let zero = base.clone().with_terminal(|_| 0.0);
    let r = comparison_check(&one, &zero, &b, &spec, 5.0).unwrap();
    assert_eq!(r.y0_difference.mean, 1.0);
    assert!(r.passed && r.precondition_violations == 0);
    let same = comparison_check(&base, &base, &b, &spec, 5.0).unwrap();
    assert_eq!(same.min_difference, 0.0);
    let shifted = base.with_driver_shift(0.1);
    let r = comparison_check(&shifted, &base, &b, &spec, 5.0).unwrap();
    assert!((r.y0_difference.mean - 0.1).abs() < 1e-9);
    // Reversed pair violates the precondition and the ordering.
    let r = comparison_check(&base, &shifted, &b, &spec, 5.0).unwrap();
    assert!(r.precondition_violations > 0 && !r.passed);
}

#[test]
fn apriori_ladders() {
    let m = uncontrolled(1.0, -1.0, 0.5, 0.1).unwrap();
    let x0 = start(0.02, 0.5);
    let r = apriori_estimate_check(
        &m,
        &x0,
        &STILL,
        2.0,
        &[0.0, 0.1, 0.05],
        &[0.2, 0.1, 0.05],
        &SimOptions::new(1000, 10),
        &RegressionSpec::default(),
    )
    .unwrap();
    assert_eq!(r.terminal[0].numerator, 0.0);
    assert!(r.passed, "{r:?}");
    assert!((r.initial_slope - 2.0).abs() < 0.5, "{}", r.initial_slope);
}

#[test]
fn window_fits_are_stored() {
    let m = brownian(1.0).with_terminal(|f| f.endpoint[0].powi(2));
    let b = simulate(&m, &start(0.05, 0.0), &STILL, &SimOptions::new(32000, 11)).unwrap();
    let zeta: Vec<f64> = (0..b.n_paths)
        .map(|p| m.terminal(&b.features(p, b.end_index)))
        .collect();
    let opts = SweepOptions { fit_steps: vec![10] };
    let s = solve_lsmc_terminal(&m, &b, &RegressionSpec::default(), &zeta, &opts).unwrap();
    let fit = &s.fits[&10];
    // E[X_T^2 | X_t = x] = x^2 + 0.5 (time and max are columns too).
    let mut raw = Vec::new();
    let mut f = b.features(0, 10);
    f.endpoint[0] = 0.3;
    f.running_max = 0.6;
    RegressionSpec::default().raw(&f, &mut raw);
    assert!((fit.eval(&raw) - 0.59).abs() < 0.05, "{}", fit.eval(&raw));
}
