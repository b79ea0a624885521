use phjb_core::calculus::{eval_gauge, GaugeAnchor, TestFunctionalG, TimeWeight};
use phjb_core::hjb::{
    borwein_preiss, classical_residual, hamiltonian, monotonicity_normalization_check, monotonicity_samples,
    terminal_mismatch, viscosity_probe, FreeNode, HamiltonianInput, PathLattice, ProbeMode, SmoothCandidate,
};
use phjb_core::model::{control_grid, lq_1d, uncontrolled};
use phjb_core::{ControlModel, DiscretePath, Error, HVector, Matrix, PathGrid, SpectralOperator};
use proptest::prelude::*;

fn lq() -> ControlModel {
    lq_1d(1.0, control_grid(4.0, 0.25).unwrap()).unwrap()
}

fn grid() -> PathGrid {
    PathGrid::with_horizon(1.0, 0.1).unwrap()
}

fn flat(x: f64, end: usize) -> DiscretePath {
    DiscretePath::constant(grid(), HVector(vec![x]), end).unwrap()
}

fn input(x: f64, r: f64, p: f64, l: f64) -> HamiltonianInput {
    HamiltonianInput {
        gamma: flat(x, 3),
        r,
        p: HVector(vec![p]),
        l: Matrix::from_element(1, 1, l),
    }
}

#[test]
fn hamiltonian_examples() {
    let unit = ControlModel::new("unit", SpectralOperator::zero(1).unwrap(), 1.0, 1, vec![0.0])
        .unwrap()
        .with_diffusion(|_, _, g| g[(0, 0)] = 1.0);
    assert_eq!(hamiltonian(&unit, &input(0.3, 0.0, 0.0, 2.0)).unwrap().value, 1.0);
    let h = hamiltonian(&lq(), &input(0.0, 7.0, 0.0, -2.0)).unwrap();
    assert_eq!(h.value, -1.0);
    assert_eq!(h.argmax, 0.0);
    // Adding a u-independent constant to q shifts the value only.
    let shifted = lq().with_driver_shift(0.75);
    let a = hamiltonian(&lq(), &input(0.4, 0.0, 1.3, 0.5)).unwrap();
    let b = hamiltonian(&shifted, &input(0.4, 0.0, 1.3, 0.5)).unwrap();
    assert_eq!(a.argmax, b.argmax);
    assert!((b.value - a.value - 0.75).abs() < 1e-12);
    // Ties resolve to the first control in grid order.
    let flat_u = ControlModel::new("tie", SpectralOperator::zero(1).unwrap(), 1.0, 1, vec![-1.0, 1.0]).unwrap();
    assert_eq!(hamiltonian(&flat_u, &input(0.0, 0.0, 0.0, 0.0)).unwrap().argmax, -1.0);
    let heat = phjb_core::model::linear_heat(2, 1.0, -0.5, 0.5, vec![0.0]).unwrap();
    let g2 = DiscretePath::constant(grid(), HVector(vec![0.1, 0.2]), 2).unwrap();
    let asym = HamiltonianInput {
        gamma: g2,
        r: 0.0,
        p: HVector(vec![0.0, 0.0]),
        l: Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
    };
    assert!(matches!(hamiltonian(&heat, &asym), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn hamiltonian_is_loewner_monotone(x in -2.0..2.0f64, p in -3.0..3.0f64, l in -3.0..3.0f64, dl in 0.0..2.0f64) {
        let m = lq();
        let a = hamiltonian(&m, &input(x, 0.0, p, l)).unwrap().value;
        let b = hamiltonian(&m, &input(x, 0.0, p, l + dl)).unwrap().value;
        prop_assert!(b >= a);
    }
}

#[test]
fn lq_classical_residual_on_grid() {
    let m = lq();
    let cand = SmoothCandidate::lq(1.0);
    let g = PathGrid::with_horizon(1.0, 0.05).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            let x = -2.5 + 0.25 * j as f64;
            let path = DiscretePath::constant(g, HVector(vec![x]), i).unwrap();
            worst = worst.max(classical_residual(&m, &cand, &path).unwrap().abs());
        }
    }
    assert!(worst <= 1e-9, "{worst}");
    let eps = 0.3;
    let wrong = cand.with_time_shift(eps);
    let r = classical_residual(&m, &wrong, &DiscretePath::constant(g, HVector(vec![0.5]), 7).unwrap()).unwrap();
    assert!((r - eps).abs() < 1e-12);
    let terminal: Vec<DiscretePath> = (0..5)
        .map(|k| DiscretePath::constant(g, HVector(vec![k as f64 - 2.0]), g.n_steps).unwrap())
        .collect();
    assert!(terminal_mismatch(&m, &cand, &terminal).unwrap() < 1e-15);
}

#[test]
fn monotonicity_examples() {
    let lq = lq();
    let samples = monotonicity_samples(&lq, &grid(), 200, 5);
    let r = monotonicity_normalization_check(&lq, &samples).unwrap();
    assert_eq!(r.k, 0.0);
    assert!(r.needs_shift);
    let k = 0.7;
    let damped = lq.with_driver_replaced(k, move |f, y, _, u| -k * y - f.endpoint[0].powi(2) - u * u);
    let r = monotonicity_normalization_check(&damped, &samples).unwrap();
    assert!((r.k - k).abs() < 1e-12, "{}", r.k);
    assert!(!r.needs_shift);
    let growing = uncontrolled(1.0, -1.0, 0.5, 0.1).unwrap();
    let r = monotonicity_normalization_check(&growing, &samples).unwrap();
    assert!(r.needs_shift);
    let fixed = growing.exponential_discount(r.recommended_beta.unwrap());
    let r = monotonicity_normalization_check(&fixed, &samples).unwrap();
    assert!(r.k > 0.0, "{}", r.k);
}

fn lq_lattice(end: usize) -> PathLattice {
    let vals: Vec<HVector> = (-2..=2).map(|k| HVector(vec![0.5 * k as f64])).collect();
    PathLattice {
        base: flat(0.0, 10),
        free: vec![
            FreeNode {
                index: 4,
                values: vals.clone(),
            },
            FreeNode {
                index: end,
                values: vals,
            },
        ],
        end_indices: vec![end, end + 2, 10],
    }
}

fn lq_value(path: &DiscretePath) -> f64 {
    -path.endpoint().norm_sq() - (1.0 - path.end_time())
}

#[test]
fn lattice_counts_and_caps() {
    let lat = lq_lattice(6);
    assert_eq!(lat.size().unwrap(), 3 * 25);
    let pts = lat.points().unwrap();
    assert_eq!(pts.len(), 75);
    assert_eq!(pts[0].end_index(), 6);
    assert_eq!(pts[0].values()[4][0], -1.0);
    assert_eq!(pts[1].values()[6][0], -0.5);
    let big = PathLattice {
        base: flat(0.0, 10),
        free: (1..=5)
            .map(|i| FreeNode {
                index: i,
                values: vec![HVector(vec![0.0]); 9],
            })
            .collect(),
        end_indices: vec![5, 6, 7, 8, 9, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10],
    };
    assert!(matches!(big.size(), Err(Error::Refusal(_))));
    let mut six = lq_lattice(6);
    six.free = (1..=6)
        .map(|i| FreeNode {
            index: i,
            values: vec![HVector(vec![0.0])],
        })
        .collect();
    assert!(matches!(six.size(), Err(Error::Refusal(_))));
}

#[test]
fn classical_value_passes_both_probes() {
    let m = lq();
    let hat = {
        let mut v = flat(0.0, 6).values().to_vec();
        v[6] = HVector(vec![0.5]);
        DiscretePath::new(grid(), v).unwrap()
    };
    let g = TestFunctionalG::new(TimeWeight::Zero, vec![GaugeAnchor::gauge(hat.clone(), 0.5)], 2.0, 1.0).unwrap();
    let v = SmoothCandidate::lq(1.0);
    let sub = viscosity_probe(&m, &lq_value, &v, &g, &hat, ProbeMode::Sub, &lq_lattice(6), 1e-12).unwrap();
    assert!(sub.certificate.passed);
    assert!(sub.verdict == Some(true) && sub.slack.unwrap() >= -1e-6, "{sub:?}");
    let sup = viscosity_probe(
        &m,
        &lq_value,
        &v.affine(-1.0, 0.0),
        &g,
        &hat,
        ProbeMode::Super,
        &lq_lattice(6),
        1e-12,
    )
    .unwrap();
    assert!(sup.certificate.passed && sup.verdict == Some(true), "{sup:?}");
    assert_eq!(sub.terminal_violations, 0);
    assert!(sub.terminal_samples > 0);
}

#[test]
fn time_shifted_values_fail_the_matching_probe() {
    let m = lq();
    let eps = 0.2;
    let hat = flat(0.0, 6);
    let g = TestFunctionalG::zero();
    let lat = lq_lattice(6);
    // w = V - eps t: residual -eps, a subsolution violation.
    let below = SmoothCandidate::lq(1.0).with_time_shift(-eps);
    let w = |p: &DiscretePath| lq_value(p) - eps * p.end_time();
    let r = viscosity_probe(&m, &w, &below, &g, &hat, ProbeMode::Sub, &lat, 1e-12).unwrap();
    assert_eq!(r.verdict, Some(false));
    assert!((r.slack.unwrap() + eps).abs() < 1e-12);
    // w = V + eps t: residual +eps, a supersolution violation.
    let above = SmoothCandidate::lq(1.0).with_time_shift(eps);
    let w = |p: &DiscretePath| lq_value(p) + eps * p.end_time();
    let r = viscosity_probe(
        &m,
        &w,
        &above.affine(-1.0, 0.0),
        &g,
        &hat,
        ProbeMode::Super,
        &lat,
        1e-12,
    )
    .unwrap();
    assert_eq!(r.verdict, Some(false));
    let r = viscosity_probe(&m, &w, &above, &g, &hat, ProbeMode::Sub, &lat, 1e-12).unwrap();
    assert_eq!(r.verdict, Some(true));
}

#[test]
fn probe_refuses_without_certificate() {
    let m = lq();
    let hat = flat(0.0, 6);
    // w - V has no max at hat when w = 2 V.
    let w = |p: &DiscretePath| 2.0 * lq_value(p) + 3.0 * p.endpoint().norm_sq();
    let r = viscosity_probe(
        &m,
        &w,
        &SmoothCandidate::lq(1.0),
        &TestFunctionalG::zero(),
        &hat,
        ProbeMode::Sub,
        &lq_lattice(6),
        1e-12,
    )
    .unwrap();
    assert!(!r.certificate.passed);
    assert_eq!(r.verdict, None);
    assert_eq!(r.slack, None);
}

#[test]
fn negative_gauge_is_maximal_at_its_anchor() {
    let m = lq();
    let hat = flat(0.5, 6);
    let op = m.op.clone();
    let anchor = hat.clone();
    let w = move |p: &DiscretePath| -eval_gauge(&anchor, p, &op, 3.0).unwrap();
    let r = viscosity_probe(
        &m,
        &w,
        &SmoothCandidate::constant(4.0, 1),
        &TestFunctionalG::zero(),
        &hat,
        ProbeMode::Sub,
        &lq_lattice(6),
        0.0,
    )
    .unwrap();
    assert!(r.certificate.passed);
}

#[test]
fn bp_strict_max_at_start() {
    let op = SpectralOperator::zero(1).unwrap();
    let pts: Vec<DiscretePath> = (0..4).map(|k| flat(0.25 * k as f64, 3)).collect();
    let f = [1.0, 0.2, 0.1, 0.0];
    let r = borwein_preiss(&pts, &f, 0, 1.0, 1.0, &op).unwrap();
    assert_eq!(r.index, 0);
    assert_eq!(r.anchors, vec![0]);
}

#[test]
fn bp_zero_functional_returns_the_anchor() {
    let op = SpectralOperator::new(vec![-1.0]).unwrap();
    let pts: Vec<DiscretePath> = (0..6).map(|k| flat(0.5 * (k % 3) as f64, 2 + k / 3)).collect();
    let f = [0.0; 6];
    for s in 0..6 {
        let r = borwein_preiss(&pts, &f, s, 0.1, 1.0, &op).unwrap();
        for &a in &r.anchors {
            assert_eq!(eval_gauge(&pts[a], &pts[r.index], &op, 3.0).unwrap(), 0.0);
        }
    }
}

#[test]
fn bp_rejects_bad_input() {
    let op = SpectralOperator::zero(1).unwrap();
    assert!(borwein_preiss(&[], &[], 0, 1.0, 1.0, &op).is_err());
    let pts = vec![flat(0.0, 2), flat(1.0, 2)];
    assert!(borwein_preiss(&pts, &[0.0, f64::INFINITY], 0, 1.0, 1.0, &op).is_err());
    // start is not eps-optimal.
    assert!(borwein_preiss(&pts, &[0.0, 2.0], 0, 1.0, 1.0, &op).is_err());
}
