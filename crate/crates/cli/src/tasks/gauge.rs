//! Seeded property suite for the gauge functionals: the sixth-power
//! equivalence bounds, the doubling inequality and closed-form versus
//! finite-difference derivatives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use phjb_core::calculus::{eval_s, eval_upsilon, fd_derivatives, fd_richardson, FunctionalDerivatives};
use phjb_core::rng::{self, fill_normal, purpose};
use phjb_core::{DiscretePath, HVector, PathGrid};

use super::{Ctx, Outcome};
use crate::config::GaugeVerifyTask;
use crate::envelope::Rule;

const PAIR_OFFSET: u64 = 1 << 32;
const FD_OFFSET: u64 = 2 << 32;

fn walk(r: &mut ChaCha8Rng, grid: PathGrid, dim: usize, end: usize) -> DiscretePath {
    let scale = 10f64.powf(r.random_range(-1.0..1.0));
    let step = scale / (end.max(1) as f64).sqrt();
    let mut x = vec![0.0; dim];
    fill_normal(r, scale * scale, &mut x);
    let mut values = vec![HVector(x.clone())];
    let mut dx = vec![0.0; dim];
    for _ in 0..end {
        fill_normal(r, step * step, &mut dx);
        for (a, b) in x.iter_mut().zip(&dx) {
            *a += b;
        }
        values.push(HVector(x.clone()));
    }
    // Stretch the endpoint so both sides of |x| = pre-sup are well covered.
    let stretch = r.random_range(0.0..2.5);
    if let Some(last) = values.last_mut() {
        *last = last.scale(stretch);
    }
    DiscretePath::new(grid, values).expect("nodes fit the grid")
}

fn suite_grid(max_steps: usize) -> PathGrid {
    PathGrid::new(1.0 / max_steps as f64, max_steps).expect("positive step count")
}

/// Path `index` of the property suite: random length, scale and shape.
pub fn random_path(seed: u64, index: u64, dim: usize, max_steps: usize) -> DiscretePath {
    let mut r = rng::stream(seed, purpose::PROPERTY_SUITE, index);
    let end = r.random_range(0..=max_steps);
    walk(&mut r, suite_grid(max_steps), dim, end)
}

/// Pair `index` of the suite; both paths end at the same node.
pub fn random_pair(seed: u64, index: u64, dim: usize, max_steps: usize) -> (DiscretePath, DiscretePath) {
    let mut r = rng::stream(seed, purpose::PROPERTY_SUITE, PAIR_OFFSET + index);
    let end = r.random_range(0..=max_steps);
    let grid = suite_grid(max_steps);
    let a = walk(&mut r, grid, dim, end);
    let b = walk(&mut r, grid, dim, end);
    (a, b)
}

fn ups(path: &DiscretePath, m: f64) -> f64 {
    eval_upsilon(path, m).expect("M >= 1 was validated").value
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCount {
    pub m: f64,
    pub passed: usize,
    pub total: usize,
    /// `min Upsilon / ||gamma||^6` and `max Upsilon / ||gamma||^6` over the sample.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FdErrors {
    pub functional: String,
    /// Worst scaled error of the raw central differences at `h` and `h/2`.
    pub coarse: f64,
    pub fine: f64,
    /// Worst scaled error after Richardson extrapolation.
    pub extrapolated: f64,
    /// Worst `|d_t|` from a one-step flat extension, relative to `||gamma||^6`.
    pub horizontal: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeSuite {
    pub bounds: Vec<BoundCount>,
    pub doubling_passed: usize,
    pub doubling_total: usize,
    pub doubling_max_ratio: f64,
    /// `2^5 Upsilon^3(1) + 2^5 Upsilon^3(1)` against `Upsilon^3(2)` for constant paths.
    pub equality_lhs: f64,
    pub equality_rhs: f64,
    pub fd: Vec<FdErrors>,
    pub fd_samples: usize,
    /// Paths whose endpoint norm is within the bump of the pre-endpoint sup.
    pub fd_excluded: usize,
}

/// Error of `approx` against `exact` on the homogeneity scale: both functionals
/// are sixth-power homogeneous, so first derivatives are measured against
/// `sup^5` and second derivatives against `sup^4`. Entry-wise relative error
/// is useless where the closed form cancels to (near) zero.
fn rel_error(approx: &FunctionalDerivatives, exact: &FunctionalDerivatives, sup: f64) -> f64 {
    let e1 = approx
        .dx
        .0
        .iter()
        .zip(&exact.dx.0)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let e2 = approx
        .dxx
        .iter()
        .zip(exact.dxx.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (e1 / sup.powi(5)).max(e2 / sup.powi(4))
}

pub fn run_suite(t: &GaugeVerifyTask, seed: u64) -> GaugeSuite {
    let paths: Vec<DiscretePath> = (0..t.n_paths as u64)
        .into_par_iter()
        .map(|k| random_path(seed, k, t.dim, t.max_steps))
        .collect();
    let bounds =
        t.ms.iter()
            .map(|&m| {
                let checks: Vec<(bool, f64)> = paths
                    .par_iter()
                    .map(|p| {
                        let sup6 = p.sup_norm().powi(6);
                        let v = ups(p, m);
                        let tol = t.slack * sup6.max(1.0);
                        let ok = v >= 8.0 / 27.0 * sup6 - tol && v <= (m + 1.0) * sup6 + tol;
                        (ok, if sup6 > 0.0 { v / sup6 } else { f64::NAN })
                    })
                    .collect();
                let ratios = checks.iter().map(|c| c.1).filter(|r| r.is_finite());
                BoundCount {
                    m,
                    passed: checks.iter().filter(|c| c.0).count(),
                    total: checks.len(),
                    min_ratio: ratios.clone().fold(f64::INFINITY, f64::min),
                    max_ratio: ratios.fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();

    let doubling: Vec<(bool, f64)> = (0..t.n_pairs as u64)
        .into_par_iter()
        .map(|k| {
            let (a, b) = random_pair(seed, k, t.dim, t.max_steps);
            let sum = a.checked_add(&b).expect("same grid and end");
            let lhs = 32.0 * ups(&a, 3.0) + 32.0 * ups(&b, 3.0);
            let rhs = ups(&sum, 3.0);
            (
                lhs >= rhs - t.slack * lhs.max(1.0),
                if lhs > 0.0 { rhs / lhs } else { 0.0 },
            )
        })
        .collect();

    let one = DiscretePath::constant(suite_grid(t.max_steps), HVector::basis(t.dim, 0), 3).expect("fits");
    let two = one.checked_add(&one).expect("same grid");
    let equality_lhs = 32.0 * ups(&one, 3.0) + 32.0 * ups(&one, 3.0);
    let equality_rhs = ups(&two, 3.0);

    let fd_paths: Vec<DiscretePath> = (0..t.n_fd as u64)
        .map(|k| random_path(seed, FD_OFFSET + k, t.dim, t.max_steps))
        .filter(|p| p.sup_norm() > 0.0)
        .collect();
    let usable: Vec<&DiscretePath> = fd_paths
        .iter()
        .filter(|p| {
            let h = t.fd_bump * p.sup_norm();
            (p.endpoint().norm() - p.pre_sup()).abs() > 2.0 * h
        })
        .collect();
    let fd_excluded = fd_paths.len() - usable.len();
    let s_fn = |p: &DiscretePath| eval_s(p).value;
    let u_fn = |p: &DiscretePath| ups(p, 3.0);
    let fd = [("S", 0usize), ("Upsilon^3", 1usize)]
        .iter()
        .map(|&(name, which)| {
            let errs: Vec<[f64; 4]> = usable
                .par_iter()
                .map(|p| {
                    let sup = p.sup_norm();
                    let h = t.fd_bump * sup;
                    let (exact, rich, horiz) = if which == 0 {
                        let r = fd_richardson(&s_fn, p, h).expect("valid bump");
                        (eval_s(p), r, horizontal(&s_fn, p, h))
                    } else {
                        let r = fd_richardson(&u_fn, p, h).expect("valid bump");
                        (eval_upsilon(p, 3.0).expect("M = 3"), r, horizontal(&u_fn, p, h))
                    };
                    [
                        rel_error(&rich.coarse, &exact, sup),
                        rel_error(&rich.fine, &exact, sup),
                        rel_error(&rich.extrapolated, &exact, sup),
                        (horiz - exact.dt).abs() / sup.powi(6),
                    ]
                })
                .collect();
            let worst = |i: usize| errs.iter().map(|e| e[i]).fold(0.0, f64::max);
            FdErrors {
                functional: name.to_string(),
                coarse: worst(0),
                fine: worst(1),
                extrapolated: worst(2),
                horizontal: worst(3),
            }
        })
        .collect();

    GaugeSuite {
        bounds,
        doubling_passed: doubling.iter().filter(|d| d.0).count(),
        doubling_total: doubling.len(),
        doubling_max_ratio: doubling.iter().map(|d| d.1).fold(0.0, f64::max),
        equality_lhs,
        equality_rhs,
        fd,
        fd_samples: usable.len(),
        fd_excluded,
    }
}

/// Forward flat-extension difference, or the closed-form `0` at the horizon.
fn horizontal<F: Fn(&DiscretePath) -> f64 + Sync>(f: &F, p: &DiscretePath, h: f64) -> f64 {
    if p.end_index() == p.grid().n_steps {
        return 0.0;
    }
    fd_derivatives(f, p, h).map(|d| d.dt).unwrap_or(f64::NAN)
}

pub(crate) fn run(ctx: &Ctx, t: &GaugeVerifyTask) -> phjb_core::Result<Outcome> {
    let suite = run_suite(t, ctx.config.numerics.seed);
    let mut rules: Vec<Rule> = suite
        .bounds
        .iter()
        .map(|b| Rule::count(format!("sixth-power-bounds-M{}", b.m), b.passed, b.total))
        .collect();
    rules.push(Rule::count("doubling-M3", suite.doubling_passed, suite.doubling_total));
    rules.push(Rule::at_most(
        "doubling-equality-constant-pair",
        (suite.equality_lhs - suite.equality_rhs).abs(),
        t.slack * suite.equality_rhs,
    ));
    for e in &suite.fd {
        rules.push(Rule::at_most(
            format!("fd-richardson-{}", e.functional),
            e.extrapolated,
            t.fd_tolerance,
        ));
        rules.push(Rule::new(
            format!("fd-h-sweep-{}", e.functional),
            e.fine <= e.coarse,
            format!("h/2: {:e}, h: {:e}", e.fine, e.coarse),
        ));
        rules.push(Rule::at_most(
            format!("fd-horizontal-{}", e.functional),
            e.horizontal,
            t.fd_tolerance,
        ));
    }
    Ok(Outcome::new(&suite, rules))
}
