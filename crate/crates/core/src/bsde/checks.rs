//! Backward semigroup, comparison suite and a-priori perturbation ladders.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lsmc::{solve_lsmc, solve_lsmc_terminal, BSDEGridSolution, SweepOptions};
use super::regression::RegressionSpec;
use crate::error::{Error, Result};
use crate::model::{ControlModel, Policy};
use crate::path::DiscretePath;
use crate::sim::{simulate, SimOptions, TrajectoryBatch};
use crate::stats::{loglog_slope, mean, Estimate};

/// `Y(t)` of the BSDE on `[t, t + delta]` with terminal values `zeta(batch, p)`
/// evaluated at node `t + delta`.
pub fn backward_semigroup(
    model: &ControlModel,
    initial: &DiscretePath,
    policy: &Policy,
    delta: f64,
    opts: &SimOptions,
    spec: &RegressionSpec,
    zeta: impl Fn(&TrajectoryBatch, usize) -> f64 + Sync,
) -> Result<BSDEGridSolution> {
    let grid = initial.grid();
    let end = grid.index_of(initial.end_time() + delta)?;
    if end < initial.end_index() {
        return Err(Error::Grid(format!("window length {delta} is negative")));
    }
    let batch = simulate(model, initial, policy, &opts.until(end))?;
    let z: Vec<f64> = (0..batch.n_paths).into_par_iter().map(|p| zeta(&batch, p)).collect();
    solve_lsmc_terminal(model, &batch, spec, &z, &SweepOptions::default())
}

/// Default slope of the `C dt` part of the discretisation tolerances.
pub const DEFAULT_DT_CONSTANT: f64 = 5.0;

/// Calibrates `C` in `tol = 3 SE + C dt` on the linear-driver oracle
/// `q = alpha y`, `phi = 1`, whose exact value is `e^{alpha T}`: the observed
/// bias divided by `dt`, floored at 1.
pub fn calibrate_dt_constant(dt: f64, n_paths: usize, seed: u64) -> Result<f64> {
    let alpha = 0.1;
    let model = crate::model::uncontrolled(1.0, 0.0, 1.0, alpha)?
        .with_driver_replaced(alpha, move |_, y, _, _| alpha * y)
        .with_terminal(|_| 1.0);
    let grid = crate::path::PathGrid::with_horizon(1.0, dt)?;
    let x0 = DiscretePath::constant(grid, crate::hilbert::HVector(vec![0.0]), 0)?;
    let batch = simulate(
        &model,
        &x0,
        &Policy::Constant { u: 0.0 },
        &SimOptions::new(n_paths, seed),
    )?;
    let sol = solve_lsmc(&model, &batch, &RegressionSpec::default())?;
    let bias = (sol.estimate().mean - alpha.exp()).abs();
    Ok((bias / dt).max(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `min_{i, p} (Y1_i - Y2_i)`.
    pub min_difference: f64,
    /// Martingale-corrected estimate of `Y1_t - Y2_t`.
    pub y0_difference: Estimate,
    pub tolerance: f64,
    /// Paths with `phi1 < phi2`, plus nodes with `q1 < q2` at `(Y2, Z2)`.
    pub precondition_violations: usize,
    pub passed: bool,
}

/// Comparison check on one batch (both models share `F`, `G` and the batch).
pub fn comparison_check(
    m1: &ControlModel,
    m2: &ControlModel,
    batch: &TrajectoryBatch,
    spec: &RegressionSpec,
    dt_constant: f64,
) -> Result<ComparisonReport> {
    let s1 = solve_lsmc(m1, batch, spec)?;
    let s2 = solve_lsmc(m2, batch, spec)?;
    let np = batch.n_paths;
    let mut violations = 0usize;
    for p in 0..np {
        let f = batch.features(p, batch.end_index);
        if m1.terminal(&f) < m2.terminal(&f) {
            violations += 1;
        }
    }
    for i in batch.start_index..batch.end_index {
        violations += (0..np)
            .into_par_iter()
            .filter(|&p| {
                let f = batch.features(p, i);
                let u = batch.control(p, i);
                let (y, z) = (s2.y(i, p), s2.z(i, p));
                m1.driver(&f, y, z, u) < m2.driver(&f, y, z, u)
            })
            .count();
    }
    let mut min_difference = f64::INFINITY;
    for i in batch.start_index..=batch.end_index {
        for (a, b) in s1.y_row(i).iter().zip(s2.y_row(i)) {
            min_difference = min_difference.min(a - b);
        }
    }
    let y0_difference = corrected_difference(&s1, &s2, batch);
    let tolerance = 3.0 * y0_difference.se + dt_constant * batch.grid.dt;
    Ok(ComparisonReport {
        min_difference,
        y0_difference,
        tolerance,
        precondition_violations: violations,
        passed: min_difference >= -tolerance,
    })
}

/// Mean and SE of the pathwise difference of the corrected estimators.
fn corrected_difference(s1: &BSDEGridSolution, s2: &BSDEGridSolution, batch: &TrajectoryBatch) -> Estimate {
    let d: Vec<f64> = s1
        .corrected_samples()
        .iter()
        .zip(s2.corrected_samples())
        .map(|(a, b)| a - b)
        .collect();
    if batch.antithetic {
        Estimate::of_pairs(&d)
    } else {
        Estimate::of(&d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub size: f64,
    /// `E sup_i |Y1_i - Y2_i|^p`.
    pub numerator: f64,
    /// Numerator over `size^p`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub p: f64,
    pub terminal: Vec<LadderPoint>,
    /// `(1 + L dt + (L dt)^2)^{p n}`, which tends to `e^{p L T}`.
    pub terminal_bound: f64,
    pub initial: Vec<LadderPoint>,
    /// Log-log slope of the initial-shift numerators.
    pub initial_slope: f64,
    pub passed: bool,
}

/// Terminal-shift and initial-shift ladders with matched increments.
pub fn apriori_estimate_check(
    model: &ControlModel,
    initial: &DiscretePath,
    policy: &Policy,
    p: f64,
    terminal_eps: &[f64],
    initial_shifts: &[f64],
    opts: &SimOptions,
    spec: &RegressionSpec,
) -> Result<AprioriReport> {
    if p < 2.0 {
        return Err(Error::Domain(format!("moment order {p} must be at least 2")));
    }
    let base_batch = simulate(model, initial, policy, opts)?;
    let base = solve_lsmc(model, &base_batch, spec)?;
    let sup_moment = |a: &BSDEGridSolution, b: &BSDEGridSolution| {
        let per_path: Vec<f64> = (0..a.n_paths)
            .map(|k| {
                (a.start_index..=a.end_index)
                    .map(|i| (a.y(i, k) - b.y(i, k)).abs())
                    .fold(0.0, f64::max)
                    .powf(p)
            })
            .collect();
        mean(&per_path)
    };
    let mut terminal = Vec::new();
    for &eps in terminal_eps {
        let shifted = model.with_terminal_shift(eps);
        let s = solve_lsmc(&shifted, &base_batch, spec)?;
        let num = sup_moment(&s, &base);
        terminal.push(LadderPoint {
            size: eps,
            numerator: num,
            ratio: if eps != 0.0 { num / eps.abs().powf(p) } else { 0.0 },
        });
    }
    let mut init = Vec::new();
    for &h in initial_shifts {
        let shift = crate::hilbert::HVector(vec![h; initial.dim()]);
        let values: Vec<_> = initial
            .values()
            .iter()
            .map(|v| v.checked_add(&shift))
            .collect::<Result<_>>()?;
        let moved = DiscretePath::new(*initial.grid(), values)?;
        let batch = simulate(model, &moved, policy, opts)?;
        let s = solve_lsmc(model, &batch, spec)?;
        let num = sup_moment(&s, &base);
        init.push(LadderPoint {
            size: h,
            numerator: num,
            ratio: if h != 0.0 { num / h.abs().powf(p) } else { 0.0 },
        });
    }
    // Discrete analogue of e^{p L T}: two Picard iterations amplify a shift
    // by at most 1 + L dt + (L dt)^2 per step.
    let ldt = model.lipschitz_y * initial.grid().dt;
    let n = (initial.grid().n_steps - initial.end_index()) as f64;
    let terminal_bound = (1.0 + ldt + ldt * ldt).powf(p * n);
    let slack = 1e-9;
    let terminal_ok = terminal.iter().all(|l| l.ratio <= terminal_bound * (1.0 + slack));
    let nz: Vec<&LadderPoint> = init.iter().filter(|l| l.size != 0.0 && l.numerator > 0.0).collect();
    let initial_slope = if nz.len() >= 2 {
        let xs: Vec<f64> = nz.iter().map(|l| l.size.abs()).collect();
        let ys: Vec<f64> = nz.iter().map(|l| l.numerator).collect();
        loglog_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    // Numerators must shrink along the ladder: slope near p, certainly positive.
    let initial_ok = nz.len() < 2 || initial_slope > 0.5 * p;
    Ok(AprioriReport {
        p,
        terminal,
        terminal_bound,
        initial: init,
        initial_slope,
        passed: terminal_ok && initial_ok,
    })
}
