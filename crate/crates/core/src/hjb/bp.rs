//! Borwein-Preiss perturbed maximization on a finite path lattice.
//!
//! Gauge `rho = Upsilon^3(., .) + |s - t|^2`, weights `delta_i = delta_0 2^{-i}`.
//! Stage `k` maximizes `f - sum_{i<k} delta_i rho(x_i, .)` over points no
//! earlier than `x_{k-1}`. Because each stage is solved exactly and ties keep
//! the current anchor, the sequence is stationary from stage 1 on: the limit
//! `x^` is the stage-1 maximizer and every later anchor equals it, so the
//! total perturbation is `delta_0 rho(x_0, .) + delta_0 rho(x^, .)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::eval_gauge;
use crate::error::{Error, Result};
use crate::hilbert::SpectralOperator;
use crate::path::DiscretePath;

pub const GAUGE_M: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpCertificate {
    /// `rho(x_0, x^)` against `eps / delta_0`.
    pub rho_start: f64,
    pub rho_start_bound: f64,
    /// `max_{i >= 1} rho(x_i, x^) 2^i delta_0 / eps`; must be `<= 1`.
    pub rho_tail_ratio: f64,
    pub i_holds: bool,
    /// `f(x^) - sum delta_i rho(x_i, x^)` against `f(x_0)`.
    pub perturbed_value: f64,
    pub start_value: f64,
    pub ii_holds: bool,
    /// Smallest margin of the strict inequality over `y != x^`, `t_y >= t^`.
    pub iii_margin: f64,
    pub iii_holds: bool,
}

impl BpCertificate {
    pub fn passed(&self) -> bool {
        self.i_holds && self.ii_holds && self.iii_holds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    /// Lattice index of `x^`.
    pub index: usize,
    pub time: f64,
    /// Distinct anchors in order; the last one repeats forever.
    pub anchors: Vec<usize>,
    /// Weight of the repeated tail anchor, `sum_{i >= 1} delta_i`.
    pub tail_weight: f64,
    pub stages: usize,
    pub certificate: BpCertificate,
}

fn same_path(a: &DiscretePath, b: &DiscretePath) -> bool {
    a.end_index() == b.end_index() && a.values() == b.values()
}

/// Runs the construction from `points[start]`.
pub fn borwein_preiss(
    points: &[DiscretePath],
    f: &[f64],
    start: usize,
    eps: f64,
    delta0: f64,
    op: &SpectralOperator,
) -> Result<BpResult> {
    if points.is_empty() {
        return Err(Error::Empty("lattice"));
    }
    if f.len() != points.len() {
        return Err(Error::Dimension {
            expected: points.len(),
            got: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "f is unbounded (non-finite values) on the lattice".into(),
        ));
    }
    if start >= points.len() {
        return Err(Error::Domain(format!("start index {start} is outside the lattice")));
    }
    if !(eps > 0.0 && delta0 > 0.0) {
        return Err(Error::Domain("eps and delta_0 must be positive".into()));
    }
    let sup = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if f[start] < sup - eps {
        return Err(Error::Domain(format!(
            "start is not eps-optimal: f(start) = {}, sup = {sup}, eps = {eps}",
            f[start]
        )));
    }
    let x0 = &points[start];
    let t0 = x0.end_index();
    let rho0 = gauge_row(points, x0, op)?;

    // Stage 1: exact argmax; ties keep the anchor, then the lowest index.
    let mut best = start;
    let mut best_val = f[start];
    for (k, p) in points.iter().enumerate() {
        if p.end_index() < t0 || k == start {
            continue;
        }
        let v = f[k] - delta0 * rho0[k];
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    let xh = &points[best];
    let stages = if same_path(xh, x0) { 1 } else { 2 };
    let rho_h = gauge_row(points, xh, op)?;

    // Certificate with anchors (x_0, x^, x^, ...).
    let tail_weight = delta0; // sum_{i >= 1} delta_0 2^{-i}
    let rho_start = rho0[best];
    let rho_start_bound = eps / delta0;
    let rho_tail_ratio = rho_h[best] * 2.0 * delta0 / eps;
    let i_holds = rho_start <= rho_start_bound && rho_h[best] == 0.0;
    let perturbed_value = f[best] - delta0 * rho0[best] - tail_weight * rho_h[best];
    let ii_holds = perturbed_value >= f[start];
    let th = xh.end_index();
    let mut iii_margin = f64::INFINITY;
    for (k, p) in points.iter().enumerate() {
        if p.end_index() < th || same_path(p, xh) {
            continue;
        }
        let v = f[k] - delta0 * rho0[k] - tail_weight * rho_h[k];
        iii_margin = iii_margin.min(perturbed_value - v);
    }
    let iii_holds = iii_margin > 0.0;
    let certificate = BpCertificate {
        rho_start,
        rho_start_bound,
        rho_tail_ratio,
        i_holds,
        perturbed_value,
        start_value: f[start],
        ii_holds,
        iii_margin,
        iii_holds,
    };
    if !certificate.passed() {
        return Err(Error::Certificate(format!("{certificate:?}")));
    }
    Ok(BpResult {
        index: best,
        time: xh.end_time(),
        anchors: if best == start { vec![start] } else { vec![start, best] },
        tail_weight,
        stages,
        certificate,
    })
}

/// `rho(anchor, y)` for every lattice point (`0` where `y` is earlier, unused).
fn gauge_row(points: &[DiscretePath], anchor: &DiscretePath, op: &SpectralOperator) -> Result<Vec<f64>> {
    points
        .par_iter()
        .map(|p| {
            if p.end_index() < anchor.end_index() {
                Ok(0.0)
            } else {
                eval_gauge(anchor, p, op, GAUGE_M)
            }
        })
        .collect()
}
