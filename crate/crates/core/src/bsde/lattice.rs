//! Trinomial lattice for scalar models (`N = d = 1`).
//!
//! States live on `x_j = j h`; with running-maximum dependence the lattice
//! also carries `m = max |X|` on the same spacing. Each step matches the
//! conditional mean `e^{lambda dt}(x + F dt)` and variance
//! `(e^{lambda dt} G)^2 dt` of the exponential-Euler transition exactly.

use serde::{Deserialize, Serialize};

use super::regression::RegressionSpec;
use crate::error::{Error, Result};
use crate::hilbert::HVector;
use crate::model::{ControlModel, Dependence, Policy};
use crate::path::{DiscretePath, PathFeatures};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSolution {
    pub y0: f64,
    pub z0: f64,
    pub spacing: f64,
    pub x_nodes: usize,
    pub max_nodes: usize,
}

/// Number of standard deviations covered on each side of the start.
const WIDTH: f64 = 8.0;

/// Backward induction on the trinomial lattice with the same Picard
/// treatment of the driver as the regression solver.
pub fn solve_lattice_1d(
    model: &ControlModel,
    initial: &DiscretePath,
    policy: &Policy,
    spec: &RegressionSpec,
) -> Result<LatticeSolution> {
    if model.dim() != 1 || model.noise_dim != 1 {
        return Err(Error::Unsupported("the lattice oracle needs N = d = 1".into()));
    }
    if model.dependence == Dependence::General {
        return Err(Error::Unsupported("lattice states carry only (x, max|x|)".into()));
    }
    let (track_max, uses_integral) = match policy {
        Policy::Feedback {
            gain_max,
            gain_integral,
            ..
        } => (*gain_max != 0.0, *gain_integral != 0.0),
        _ => (false, false),
    };
    if uses_integral {
        return Err(Error::Unsupported(
            "lattice policies cannot read the running integral".into(),
        ));
    }
    let track_max = track_max || model.dependence == Dependence::RunningMax;
    let grid = *initial.grid();
    let dt = grid.dt;
    if dt * model.lipschitz_y >= 0.5 {
        return Err(Error::PicardContraction(dt * model.lipschitz_y));
    }
    let start = initial.end_index();
    let n_steps = grid.n_steps;
    let lam = model.op.eigenvalues()[0];
    let decay = (lam * dt).exp();
    let feat0 = initial.features();
    let x0 = feat0.endpoint[0];

    // Spacing from the largest one-step variance over the control set.
    let mut g_max: f64 = 0.0;
    let mut f_max: f64 = 0.0;
    for &u in &model.controls {
        g_max = g_max.max(model.diffusion(&feat0, u)[(0, 0)].abs());
        f_max = f_max.max(model.drift(&feat0, u)[0].abs());
    }
    if g_max == 0.0 {
        return Err(Error::Unsupported("the lattice oracle needs G != 0".into()));
    }
    let v = (decay * g_max).powi(2) * dt;
    let ideal = (2.0 * v).sqrt();
    let h = if x0 == 0.0 {
        ideal
    } else {
        let n = (x0.abs() / ideal).round().max(1.0);
        x0.abs() / n
    };
    let horizon = grid.horizon() - grid.time(start);
    let reach = x0.abs() + f_max * horizon + WIDTH * g_max * horizon.sqrt() + 1.0;
    let half = (reach / h).ceil() as i64;
    let nx = (2 * half + 1) as usize;
    let x_of = |j: usize| (j as i64 - half) as f64 * h;
    let j0 = (x0 / h).round() as i64 + half;
    let m0 = feat0.running_max;
    let (nm, mi0) = if track_max {
        let k = m0 / h;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Unsupported(format!(
                "running max {m0} of the initial path is off the lattice spacing {h}"
            )));
        }
        (half as usize + 1, k.round() as usize)
    } else {
        (1, 0)
    };
    let m_of = |mi: usize| if track_max { mi as f64 * h } else { 0.0 };
    let idx = |j: usize, mi: usize| j * nm + mi;

    let mut feat = PathFeatures::start(HVector(vec![0.0]));
    let set_feat = |feat: &mut PathFeatures, j: usize, mi: usize, step: usize| {
        let x = x_of(j);
        feat.endpoint[0] = x;
        feat.running_max = if track_max { m_of(mi) } else { x.abs().max(m0) };
        feat.pre_sup = feat.running_max;
        feat.step = step;
        feat.time = grid.time(step);
    };

    let mut next = vec![0.0; nx * nm];
    for j in 0..nx {
        for mi in 0..nm {
            set_feat(&mut feat, j, mi, n_steps);
            next[idx(j, mi)] = model.terminal(&feat);
        }
    }
    let mut cur = vec![0.0; nx * nm];
    let mut z0 = 0.0;
    for i in (start..n_steps).rev() {
        for j in 0..nx {
            let xabs_j = (j as i64 - half).unsigned_abs() as usize;
            for mi in 0..nm {
                if track_max && mi < xabs_j {
                    continue;
                }
                set_feat(&mut feat, j, mi, i);
                let u = policy.control(model, &feat)?;
                let drift = model.drift(&feat, u)[0];
                let g = model.diffusion(&feat, u)[(0, 0)];
                let mu = decay * (x_of(j) + drift * dt);
                let var = (decay * g).powi(2) * dt;
                let c = (mu / h).round() as i64 + half;
                if c < 1 || c > nx as i64 - 2 {
                    // Outside the covered band: frozen boundary, never reached
                    // from the start within WIDTH standard deviations.
                    cur[idx(j, mi)] = next[idx(j, mi)];
                    continue;
                }
                let c = c as usize;
                let e = (mu - x_of(c)) / h;
                let s = var / (h * h);
                let pu = 0.5 * (s + e * e + e);
                let pd = 0.5 * (s + e * e - e);
                let pm = 1.0 - s - e * e;
                if pu < -1e-12 || pd < -1e-12 || pm < -1e-12 {
                    return Err(Error::Unsupported(format!(
                        "negative trinomial weight at step {i} (s = {s:.3}, e = {e:.3})"
                    )));
                }
                let mut ey = 0.0;
                let mut ez = 0.0;
                for (jj, pr) in [(c - 1, pd), (c, pm), (c + 1, pu)] {
                    let mm = if track_max {
                        mi.max((jj as i64 - half).unsigned_abs() as usize).min(nm - 1)
                    } else {
                        0
                    };
                    let yn = next[idx(jj, mm)];
                    ey += pr * yn;
                    ez += pr * yn * (x_of(jj) - mu);
                }
                let zval = if g != 0.0 { ez / (decay * g * dt) } else { 0.0 };
                let mut val = ey;
                for _ in 0..spec.picard_iterations {
                    val = ey + model.driver(&feat, val, &[zval], u) * dt;
                }
                cur[idx(j, mi)] = val;
                if i == start && j as i64 == j0 && mi == mi0 {
                    z0 = zval;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(LatticeSolution {
        y0: next[idx(j0 as usize, mi0)],
        z0,
        spacing: h,
        x_nodes: nx,
        max_nodes: nm,
    })
}
