//! Least-squares Monte Carlo backward sweep.
//!
//! ```text
//! Yhat_i = E[Y_{i+1} | F_i]
//! Z_i    = E[(Y_{i+1} - Yhat_i) dW_i^T | F_i] / dt
//! Y_i    = Yhat_i + q(X_{<=i}, Y_i, Z_i, u_i) dt     (Picard, implicit in Y)
//! ```
//!
//! Conditional expectations are regressions on the declared feature basis.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::regression::{RegressionSpec, Regressor, StepFit};
use crate::error::{Error, Result};
use crate::model::ControlModel;
use crate::sim::TrajectoryBatch;
use crate::stats::{mean, Estimate};

/// `(Y, Z)` on every simulated node of a batch window.
#[derive(Clone, Debug)]
pub struct BSDEGridSolution {
    pub start_index: usize,
    pub end_index: usize,
    pub n_paths: usize,
    pub noise_dim: usize,
    pub dt: f64,
    pub spec: RegressionSpec,
    /// Condition number and surviving basis size per step (start..end).
    pub conditions: Vec<f64>,
    pub basis_sizes: Vec<usize>,
    /// `Y_{start}` from the backward sweep.
    pub y0: f64,
    /// Pathwise cost `zeta + sum_i q_i dt`; its mean estimates `Y_start`.
    pub cost: Estimate,
    /// Martingale-corrected pathwise cost `zeta + sum_i q_i dt - sum_i Z_i dW_i`.
    pub corrected: Estimate,
    /// Regression of `Y_i` on the basis at the requested steps.
    pub fits: BTreeMap<usize, StepFit>,
    y: Vec<f64>,
    z: Vec<f64>,
    corrected_paths: Vec<f64>,
}

impl BSDEGridSolution {
    /// `Y` at global node `i` for path `p`.
    pub fn y(&self, i: usize, p: usize) -> f64 {
        self.y[(i - self.start_index) * self.n_paths + p]
    }

    /// All paths at node `i`.
    pub fn y_row(&self, i: usize) -> &[f64] {
        let k = (i - self.start_index) * self.n_paths;
        &self.y[k..k + self.n_paths]
    }

    /// `Z` on step `i` for path `p`.
    pub fn z(&self, i: usize, p: usize) -> &[f64] {
        let k = ((i - self.start_index) * self.n_paths + p) * self.noise_dim;
        &self.z[k..k + self.noise_dim]
    }

    /// Per-path corrected costs; their mean is [`Self::corrected`].
    pub fn corrected_samples(&self) -> &[f64] {
        &self.corrected_paths
    }

    /// Best available estimate of `Y_start` (martingale-corrected mean).
    pub fn estimate(&self) -> Estimate {
        self.corrected
    }

    /// Rows `step,mean_Y,se_Y,mean_Z1..Zd`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let zs: Vec<String> = (1..=self.noise_dim).map(|k| format!("mean_Z{k}")).collect();
        writeln!(out, "step,mean_Y,se_Y,{}", zs.join(","))?;
        for i in self.start_index..=self.end_index {
            let e = Estimate::of(self.y_row(i));
            write!(out, "{i},{:.16e},{:.16e}", e.mean, e.se)?;
            for k in 0..self.noise_dim {
                if i < self.end_index {
                    let col: Vec<f64> = (0..self.n_paths).map(|p| self.z(i, p)[k]).collect();
                    write!(out, ",{:.16e}", mean(&col))?;
                } else {
                    write!(out, ",")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// JSON-ready summary of the regression and the estimates.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "start_index": self.start_index,
            "end_index": self.end_index,
            "n_paths": self.n_paths,
            "dt": self.dt,
            "regression": self.spec,
            "max_condition_number": self.conditions.iter().cloned().fold(0.0, f64::max),
            "condition_numbers": self.conditions,
            "basis_sizes": self.basis_sizes,
            "y0": self.y0,
            "cost": self.cost,
            "corrected": self.corrected,
        })
    }
}

/// Options of a backward sweep beyond the regression spec.
#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Steps at which a regression of `Y_i` itself is stored.
    pub fit_steps: Vec<usize>,
}

/// Solves the BSDE with terminal `phi(X_T)` over the whole batch.
pub fn solve_lsmc(model: &ControlModel, batch: &TrajectoryBatch, spec: &RegressionSpec) -> Result<BSDEGridSolution> {
    if batch.end_index != batch.grid.n_steps {
        return Err(Error::Grid("solve_lsmc needs a batch that reaches the horizon".into()));
    }
    let terminal: Vec<f64> = (0..batch.n_paths)
        .into_par_iter()
        .map(|p| model.terminal(&batch.features(p, batch.end_index)))
        .collect();
    solve_lsmc_terminal(model, batch, spec, &terminal, &SweepOptions::default())
}

/// Solves on `[start, end]` of the batch with per-path terminal values `zeta`.
pub fn solve_lsmc_terminal(
    model: &ControlModel,
    batch: &TrajectoryBatch,
    spec: &RegressionSpec,
    zeta: &[f64],
    opts: &SweepOptions,
) -> Result<BSDEGridSolution> {
    let np = batch.n_paths;
    if zeta.len() != np {
        return Err(Error::Dimension {
            expected: np,
            got: zeta.len(),
        });
    }
    let dt = batch.grid.dt;
    if dt * model.lipschitz_y >= 0.5 {
        return Err(Error::PicardContraction(dt * model.lipschitz_y));
    }
    let d = batch.noise_dim;
    let start = batch.start_index;
    let end = batch.end_index;
    let steps = end - start;
    let mut y = vec![0.0; (steps + 1) * np];
    let mut z = vec![0.0; steps * np * d];
    y[steps * np..].copy_from_slice(zeta);
    let mut conditions = vec![0.0; steps];
    let mut basis_sizes = vec![0; steps];
    let mut fits = BTreeMap::new();
    // Pathwise integrals of q and of Z dW.
    let mut q_int = vec![0.0; np];
    let mut zdw_int = vec![0.0; np];

    let mut probe = Vec::new();
    spec.raw(&batch.features(0, start), &mut probe);
    let n_raw = probe.len();

    for i in (start..end).rev() {
        let li = i - start;
        let mut raw = vec![0.0; np * n_raw];
        raw.par_chunks_mut(n_raw).enumerate().for_each_init(
            || (batch.features(0, i), Vec::with_capacity(n_raw)),
            |(f, r), (p, out)| {
                batch.features_into(p, i, f);
                spec.raw(f, r);
                out.copy_from_slice(r);
            },
        );
        let reg = Regressor::fit(&raw, n_raw, spec, i)?;
        conditions[li] = reg.condition;
        basis_sizes[li] = reg.n_terms();
        let next = &y[(li + 1) * np..(li + 2) * np];
        let yhat = reg.fitted(&reg.coefficients(next));
        let mut zrow = vec![0.0; np * d];
        // Leave-one-out Z for the control variate: the in-sample fit contains
        // each path's own dW, which biases sum Z dW by O(steps * terms / n).
        let mut zloo = vec![0.0; np * d];
        let lev = reg.leverages();
        for k in 0..d {
            let target: Vec<f64> = (0..np)
                .map(|p| (next[p] - yhat[p]) * batch.increment(p, i)[k] / dt)
                .collect();
            let zk = reg.fitted(&reg.coefficients(&target));
            for p in 0..np {
                zrow[p * d + k] = zk[p];
                zloo[p * d + k] = (zk[p] - lev[p] * target[p]) / (1.0 - lev[p]);
            }
        }
        let iters = spec.picard_iterations;
        let (cur, qs): (Vec<f64>, Vec<f64>) = (0..np)
            .into_par_iter()
            .map_init(
                || batch.features(0, i),
                |f, p| {
                    batch.features_into(p, i, f);
                    let u = batch.control(p, i);
                    let zp = &zrow[p * d..(p + 1) * d];
                    let mut v = yhat[p];
                    for _ in 0..iters {
                        v = yhat[p] + model.driver(f, v, zp, u) * dt;
                    }
                    (v, model.driver(f, v, zp, u))
                },
            )
            .unzip();
        for p in 0..np {
            q_int[p] += qs[p] * dt;
            let dw = batch.increment(p, i);
            zdw_int[p] += (0..d).map(|k| zloo[p * d + k] * dw[k]).sum::<f64>();
        }
        if opts.fit_steps.contains(&i) {
            let c = reg.coefficients(&cur);
            fits.insert(i, reg.step_fit(c));
        }
        y[li * np..(li + 1) * np].copy_from_slice(&cur);
        z[li * np * d..(li + 1) * np * d].copy_from_slice(&zrow);
    }

    let cost: Vec<f64> = (0..np).map(|p| zeta[p] + q_int[p]).collect();
    let corrected: Vec<f64> = (0..np).map(|p| cost[p] - zdw_int[p]).collect();
    let est = |v: &[f64]| {
        if batch.antithetic {
            Estimate::of_pairs(v)
        } else {
            Estimate::of(v)
        }
    };
    Ok(BSDEGridSolution {
        start_index: start,
        end_index: end,
        n_paths: np,
        noise_dim: d,
        dt,
        spec: spec.clone(),
        conditions,
        basis_sizes,
        y0: if np > 0 { y[0] } else { f64::NAN },
        cost: est(&cost),
        corrected: est(&corrected),
        fits,
        y,
        z,
        corrected_paths: corrected,
    })
}
