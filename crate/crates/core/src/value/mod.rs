//! Value functional over a finite policy class, and the dynamic-programming
//! consistency check.
//!
//! `V^` is the maximum of the martingale-corrected `Y_t` estimates over the
//! enumerated class, every policy running on the same increments. It is a
//! lower bound on the value over all admissible controls.

mod regularity;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{backward_semigroup, solve_lsmc, solve_lsmc_terminal, RegressionSpec, SweepOptions};
use crate::error::{Error, Result};
use crate::model::{ControlModel, Policy};
use crate::path::{DiscretePath, PathFeatures};
use crate::rng;
use crate::sim::{simulate, SimOptions};
use crate::stats::Estimate;

pub use regularity::{
    coefficient_stability_check, regularity_check, LipschitzSample, Perturbation, RegularityReport, StabilityPoint,
    StabilityReport, TimeSample,
};

/// Largest class the enumeration accepts.
pub const MAX_CLASS_SIZE: usize = 4096;

/// Finite surrogate of the admissible controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyClass {
    /// Every assignment of a control from `U` to each piece between switches.
    OpenLoopPiecewiseConstant {
        #[serde(default)]
        switch_times: Vec<f64>,
    },
    /// Feedback `offset + gain_x x + gain_max max|X| + gain_integral int x`
    /// over the product of the listed values.
    FeedbackOnFeatures {
        #[serde(default = "zero_list")]
        gains_x: Vec<f64>,
        #[serde(default = "zero_list")]
        gains_max: Vec<f64>,
        #[serde(default = "zero_list")]
        gains_integral: Vec<f64>,
        #[serde(default = "zero_list")]
        offsets: Vec<f64>,
    },
    Explicit {
        policies: Vec<Policy>,
    },
}

fn zero_list() -> Vec<f64> {
    vec![0.0]
}

impl PolicyClass {
    /// The policies in enumeration order.
    pub fn enumerate(&self, model: &ControlModel) -> Result<Vec<Policy>> {
        let out = match self {
            PolicyClass::OpenLoopPiecewiseConstant { switch_times } => {
                let pieces = switch_times.len() + 1;
                let k = model.controls.len();
                let total = (k as f64).powi(pieces as i32);
                if total > MAX_CLASS_SIZE as f64 {
                    return Err(Error::Refusal(format!(
                        "open-loop class has {total} members (cap {MAX_CLASS_SIZE})"
                    )));
                }
                let mut out = Vec::with_capacity(total as usize);
                let mut digits = vec![0usize; pieces];
                loop {
                    out.push(Policy::OpenLoop {
                        switch_times: switch_times.clone(),
                        controls: digits.iter().map(|&d| model.controls[d]).collect(),
                    });
                    let mut pos = pieces;
                    loop {
                        if pos == 0 {
                            return Ok(out);
                        }
                        pos -= 1;
                        digits[pos] += 1;
                        if digits[pos] < k {
                            break;
                        }
                        digits[pos] = 0;
                    }
                }
            }
            PolicyClass::FeedbackOnFeatures {
                gains_x,
                gains_max,
                gains_integral,
                offsets,
            } => {
                let total = gains_x.len() * gains_max.len() * gains_integral.len() * offsets.len();
                if total > MAX_CLASS_SIZE {
                    return Err(Error::Refusal(format!(
                        "feedback class has {total} members (cap {MAX_CLASS_SIZE})"
                    )));
                }
                let mut out = Vec::with_capacity(total);
                for &gx in gains_x {
                    for &gm in gains_max {
                        for &gi in gains_integral {
                            for &o in offsets {
                                out.push(Policy::Feedback {
                                    gain_x: gx,
                                    gain_max: gm,
                                    gain_integral: gi,
                                    offset: o,
                                });
                            }
                        }
                    }
                }
                out
            }
            PolicyClass::Explicit { policies } => policies.clone(),
        };
        if out.is_empty() {
            return Err(Error::Empty("policy class"));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    /// `V^`, the best corrected estimate over the class.
    pub value: f64,
    pub se: f64,
    /// Index of the maximizing policy in enumeration order.
    pub policy_id: usize,
    pub policy: Policy,
    pub class: PolicyClass,
    /// Estimates of every member, in enumeration order.
    pub per_policy: Vec<Estimate>,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl ValueReport {
    fn from_estimates(
        class: &PolicyClass,
        policies: Vec<Policy>,
        est: Vec<Estimate>,
        dt: f64,
        opts: &SimOptions,
    ) -> Self {
        let mut best = 0;
        for (i, e) in est.iter().enumerate() {
            if e.mean > est[best].mean {
                best = i;
            }
        }
        Self {
            value: est[best].mean,
            se: est[best].se,
            policy_id: best,
            policy: policies[best].clone(),
            class: class.clone(),
            per_policy: est,
            dt,
            n_paths: opts.n_paths,
            seed: opts.seed,
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.value,
            se: self.se,
        }
    }
}

/// `V^(gamma_t)` by a full-horizon solve per policy on matched increments.
pub fn value_direct(
    model: &ControlModel,
    initial: &DiscretePath,
    class: &PolicyClass,
    opts: &SimOptions,
    spec: &RegressionSpec,
) -> Result<ValueReport> {
    let policies = class.enumerate(model)?;
    let est: Vec<Estimate> = policies
        .par_iter()
        .map(|pi| {
            let batch = simulate(
                model,
                initial,
                pi,
                &SimOptions {
                    end_index: None,
                    ..*opts
                },
            )?;
            Ok(solve_lsmc(model, &batch, spec)?.estimate())
        })
        .collect::<Result<_>>()?;
    Ok(ValueReport::from_estimates(
        class,
        policies,
        est,
        initial.grid().dt,
        opts,
    ))
}

pub type ContinuationFn = Arc<dyn Fn(&PathFeatures) -> f64 + Send + Sync>;

/// Continuation value `V^(X_{t+delta})` inside the DPP.
#[derive(Clone)]
pub enum Continuation {
    /// Closed form in the node features.
    Analytic(ContinuationFn),
    /// For each policy of `class`, a full-horizon solve on an independent
    /// batch stores a regression of `Y_{t+delta}`; the continuation is the
    /// maximum of those fits.
    Regressed { class: PolicyClass, n_paths: usize },
}

impl std::fmt::Debug for Continuation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Continuation::Analytic(_) => f.write_str("Analytic"),
            Continuation::Regressed { class, n_paths } => f
                .debug_struct("Regressed")
                .field("class", class)
                .field("n_paths", n_paths)
                .finish(),
        }
    }
}

/// Sup over the window class of the backward semigroup on `[t, t + delta]`
/// applied to the continuation. At the horizon the continuation is `phi`.
pub fn value_dpp(
    model: &ControlModel,
    initial: &DiscretePath,
    delta: f64,
    window_class: &PolicyClass,
    continuation: &Continuation,
    opts: &SimOptions,
    spec: &RegressionSpec,
) -> Result<ValueReport> {
    let grid = *initial.grid();
    let end = grid.index_of(initial.end_time() + delta)?;
    if end < initial.end_index() {
        return Err(Error::Grid(format!("window length {delta} is negative")));
    }
    let zeta: ContinuationFn = if end == grid.n_steps {
        let m = model.clone();
        Arc::new(move |f| m.terminal(f))
    } else {
        match continuation {
            Continuation::Analytic(f) => f.clone(),
            Continuation::Regressed { class, n_paths } => {
                let policies = class.enumerate(model)?;
                let fit_opts = SimOptions {
                    n_paths: *n_paths,
                    seed: rng::mix(opts.seed ^ rng::mix(rng::purpose::CONTINUATION)),
                    antithetic: false,
                    end_index: None,
                };
                let fits = policies
                    .par_iter()
                    .map(|pi| {
                        let batch = simulate(model, initial, pi, &fit_opts)?;
                        let phi: Vec<f64> = (0..batch.n_paths)
                            .map(|p| model.terminal(&batch.features(p, batch.end_index)))
                            .collect();
                        let sweep = SweepOptions { fit_steps: vec![end] };
                        let mut sol = solve_lsmc_terminal(model, &batch, spec, &phi, &sweep)?;
                        Ok(sol.fits.remove(&end).expect("requested fit"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let spec = spec.clone();
                Arc::new(move |f| {
                    let mut raw = Vec::new();
                    spec.raw(f, &mut raw);
                    fits.iter().map(|fit| fit.eval(&raw)).fold(f64::NEG_INFINITY, f64::max)
                })
            }
        }
    };
    let policies = window_class.enumerate(model)?;
    let est: Vec<Estimate> = policies
        .par_iter()
        .map(|pi| {
            let sol = backward_semigroup(model, initial, pi, delta, opts, spec, |b, p| {
                zeta(&b.features(p, b.end_index))
            })?;
            Ok(sol.estimate())
        })
        .collect::<Result<_>>()?;
    Ok(ValueReport::from_estimates(window_class, policies, est, grid.dt, opts))
}
