//! Empirical regularity of `V^` in the path and in time, and stability under
//! coefficient perturbations.

use serde::{Deserialize, Serialize};

use super::{value_direct, PolicyClass};
use crate::bsde::RegressionSpec;
use crate::error::{Error, Result};
use crate::model::ControlModel;
use crate::path::DiscretePath;
use crate::sim::SimOptions;
use crate::stats::loglog_slope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSample {
    /// `||gamma - eta||_0`.
    pub distance: f64,
    pub value_difference: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSample {
    pub t: f64,
    pub s: f64,
    pub value_difference: f64,
    /// `|V^(gamma_t) - V^(gamma_{t,s,A})| / (s - t)^{1/2}`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lipschitz: Vec<LipschitzSample>,
    pub max_lipschitz_ratio: f64,
    pub time: Vec<TimeSample>,
    pub max_time_ratio: f64,
}

/// Lipschitz ratios over `pairs` and the time modulus of `base` against its
/// semigroup extensions to each `s` of the ladder.
pub fn regularity_check(
    model: &ControlModel,
    class: &PolicyClass,
    pairs: &[(DiscretePath, DiscretePath)],
    base: &DiscretePath,
    s_ladder: &[f64],
    opts: &SimOptions,
    spec: &RegressionSpec,
) -> Result<RegularityReport> {
    let v = |path: &DiscretePath| value_direct(model, path, class, opts, spec).map(|r| r.value);
    let mut lipschitz = Vec::new();
    for (g, e) in pairs {
        let distance = g.checked_sub(e)?.sup_norm();
        let value_difference = (v(g)? - v(e)?).abs();
        let ratio = if distance > 0.0 {
            value_difference / distance
        } else {
            0.0
        };
        lipschitz.push(LipschitzSample {
            distance,
            value_difference,
            ratio,
        });
    }
    let mut time = Vec::new();
    let v0 = v(base)?;
    let t = base.end_time();
    for &s in s_ladder {
        if s <= t {
            return Err(Error::Domain(format!("ladder time {s} must exceed {t}")));
        }
        let idx = base.grid().index_of(s)?;
        let ext = base.semigroup_extend(&model.op, idx)?;
        let value_difference = (v(&ext)? - v0).abs();
        time.push(TimeSample {
            t,
            s,
            value_difference,
            ratio: value_difference / (s - t).sqrt(),
        });
    }
    Ok(RegularityReport {
        max_lipschitz_ratio: lipschitz.iter().map(|l| l.ratio).fold(0.0, f64::max),
        max_time_ratio: time.iter().map(|l| l.ratio).fold(0.0, f64::max),
        lipschitz,
        time,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// `F + eps`.
    Drift,
    /// `phi + eps`.
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub eps: f64,
    /// `sup` over the path sample of `|V^eps - V^|`.
    pub sup_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub perturbation: Perturbation,
    pub points: Vec<StabilityPoint>,
    /// Log-log slope over the nonzero `eps`.
    pub slope: f64,
    /// `max sup_difference / eps`.
    pub constant: f64,
}

/// `sup_gamma |V^eps(gamma) - V^(gamma)|` along the ladder, matched seeds.
pub fn coefficient_stability_check(
    model: &ControlModel,
    paths: &[DiscretePath],
    class: &PolicyClass,
    perturbation: Perturbation,
    eps: &[f64],
    opts: &SimOptions,
    spec: &RegressionSpec,
) -> Result<StabilityReport> {
    if paths.is_empty() {
        return Err(Error::Empty("path sample"));
    }
    let base: Vec<f64> = paths
        .iter()
        .map(|p| value_direct(model, p, class, opts, spec).map(|r| r.value))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    for &e in eps {
        let m = match perturbation {
            Perturbation::Drift => model.with_drift_shift(e),
            Perturbation::Terminal => model.with_terminal_shift(e),
        };
        let mut sup: f64 = 0.0;
        for (p, b) in paths.iter().zip(&base) {
            let ve = value_direct(&m, p, class, opts, spec)?.value;
            sup = sup.max((ve - b).abs());
        }
        points.push(StabilityPoint {
            eps: e,
            sup_difference: sup,
        });
    }
    let nz: Vec<&StabilityPoint> = points
        .iter()
        .filter(|p| p.eps != 0.0 && p.sup_difference > 0.0)
        .collect();
    let slope = if nz.len() >= 2 {
        let xs: Vec<f64> = nz.iter().map(|p| p.eps.abs()).collect();
        let ys: Vec<f64> = nz.iter().map(|p| p.sup_difference).collect();
        loglog_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    let constant = points
        .iter()
        .filter(|p| p.eps != 0.0)
        .map(|p| p.sup_difference / p.eps.abs())
        .fold(0.0, f64::max);
    Ok(StabilityReport {
        perturbation,
        points,
        slope,
        constant,
    })
}
