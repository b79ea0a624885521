use std::sync::Arc;

use serde::Serialize;

use phjb_core::bsde::calibrate_dt_constant;
use phjb_core::value::{
    coefficient_stability_check, regularity_check, value_direct, value_dpp, Continuation, Perturbation,
    RegularityReport, StabilityReport, ValueReport,
};
use phjb_core::{DiscretePath, Error};

use super::{start_on, Ctx, Outcome};
use crate::config::{ContinuationSpec, DppCheckTask, StabilityCheckTask, Start, ValueTask};
use crate::envelope::Rule;

fn per_policy_csv(r: &ValueReport) -> Vec<u8> {
    let mut s = String::from("policy_id,mean,se\n");
    for (i, e) in r.per_policy.iter().enumerate() {
        s.push_str(&format!("{i},{:.16e},{:.16e}\n", e.mean, e.se));
    }
    s.into_bytes()
}

pub(crate) fn value(ctx: &Ctx, t: &ValueTask) -> phjb_core::Result<Outcome> {
    let start = ctx.start(&t.start)?;
    let r = value_direct(
        ctx.model,
        &start,
        &t.class,
        &ctx.opts(),
        &ctx.config.numerics.regression,
    )?;
    let mut rules = Vec::new();
    if let Some(x) = &t.expected {
        rules.push(Rule::at_most(
            "expected-value",
            (r.value - x.value).abs(),
            x.tolerance + 3.0 * r.se,
        ));
    }
    let csv = per_policy_csv(&r);
    Ok(Outcome::new(&r, rules).with_file("policies.csv", csv))
}

#[derive(Serialize)]
struct DppOutput {
    direct: ValueReport,
    dpp: ValueReport,
    difference: f64,
    /// Step-size constant `C` of the tolerance, calibrated on the linear-driver oracle.
    dt_constant: f64,
    tolerance: f64,
}

pub(crate) fn dpp(ctx: &Ctx, t: &DppCheckTask) -> phjb_core::Result<Outcome> {
    let start = ctx.start(&t.start)?;
    let spec = &ctx.config.numerics.regression;
    let opts = ctx.opts();
    let continuation = match &t.continuation {
        ContinuationSpec::Regressed { n_paths } => Continuation::Regressed {
            class: t.class.clone(),
            n_paths: *n_paths,
        },
        ContinuationSpec::Riccati => {
            if ctx.model.name != "lq-1d" {
                return Err(Error::Domain(
                    "the Riccati continuation belongs to the lq-1d preset".into(),
                ));
            }
            let horizon = ctx.model.horizon;
            Continuation::Analytic(Arc::new(move |f| -f.endpoint.norm_sq() - (horizon - f.time)))
        }
    };
    let direct = value_direct(ctx.model, &start, &t.class, &opts, spec)?;
    let dpp = value_dpp(ctx.model, &start, t.delta, &t.class, &continuation, &opts, spec)?;
    let dt = ctx.grid.dt;
    let c = calibrate_dt_constant(dt, t.calibration_paths, ctx.config.numerics.seed)?;
    let tolerance = 3.0 * (direct.se + dpp.se) + c * dt;
    let difference = dpp.value - direct.value;
    let rules = vec![Rule::at_most("dpp-consistency", difference.abs(), tolerance)];
    Ok(Outcome::new(
        DppOutput {
            direct,
            dpp,
            difference,
            dt_constant: c,
            tolerance,
        },
        rules,
    ))
}

#[derive(Serialize)]
struct StabilityOutput {
    stability: StabilityReport,
    regularity: Option<RegularityReport>,
}

fn at_origin(ctx: &Ctx, x: &[f64]) -> phjb_core::Result<DiscretePath> {
    start_on(
        ctx.grid,
        &Start {
            x0: x.to_vec(),
            t0: 0.0,
        },
    )
}

pub(crate) fn stability(ctx: &Ctx, t: &StabilityCheckTask) -> phjb_core::Result<Outcome> {
    let spec = &ctx.config.numerics.regression;
    let opts = ctx.opts();
    let paths: Vec<DiscretePath> = t.points.iter().map(|x| at_origin(ctx, x)).collect::<Result<_, _>>()?;
    let stability = coefficient_stability_check(ctx.model, &paths, &t.class, t.perturbation, &t.eps, &opts, spec)?;
    let mut rules = Vec::new();
    match t.perturbation {
        Perturbation::Terminal => {
            let worst = stability
                .points
                .iter()
                .map(|p| (p.sup_difference - p.eps).abs())
                .fold(0.0, f64::max);
            rules.push(Rule::at_most("terminal-shift-exact", worst, 1e-9));
        }
        Perturbation::Drift => {
            rules.push(Rule::at_least("stability-slope", stability.slope, t.min_slope));
            let mut pts: Vec<(f64, f64)> = stability.points.iter().map(|p| (p.eps, p.sup_difference)).collect();
            pts.sort_by(|a, b| b.0.total_cmp(&a.0));
            rules.push(Rule::new(
                "stability-vanishing",
                pts.windows(2).all(|w| w[1].1 <= w[0].1),
                format!("{pts:?}"),
            ));
        }
    }
    let regularity = match &t.regularity {
        Some(r) => {
            let pairs: Vec<(DiscretePath, DiscretePath)> = r
                .pairs
                .iter()
                .map(|(a, b)| Ok((at_origin(ctx, a)?, at_origin(ctx, b)?)))
                .collect::<phjb_core::Result<_>>()?;
            let base = start_on(ctx.grid, &r.base)?;
            let rep = regularity_check(ctx.model, &t.class, &pairs, &base, &r.s_ladder, &opts, spec)?;
            rules.push(Rule::at_most(
                "lipschitz-no-blowup",
                rep.max_lipschitz_ratio,
                r.blowup * r.lipschitz_bound,
            ));
            rules.push(Rule::at_most(
                "time-modulus-no-blowup",
                rep.max_time_ratio,
                r.blowup * r.time_bound,
            ));
            Some(rep)
        }
        None => None,
    };
    Ok(Outcome::new(StabilityOutput { stability, regularity }, rules))
}
