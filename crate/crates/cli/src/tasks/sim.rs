use serde::Serialize;

use phjb_core::calculus::{EndpointNormSq, LinearEndpoint, Upsilon};
use phjb_core::sim::{ito_inequality_verify, ito_verify, ItoInequalityReport, ItoReport};
use phjb_core::{simulate as run_sim, DiscretePath, HVector, PathGrid};

use super::{Ctx, Outcome};
use crate::config::{ItoFunctional, ItoVerifyTask, SimulateTask};
use crate::envelope::Rule;

#[derive(Serialize)]
struct ItoEntry {
    functional: ItoFunctional,
    report: ItoReport,
}

#[derive(Serialize)]
struct ItoOutput {
    functionals: Vec<ItoEntry>,
    inequality: Option<ItoInequalityReport>,
}

pub(crate) fn ito(ctx: &Ctx, t: &ItoVerifyTask) -> phjb_core::Result<Outcome> {
    let n = &ctx.config.numerics;
    let x0 = HVector(t.start.x0.clone());
    let mut entries = Vec::new();
    let mut rules = Vec::new();
    for f in &t.functionals {
        let report = match f {
            ItoFunctional::Linear { c } => ito_verify(
                &LinearEndpoint(HVector(c.clone())),
                ctx.model,
                &x0,
                t.start.t0,
                &t.policy,
                &t.dts,
                n.n_paths,
                n.seed,
            )?,
            ItoFunctional::EndpointNormSq => ito_verify(
                &EndpointNormSq,
                ctx.model,
                &x0,
                t.start.t0,
                &t.policy,
                &t.dts,
                n.n_paths,
                n.seed,
            )?,
            ItoFunctional::Upsilon { m } => ito_verify(
                &Upsilon::new(*m)?,
                ctx.model,
                &x0,
                t.start.t0,
                &t.policy,
                &t.dts,
                n.n_paths,
                n.seed,
            )?,
        };
        let label = match f {
            ItoFunctional::Linear { .. } => "linear".to_string(),
            ItoFunctional::EndpointNormSq => "endpoint-norm-sq".to_string(),
            ItoFunctional::Upsilon { m } => format!("upsilon-M{m}"),
        };
        let means: Vec<f64> = report.levels.iter().map(|l| l.abs_residual.mean).collect();
        let exact_zero = means.iter().all(|&m| m < 1e-12);
        // Sort by step size so "decreasing" reads along refinement.
        let mut by_dt: Vec<(f64, f64)> = report.levels.iter().map(|l| (l.dt, l.abs_residual.mean)).collect();
        by_dt.sort_by(|a, b| b.0.total_cmp(&a.0));
        let decreasing = by_dt.windows(2).all(|w| w[1].1 <= w[0].1);
        rules.push(Rule::new(
            format!("ito-residual-decreasing-{label}"),
            exact_zero || decreasing,
            format!("{means:?}"),
        ));
        if !exact_zero && report.levels.len() > 1 {
            rules.push(Rule::at_least(format!("ito-order-{label}"), report.order, t.min_order));
        }
        entries.push(ItoEntry {
            functional: f.clone(),
            report,
        });
    }
    let inequality = match &t.inequality {
        Some(q) => {
            let grid = PathGrid::with_horizon(ctx.model.horizon, q.dt)?;
            let end = grid.index_of(t.start.t0)?;
            let gamma = DiscretePath::constant(grid, x0.clone(), end)?;
            let eta = DiscretePath::constant(grid, HVector(q.eta0.clone()), end)?;
            let mut opts = ctx.opts();
            opts.end_index = None;
            let r = ito_inequality_verify(ctx.model, &gamma, &eta, q.m, &t.policy, &opts, 0.0)?;
            let bound = -(3.0 * r.defect.se + 5.0 * q.dt);
            rules.push(Rule::at_least("ito-inequality-mean-defect", r.defect.mean, bound));
            Some(r)
        }
        None => None,
    };
    Ok(Outcome::new(
        ItoOutput {
            functionals: entries,
            inequality,
        },
        rules,
    ))
}

#[derive(Serialize)]
struct SimOutput {
    n_paths: usize,
    steps: usize,
    /// `E |X_T|^2` and `E max_s |X(s)|` over the batch.
    terminal_norm_sq: phjb_core::Estimate,
    running_max: phjb_core::Estimate,
    csv_paths: usize,
}

pub(crate) fn simulate(ctx: &Ctx, t: &SimulateTask) -> phjb_core::Result<Outcome> {
    let start = ctx.start(&t.start)?;
    let batch = run_sim(ctx.model, &start, &t.policy, &ctx.opts())?;
    let end = batch.end_index;
    let norms: Vec<f64> = (0..batch.n_paths)
        .map(|p| batch.state(p, end).iter().map(|v| v * v).sum())
        .collect();
    let maxes: Vec<f64> = (0..batch.n_paths).map(|p| batch.running_max(p, end)).collect();
    let finite = norms.iter().chain(&maxes).all(|v| v.is_finite());
    let kept = t.csv_paths.min(batch.n_paths);
    let mut csv = String::from("path,step,time");
    for k in 1..=batch.dim {
        csv.push_str(&format!(",c{k}"));
    }
    csv.push_str(",running_max\n");
    for p in 0..kept {
        for i in batch.start_index..=end {
            csv.push_str(&format!("{p},{i},{:.16e}", batch.grid.time(i)));
            for x in batch.state(p, i) {
                csv.push_str(&format!(",{x:.16e}"));
            }
            csv.push_str(&format!(",{:.16e}\n", batch.running_max(p, i)));
        }
    }
    let out = SimOutput {
        n_paths: batch.n_paths,
        steps: end - batch.start_index,
        terminal_norm_sq: phjb_core::Estimate::of(&norms),
        running_max: phjb_core::Estimate::of(&maxes),
        csv_paths: kept,
    };
    Ok(Outcome::new(
        out,
        vec![Rule::new("finite-states", finite, "all terminal states finite")],
    )
    .with_file("trajectories.csv", csv.into_bytes()))
}
