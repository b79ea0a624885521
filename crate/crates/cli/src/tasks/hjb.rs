use serde::Serialize;

use phjb_core::calculus::TestFunctionalG;
use phjb_core::hjb::{
    borwein_preiss, classical_residual, monotonicity_normalization_check, monotonicity_samples, terminal_mismatch,
    viscosity_probe, BpResult, MonotonicityReport, PathLattice, ProbeReport, SmoothCandidate,
};
use phjb_core::{ControlModel, DiscretePath, Error, HVector, PathGrid};

use super::{Ctx, Outcome};
use crate::config::{BpObjective, BpOptimizeTask, CandidateSpec, HjbResidualTask, LatticeSpec, ViscosityProbeTask};
use crate::envelope::Rule;

fn candidate(model: &ControlModel, spec: &CandidateSpec) -> phjb_core::Result<SmoothCandidate> {
    match *spec {
        CandidateSpec::Riccati { time_shift } => {
            if model.name != "lq-1d" {
                return Err(Error::Domain(
                    "the Riccati candidate belongs to the lq-1d preset".into(),
                ));
            }
            let c = SmoothCandidate::lq(model.horizon);
            Ok(if time_shift != 0.0 {
                c.with_time_shift(time_shift)
            } else {
                c
            })
        }
    }
}

fn lattice(grid: PathGrid, spec: &LatticeSpec) -> phjb_core::Result<PathLattice> {
    Ok(PathLattice {
        base: DiscretePath::constant(grid, HVector(spec.base_x.clone()), grid.n_steps)?,
        free: spec.free.clone(),
        end_indices: spec.end_indices.clone(),
    })
}

#[derive(Serialize)]
struct ResidualOutput {
    candidate: String,
    points: usize,
    max_abs_residual: f64,
    terminal_mismatch: f64,
    monotonicity: MonotonicityReport,
}

pub(crate) fn residual(ctx: &Ctx, t: &HjbResidualTask) -> phjb_core::Result<Outcome> {
    let cand = candidate(ctx.model, &t.candidate)?;
    let dim = ctx.model.dim();
    let point = |x: f64| {
        let mut v = HVector::zeros(dim);
        v[0] = x;
        v
    };
    let mut csv = String::from("t,x,residual\n");
    let mut worst: f64 = 0.0;
    for i in 0..t.n_t {
        let step = i * t.t_stride;
        for j in 0..t.n_x {
            let x = t.x_min + t.x_step * j as f64;
            let path = DiscretePath::constant(ctx.grid, point(x), step)?;
            let r = classical_residual(ctx.model, &cand, &path)?;
            worst = worst.max(r.abs());
            csv.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", ctx.grid.time(step), x, r));
        }
    }
    let terminal: Vec<DiscretePath> = (0..t.n_x)
        .map(|j| DiscretePath::constant(ctx.grid, point(t.x_min + t.x_step * j as f64), ctx.grid.n_steps))
        .collect::<Result<_, _>>()?;
    let mismatch = terminal_mismatch(ctx.model, &cand, &terminal)?;
    let samples = monotonicity_samples(ctx.model, &ctx.grid, t.monotonicity_samples, ctx.config.numerics.seed);
    let monotonicity = monotonicity_normalization_check(ctx.model, &samples)?;
    let rules = vec![
        Rule::at_most("classical-residual", worst, t.tolerance),
        Rule::at_most("terminal-condition", mismatch, t.tolerance),
    ];
    Ok(Outcome::new(
        ResidualOutput {
            candidate: cand.name.clone(),
            points: t.n_t * t.n_x,
            max_abs_residual: worst,
            terminal_mismatch: mismatch,
            monotonicity,
        },
        rules,
    )
    .with_file("residuals.csv", csv.into_bytes()))
}

pub(crate) fn probe(ctx: &Ctx, t: &ViscosityProbeTask) -> phjb_core::Result<Outcome> {
    let lat = lattice(ctx.grid, &t.lattice)?;
    let n = lat.size()?;
    if t.gamma_hat_index >= n {
        return Err(Error::Domain(format!(
            "gamma_hat_index {} outside a lattice of {n} points",
            t.gamma_hat_index
        )));
    }
    let gamma_hat = lat.point(t.gamma_hat_index)?;
    let w = candidate(ctx.model, &t.w)?;
    let phi = candidate(ctx.model, &t.phi)?;
    let g = TestFunctionalG::weighted_upsilon(t.g_weight.clone());
    let w_fn = |p: &DiscretePath| w.value(p);
    let report: ProbeReport = viscosity_probe(ctx.model, &w_fn, &phi, &g, &gamma_hat, t.mode, &lat, t.tolerance)?;
    let mut out = Outcome::new(&report, Vec::new());
    match report.verdict {
        Some(v) => {
            out.rules.push(Rule::new(
                "viscosity-inequality",
                v,
                format!("slack {:e}", report.slack.unwrap_or(f64::NAN)),
            ));
            out.rules.push(Rule::count(
                "terminal-condition",
                report.terminal_samples - report.terminal_violations,
                report.terminal_samples,
            ));
        }
        None => {
            out.refusal = Some(format!(
                "extremum certificate failed: extremum {:e} at lattice point {}",
                report.certificate.extremum, report.certificate.extremum_index
            ));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct BpOutput {
    points: usize,
    start: usize,
    result: Option<BpResult>,
    /// Set when the certificate did not hold.
    failure: Option<String>,
}

pub(crate) fn bp(ctx: &Ctx, t: &BpOptimizeTask) -> phjb_core::Result<Outcome> {
    let lat = lattice(ctx.grid, &t.lattice)?;
    let points = lat.points()?;
    let f: Vec<f64> = match t.objective {
        BpObjective::Riccati => {
            let c = candidate(ctx.model, &CandidateSpec::Riccati { time_shift: 0.0 })?;
            points.iter().map(|p| c.value(p)).collect()
        }
        BpObjective::NegEndpointSq { drift } => points
            .iter()
            .map(|p| -p.endpoint().norm_sq() + drift * p.end_time())
            .collect(),
    };
    let start = match t.start {
        Some(s) => s,
        None => {
            let mut best = 0;
            for (k, v) in f.iter().enumerate() {
                if *v > f[best] {
                    best = k;
                }
            }
            best
        }
    };
    let (result, failure) = match borwein_preiss(&points, &f, start, t.eps, t.delta0, &ctx.model.op) {
        Ok(r) => (Some(r), None),
        Err(Error::Certificate(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let rules = match &result {
        Some(r) => {
            let c = &r.certificate;
            vec![
                Rule::new(
                    "bp-i",
                    c.i_holds,
                    format!("rho(x0, x^) = {:e} <= {:e}", c.rho_start, c.rho_start_bound),
                ),
                Rule::new(
                    "bp-ii",
                    c.ii_holds,
                    format!("{:e} >= {:e}", c.perturbed_value, c.start_value),
                ),
                Rule::new("bp-iii", c.iii_holds, format!("margin {:e}", c.iii_margin)),
            ]
        }
        None => vec![Rule::new("bp-certificate", false, failure.clone().unwrap_or_default())],
    };
    Ok(Outcome::new(
        BpOutput {
            points: points.len(),
            start,
            result,
            failure,
        },
        rules,
    ))
}
