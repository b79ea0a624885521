use serde::Serialize;

use phjb_core::bsde::{solve_lattice_1d, solve_lsmc, LatticeSolution};
use phjb_core::simulate;

use super::{Ctx, Outcome};
use crate::config::{BsdeMethod, BsdeSolveTask};
use crate::envelope::Rule;

#[derive(Serialize)]
struct BsdeOutput {
    lsmc: Option<serde_json::Value>,
    lattice: Option<LatticeSolution>,
    /// `lsmc.corrected.mean - lattice.y0` when both ran.
    difference: Option<f64>,
}

pub(crate) fn run(ctx: &Ctx, t: &BsdeSolveTask) -> phjb_core::Result<Outcome> {
    let spec = &ctx.config.numerics.regression;
    let start = ctx.start(&t.start)?;
    let mut rules = Vec::new();
    let mut files = Vec::new();
    let lsmc = if t.method != BsdeMethod::Lattice {
        let batch = simulate(ctx.model, &start, &t.policy, &ctx.opts())?;
        let sol = solve_lsmc(ctx.model, &batch, spec)?;
        let mut csv = Vec::new();
        sol.write_csv(&mut csv)
            .map_err(|e| phjb_core::Error::Parse(e.to_string()))?;
        files.push(("bsde.csv".to_string(), csv));
        let manifest = sol.manifest();
        files.push((
            "bsde_manifest.json".to_string(),
            serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
        ));
        Some((sol.estimate(), manifest))
    } else {
        None
    };
    let lattice = if t.method != BsdeMethod::Lsmc {
        Some(solve_lattice_1d(ctx.model, &start, &t.policy, spec)?)
    } else {
        None
    };
    let difference = match (&lsmc, &lattice) {
        (Some((e, _)), Some(l)) => {
            let d = e.mean - l.y0;
            rules.push(Rule::at_most("lsmc-lattice-agreement", d.abs(), t.agreement));
            Some(d)
        }
        _ => None,
    };
    if let Some(x) = &t.expected {
        let (mean, se) = match (&lsmc, &lattice) {
            (Some((e, _)), _) => (e.mean, e.se),
            (None, Some(l)) => (l.y0, 0.0),
            (None, None) => unreachable!("one method always runs"),
        };
        rules.push(Rule::at_most(
            "expected-y0",
            (mean - x.value).abs(),
            x.tolerance + 3.0 * se,
        ));
    }
    let mut out = Outcome::new(
        BsdeOutput {
            lsmc: lsmc.map(|(_, m)| m),
            lattice,
            difference,
        },
        rules,
    );
    out.files = files;
    Ok(out)
}
