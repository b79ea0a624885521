//! One handler per subcommand. Handlers return the report, the acceptance
//! rules and any CSV files; they never touch the filesystem themselves.

mod bsde;
mod gauge;
mod hjb;
mod sim;
mod value;

use serde::Serialize;

use phjb_core::{ControlModel, DiscretePath, HVector, PathGrid, SimOptions};

use crate::config::{ExperimentConfig, Start, Task};
use crate::envelope::Rule;

pub use gauge::{random_pair, random_path, run_suite, BoundCount, FdErrors, GaugeSuite};

/// What a handler produced.
pub struct Outcome {
    pub report: serde_json::Value,
    pub rules: Vec<Rule>,
    pub files: Vec<(String, Vec<u8>)>,
    /// A numeric refusal discovered after the work was done (exit 3).
    pub refusal: Option<String>,
}

impl Outcome {
    pub fn new(report: impl Serialize, rules: Vec<Rule>) -> Self {
        Self {
            report: serde_json::to_value(report).expect("reports serialize"),
            rules,
            files: Vec::new(),
            refusal: None,
        }
    }

    pub fn with_file(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.files.push((name.to_string(), bytes));
        self
    }
}

pub struct Ctx<'a> {
    pub config: &'a ExperimentConfig,
    pub model: &'a ControlModel,
    pub grid: PathGrid,
}

impl Ctx<'_> {
    pub fn opts(&self) -> SimOptions {
        let n = &self.config.numerics;
        let o = SimOptions::new(n.n_paths, n.seed);
        if n.antithetic {
            o.antithetic()
        } else {
            o
        }
    }

    pub fn start(&self, s: &Start) -> phjb_core::Result<DiscretePath> {
        start_on(self.grid, s)
    }
}

pub(crate) fn start_on(grid: PathGrid, s: &Start) -> phjb_core::Result<DiscretePath> {
    DiscretePath::constant(grid, HVector(s.x0.clone()), grid.index_of(s.t0)?)
}

pub fn run_task(ctx: &Ctx) -> phjb_core::Result<Outcome> {
    match &ctx.config.task {
        Task::GaugeVerify(t) => gauge::run(ctx, t),
        Task::ItoVerify(t) => sim::ito(ctx, t),
        Task::Simulate(t) => sim::simulate(ctx, t),
        Task::BsdeSolve(t) => bsde::run(ctx, t),
        Task::Value(t) => value::value(ctx, t),
        Task::DppCheck(t) => value::dpp(ctx, t),
        Task::StabilityCheck(t) => value::stability(ctx, t),
        Task::HjbResidual(t) => hjb::residual(ctx, t),
        Task::ViscosityProbe(t) => hjb::probe(ctx, t),
        Task::BpOptimize(t) => hjb::bp(ctx, t),
    }
}
