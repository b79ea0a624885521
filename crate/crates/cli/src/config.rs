//! Experiment configuration: one JSON document with a model block, a
//! numerics block and a task block. Parsing reports JSON pointers.

use serde::{Deserialize, Serialize};

use phjb_core::bsde::RegressionSpec;
use phjb_core::calculus::TimeWeight;
use phjb_core::hjb::{FreeNode, ProbeMode};
use phjb_core::value::{Perturbation, PolicyClass};
use phjb_core::{ControlModel, ModelPreset, PathGrid, Policy};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub model: ModelPreset,
    pub numerics: Numerics,
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub regression: RegressionSpec,
}

/// Constant initial path `x0` on `[0, t0]`. An empty `x0` means the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Start {
    #[serde(default)]
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
}

impl Default for Start {
    fn default() -> Self {
        Self {
            x0: Vec::new(),
            t0: 0.0,
        }
    }
}

fn still() -> Policy {
    Policy::Constant { u: 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Task {
    GaugeVerify(GaugeVerifyTask),
    ItoVerify(ItoVerifyTask),
    Simulate(SimulateTask),
    BsdeSolve(BsdeSolveTask),
    Value(ValueTask),
    DppCheck(DppCheckTask),
    HjbResidual(HjbResidualTask),
    ViscosityProbe(ViscosityProbeTask),
    BpOptimize(BpOptimizeTask),
    StabilityCheck(StabilityCheckTask),
}

impl Task {
    pub fn op(&self) -> &'static str {
        match self {
            Task::GaugeVerify(_) => "gauge-verify",
            Task::ItoVerify(_) => "ito-verify",
            Task::Simulate(_) => "simulate",
            Task::BsdeSolve(_) => "bsde-solve",
            Task::Value(_) => "value",
            Task::DppCheck(_) => "dpp-check",
            Task::HjbResidual(_) => "hjb-residual",
            Task::ViscosityProbe(_) => "viscosity-probe",
            Task::BpOptimize(_) => "bp-optimize",
            Task::StabilityCheck(_) => "stability-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeVerifyTask {
    #[serde(default = "gauge_ms")]
    pub ms: Vec<f64>,
    #[serde(default = "ten_thousand")]
    pub n_paths: usize,
    #[serde(default = "ten_thousand")]
    pub n_pairs: usize,
    #[serde(default = "thousand")]
    pub n_fd: usize,
    #[serde(default = "two")]
    pub dim: usize,
    #[serde(default = "sixteen")]
    pub max_steps: usize,
    /// Vertical bump relative to the sup norm.
    #[serde(default = "fd_bump")]
    pub fd_bump: f64,
    #[serde(default = "fd_tolerance")]
    pub fd_tolerance: f64,
    #[serde(default = "slack")]
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ItoFunctional {
    Linear { c: Vec<f64> },
    EndpointNormSq,
    Upsilon { m: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoInequalitySpec {
    #[serde(default = "three")]
    pub m: f64,
    /// Endpoint of the comparison path `eta`, constant up to `t0`.
    #[serde(default)]
    pub eta0: Vec<f64>,
    #[serde(default = "milli")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoVerifyTask {
    pub functionals: Vec<ItoFunctional>,
    #[serde(default)]
    pub start: Start,
    #[serde(default = "still")]
    pub policy: Policy,
    #[serde(default = "ito_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "min_order")]
    pub min_order: f64,
    #[serde(default)]
    pub inequality: Option<ItoInequalitySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    #[serde(default)]
    pub start: Start,
    #[serde(default = "still")]
    pub policy: Policy,
    /// Paths written to `trajectories.csv` (the first ones of the batch).
    #[serde(default = "csv_paths")]
    pub csv_paths: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BsdeMethod {
    Lsmc,
    Lattice,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub value: f64,
    /// Absolute tolerance; the acceptance band is `tolerance + 3 SE`.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeSolveTask {
    #[serde(default)]
    pub start: Start,
    #[serde(default = "still")]
    pub policy: Policy,
    pub method: BsdeMethod,
    /// `|lsmc - lattice|` bound when both methods run.
    #[serde(default = "milli")]
    pub agreement: f64,
    #[serde(default)]
    pub expected: Option<Expected>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueTask {
    #[serde(default)]
    pub start: Start,
    pub class: PolicyClass,
    #[serde(default)]
    pub expected: Option<Expected>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContinuationSpec {
    /// Value of the same class started at the window end, on fresh seeds.
    Regressed { n_paths: usize },
    /// `-x^2 - (T - t)`; only meaningful on the `lq-1d` preset.
    Riccati,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppCheckTask {
    #[serde(default)]
    pub start: Start,
    pub delta: f64,
    pub class: PolicyClass,
    pub continuation: ContinuationSpec,
    /// Paths of the one-off calibration of the step-size constant.
    #[serde(default = "calibration_paths")]
    pub calibration_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CandidateSpec {
    /// `-|x|^2 - (T - t)`, plus `time_shift * t`.
    Riccati {
        #[serde(default)]
        time_shift: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbResidualTask {
    pub candidate: CandidateSpec,
    #[serde(default = "x_min")]
    pub x_min: f64,
    #[serde(default = "x_step")]
    pub x_step: f64,
    #[serde(default = "twenty")]
    pub n_x: usize,
    /// Time nodes `0, stride, 2 stride, ...` of the numerics grid.
    #[serde(default = "twenty")]
    pub n_t: usize,
    #[serde(default = "one")]
    pub t_stride: usize,
    #[serde(default = "nano")]
    pub tolerance: f64,
    #[serde(default = "thousand")]
    pub monotonicity_samples: usize,
}

/// A finite path lattice around a constant base path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub base_x: Vec<f64>,
    pub free: Vec<FreeNode>,
    pub end_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityProbeTask {
    pub mode: ProbeMode,
    /// Functional being probed.
    pub w: CandidateSpec,
    /// Smooth part of the test functional.
    pub phi: CandidateSpec,
    /// Gauge part `h(t) Upsilon^3` of the test functional.
    #[serde(default = "zero_weight")]
    pub g_weight: TimeWeight,
    /// `gamma_hat` is lattice point `gamma_hat_index`.
    pub gamma_hat_index: usize,
    pub lattice: LatticeSpec,
    #[serde(default = "nano")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BpObjective {
    /// The Riccati candidate evaluated on the lattice.
    Riccati,
    /// `-|gamma(t)|^2 + drift * t`.
    NegEndpointSq { drift: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpOptimizeTask {
    pub objective: BpObjective,
    pub lattice: LatticeSpec,
    /// Start index; `None` picks the lattice maximizer.
    #[serde(default)]
    pub start: Option<usize>,
    pub eps: f64,
    pub delta0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySpec {
    /// Pairs of initial endpoints at `t = 0`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub base: Start,
    pub s_ladder: Vec<f64>,
    /// Oracle bounds; a ratio above `blowup * bound` fails.
    pub lipschitz_bound: f64,
    pub time_bound: f64,
    #[serde(default = "ten")]
    pub blowup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityCheckTask {
    pub class: PolicyClass,
    /// Initial endpoints at `t = 0`; the sup is over these.
    pub points: Vec<Vec<f64>>,
    pub perturbation: Perturbation,
    #[serde(default = "eps_ladder")]
    pub eps: Vec<f64>,
    #[serde(default = "min_slope")]
    pub min_slope: f64,
    #[serde(default)]
    pub regularity: Option<RegularitySpec>,
}

fn gauge_ms() -> Vec<f64> {
    vec![1.0, 3.0, 10.0]
}
fn ten_thousand() -> usize {
    10_000
}
fn thousand() -> usize {
    1_000
}
fn two() -> usize {
    2
}
fn sixteen() -> usize {
    16
}
fn twenty() -> usize {
    20
}
fn one() -> usize {
    1
}
fn fd_bump() -> f64 {
    1e-3
}
fn fd_tolerance() -> f64 {
    1e-5
}
fn slack() -> f64 {
    1e-12
}
fn three() -> f64 {
    3.0
}
fn ten() -> f64 {
    10.0
}
fn milli() -> f64 {
    1e-3
}
fn nano() -> f64 {
    1e-9
}
fn ito_dts() -> Vec<f64> {
    vec![4e-3, 2e-3, 1e-3]
}
fn min_order() -> f64 {
    0.2
}
fn csv_paths() -> usize {
    100
}
fn calibration_paths() -> usize {
    4000
}
fn x_min() -> f64 {
    -2.5
}
fn x_step() -> f64 {
    0.25
}
fn zero_weight() -> TimeWeight {
    TimeWeight::Zero
}
fn eps_ladder() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn min_slope() -> f64 {
    0.8
}

/// A configuration error located by a JSON pointer.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemaError {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "schema violation at {at}: {}", self.message)
    }
}

impl std::error::Error for SchemaError {}

fn schema(pointer: &str, message: impl Into<String>) -> SchemaError {
    SchemaError {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape(variant))),
            Segment::Unknown => {}
        }
    }
    out
}

/// The config together with the model it describes.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub model: ControlModel,
    pub grid: PathGrid,
}

/// Parses and validates a config document.
pub fn parse(text: &str) -> Result<Loaded, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let outer = SchemaError {
            message: e.inner().to_string(),
            pointer,
        };
        if outer.pointer == "/task" {
            refine_task(text).unwrap_or(outer)
        } else {
            outer
        }
    })?;
    validate(config)
}

/// The `op`-tagged task is buffered before dispatch, which loses the inner
/// path. Re-reads the object as its variant to point at the offending field.
fn refine_task(text: &str) -> Option<SchemaError> {
    fn inner<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Option<SchemaError> {
        serde_path_to_error::deserialize::<_, T>(v).err().map(|e| SchemaError {
            pointer: format!("/task{}", pointer_of(e.path())),
            message: e.inner().to_string(),
        })
    }
    let root: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut task = root.get("task")?.as_object()?.clone();
    let op = task.remove("op")?;
    let v = serde_json::Value::Object(task);
    match op.as_str()? {
        "gauge-verify" => inner::<GaugeVerifyTask>(v),
        "ito-verify" => inner::<ItoVerifyTask>(v),
        "simulate" => inner::<SimulateTask>(v),
        "bsde-solve" => inner::<BsdeSolveTask>(v),
        "value" => inner::<ValueTask>(v),
        "dpp-check" => inner::<DppCheckTask>(v),
        "hjb-residual" => inner::<HjbResidualTask>(v),
        "viscosity-probe" => inner::<ViscosityProbeTask>(v),
        "bp-optimize" => inner::<BpOptimizeTask>(v),
        "stability-check" => inner::<StabilityCheckTask>(v),
        _ => None,
    }
}

/// Semantic checks the serde layer cannot express; fills the implicit origin.
pub fn validate(mut config: ExperimentConfig) -> Result<Loaded, SchemaError> {
    if config.version != CONFIG_VERSION {
        return Err(schema(
            "/version",
            format!("unsupported version {} (expected {CONFIG_VERSION})", config.version),
        ));
    }
    let model = config
        .model
        .build()
        .map_err(|e| schema("/model", format!("preset {}: {e}", config.model.name())))?;
    let n = &config.numerics;
    if !(n.dt > 0.0 && n.dt.is_finite()) {
        return Err(schema("/numerics/dt", "dt must be positive"));
    }
    let grid = PathGrid::with_horizon(model.horizon, n.dt).map_err(|_| {
        schema(
            "/numerics/dt",
            format!("dt = {} does not divide T = {}", n.dt, model.horizon),
        )
    })?;
    if n.n_paths < 2 {
        return Err(schema(
            "/numerics/n_paths",
            "at least two paths are needed for a standard error",
        ));
    }
    if n.antithetic && !n.n_paths.is_multiple_of(2) {
        return Err(schema(
            "/numerics/n_paths",
            "antithetic pairing needs an even path count",
        ));
    }
    let dim = model.dim();
    let fill = |s: &mut Start, at: &str| -> Result<(), SchemaError> {
        if s.x0.is_empty() {
            s.x0 = vec![0.0; dim];
        }
        if s.x0.len() != dim {
            return Err(schema(
                &format!("{at}/x0"),
                format!("expected {dim} coordinates, got {}", s.x0.len()),
            ));
        }
        if grid.index_of(s.t0).is_err() || s.t0 >= model.horizon {
            return Err(schema(&format!("{at}/t0"), "t0 must be a grid node before the horizon"));
        }
        Ok(())
    };
    match &mut config.task {
        Task::ItoVerify(t) => {
            fill(&mut t.start, "/task/start")?;
            if t.functionals.is_empty() {
                return Err(schema("/task/functionals", "at least one functional"));
            }
            for (k, f) in t.functionals.iter().enumerate() {
                if let ItoFunctional::Linear { c } = f {
                    if c.len() != dim {
                        return Err(schema(
                            &format!("/task/functionals/{k}/c"),
                            format!("expected {dim} coordinates"),
                        ));
                    }
                }
            }
            for (k, &dt) in t.dts.iter().enumerate() {
                if PathGrid::with_horizon(model.horizon, dt).is_err() {
                    return Err(schema(
                        &format!("/task/dts/{k}"),
                        format!("dt = {dt} does not divide T"),
                    ));
                }
            }
            if let Some(q) = &mut t.inequality {
                if q.eta0.is_empty() {
                    q.eta0 = vec![0.0; dim];
                }
                if q.eta0.len() != dim {
                    return Err(schema("/task/inequality/eta0", format!("expected {dim} coordinates")));
                }
                if PathGrid::with_horizon(model.horizon, q.dt).is_err() {
                    return Err(schema("/task/inequality/dt", "dt does not divide T"));
                }
            }
        }
        Task::Simulate(t) => fill(&mut t.start, "/task/start")?,
        Task::BsdeSolve(t) => fill(&mut t.start, "/task/start")?,
        Task::Value(t) => fill(&mut t.start, "/task/start")?,
        Task::DppCheck(t) => fill(&mut t.start, "/task/start")?,
        Task::StabilityCheck(t) => {
            for (k, p) in t.points.iter().enumerate() {
                if p.len() != dim {
                    return Err(schema(
                        &format!("/task/points/{k}"),
                        format!("expected {dim} coordinates"),
                    ));
                }
            }
            if let Some(r) = &mut t.regularity {
                fill(&mut r.base, "/task/regularity/base")?;
                for (k, (a, b)) in r.pairs.iter().enumerate() {
                    if a.len() != dim || b.len() != dim {
                        return Err(schema(
                            &format!("/task/regularity/pairs/{k}"),
                            format!("expected {dim} coordinates"),
                        ));
                    }
                }
            }
        }
        Task::ViscosityProbe(t) => check_lattice(&t.lattice, dim, "/task/lattice")?,
        Task::BpOptimize(t) => check_lattice(&t.lattice, dim, "/task/lattice")?,
        Task::HjbResidual(t) => {
            if t.n_x == 0 || t.n_t == 0 || t.t_stride == 0 {
                return Err(schema("/task", "n_x, n_t and t_stride must be positive"));
            }
            if (t.n_t - 1) * t.t_stride > grid.n_steps {
                return Err(schema("/task/n_t", "time nodes run past the horizon"));
            }
        }
        Task::GaugeVerify(t) => {
            if t.dim == 0 || t.max_steps == 0 {
                return Err(schema("/task", "dim and max_steps must be positive"));
            }
            if let Some(k) = t.ms.iter().position(|m| m.partial_cmp(&1.0).is_none_or(|o| o.is_lt())) {
                return Err(schema(&format!("/task/ms/{k}"), "M must be at least 1"));
            }
        }
    }
    Ok(Loaded { config, model, grid })
}

fn check_lattice(l: &LatticeSpec, dim: usize, at: &str) -> Result<(), SchemaError> {
    if l.base_x.len() != dim {
        return Err(schema(&format!("{at}/base_x"), format!("expected {dim} coordinates")));
    }
    for (k, f) in l.free.iter().enumerate() {
        if let Some(j) = f.values.iter().position(|v| v.dim() != dim) {
            return Err(schema(
                &format!("{at}/free/{k}/values/{j}"),
                format!("expected {dim} coordinates"),
            ));
        }
    }
    Ok(())
}
