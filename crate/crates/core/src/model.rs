//! Controlled path-dependent models: coefficients `(F, G, q, phi)` over a
//! finite control set, the shipped presets, and model transforms.
//!
//! Coefficients see a path through its [`PathFeatures`] (endpoint, running
//! maximum of `|X|`, running integral, time). Every preset depends on the
//! path through those features only, which keeps a simulation step O(1) in
//! the path length.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HVector, Matrix, SpectralOperator};
use crate::path::PathFeatures;

pub type DriftFn = Arc<dyn Fn(&PathFeatures, f64, &mut [f64]) + Send + Sync>;
pub type DiffusionFn = Arc<dyn Fn(&PathFeatures, f64, &mut Matrix) + Send + Sync>;
pub type DriverFn = Arc<dyn Fn(&PathFeatures, f64, &[f64], f64) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&PathFeatures) -> f64 + Send + Sync>;

/// Which path features the coefficients read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dependence {
    /// Endpoint and time only.
    Markov,
    /// Endpoint, time and running maximum of `|X|`.
    RunningMax,
    /// Anything in [`PathFeatures`].
    General,
}

/// Coefficient pack of a controlled evolution equation with a BSDE cost.
#[derive(Clone)]
pub struct ControlModel {
    pub name: String,
    pub op: SpectralOperator,
    pub horizon: f64,
    pub noise_dim: usize,
    pub controls: Vec<f64>,
    /// Declared Lipschitz constant of the coefficients in the sup norm.
    pub lipschitz: f64,
    /// Lipschitz constant of `q` in `y`.
    pub lipschitz_y: f64,
    pub dependence: Dependence,
    drift: DriftFn,
    diffusion: DiffusionFn,
    driver: DriverFn,
    terminal: TerminalFn,
}

impl fmt::Debug for ControlModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlModel")
            .field("name", &self.name)
            .field("op", &self.op)
            .field("horizon", &self.horizon)
            .field("noise_dim", &self.noise_dim)
            .field("controls", &self.controls)
            .field("lipschitz", &self.lipschitz)
            .field("lipschitz_y", &self.lipschitz_y)
            .field("dependence", &self.dependence)
            .finish_non_exhaustive()
    }
}

impl ControlModel {
    /// Model with zero coefficients; fill in with the builder methods.
    pub fn new(
        name: impl Into<String>,
        op: SpectralOperator,
        horizon: f64,
        noise_dim: usize,
        controls: Vec<f64>,
    ) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::Empty("control set"));
        }
        if controls.iter().any(|u| !u.is_finite()) {
            return Err(Error::Domain("controls must be finite".into()));
        }
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon {horizon} must be positive")));
        }
        if noise_dim == 0 {
            return Err(Error::Domain("noise dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            op,
            horizon,
            noise_dim,
            controls,
            lipschitz: 1.0,
            lipschitz_y: 0.0,
            dependence: Dependence::Markov,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: Arc::new(|_, _, out: &mut Matrix| out.fill(0.0)),
            driver: Arc::new(|_, _, _, _| 0.0),
            terminal: Arc::new(|_| 0.0),
        })
    }

    pub fn with_drift(mut self, f: impl Fn(&PathFeatures, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_diffusion(mut self, g: impl Fn(&PathFeatures, f64, &mut Matrix) + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(g);
        self
    }

    /// Driver `q(gamma, y, z, u)` with its Lipschitz constant in `y`.
    pub fn with_driver(
        mut self,
        lipschitz_y: f64,
        q: impl Fn(&PathFeatures, f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver = Arc::new(q);
        self.lipschitz_y = lipschitz_y;
        self
    }

    pub fn with_terminal(mut self, phi: impl Fn(&PathFeatures) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(phi);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn with_dependence(mut self, d: Dependence) -> Self {
        self.dependence = d;
        self
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn drift_into(&self, feat: &PathFeatures, u: f64, out: &mut [f64]) {
        (self.drift)(feat, u, out)
    }

    pub fn drift(&self, feat: &PathFeatures, u: f64) -> HVector {
        let mut out = HVector::zeros(self.dim());
        self.drift_into(feat, u, &mut out.0);
        out
    }

    pub fn diffusion_into(&self, feat: &PathFeatures, u: f64, out: &mut Matrix) {
        (self.diffusion)(feat, u, out)
    }

    /// `G(gamma, u)`, an `N x d` matrix.
    pub fn diffusion(&self, feat: &PathFeatures, u: f64) -> Matrix {
        let mut out = Matrix::zeros(self.dim(), self.noise_dim);
        self.diffusion_into(feat, u, &mut out);
        out
    }

    pub fn driver(&self, feat: &PathFeatures, y: f64, z: &[f64], u: f64) -> f64 {
        (self.driver)(feat, y, z, u)
    }

    pub fn terminal(&self, feat: &PathFeatures) -> f64 {
        (self.terminal)(feat)
    }

    /// Index of `u` in the control set (exact match up to 1e-12).
    pub fn control_index(&self, u: f64) -> Result<usize> {
        self.controls
            .iter()
            .position(|c| (c - u).abs() <= 1e-12 * (1.0 + c.abs()))
            .ok_or(Error::ControlOutsideSet(u))
    }

    /// Nearest control after clamping to the hull of `U` (ties go to the
    /// earlier entry).
    pub fn snap_control(&self, u: f64) -> f64 {
        let mut best = self.controls[0];
        let mut dist = (best - u).abs();
        for &c in &self.controls[1..] {
            let d = (c - u).abs();
            if d < dist {
                best = c;
                dist = d;
            }
        }
        best
    }

    /// `phi + eps`.
    pub fn with_terminal_shift(&self, eps: f64) -> Self {
        let phi = self.terminal.clone();
        let mut m = self.clone();
        m.terminal = Arc::new(move |f| phi(f) + eps);
        m
    }

    /// `F + eps` in every coordinate.
    pub fn with_drift_shift(&self, eps: f64) -> Self {
        let f0 = self.drift.clone();
        let mut m = self.clone();
        m.drift = Arc::new(move |f, u, out| {
            f0(f, u, out);
            for v in out.iter_mut() {
                *v += eps;
            }
        });
        m
    }

    /// `q + c`.
    pub fn with_driver_shift(&self, c: f64) -> Self {
        let q = self.driver.clone();
        let mut m = self.clone();
        m.driver = Arc::new(move |f, y, z, u| q(f, y, z, u) + c);
        m
    }

    /// Replaces the driver by `q'` sharing the other coefficients.
    pub fn with_driver_replaced(
        &self,
        lipschitz_y: f64,
        q: impl Fn(&PathFeatures, f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.clone().with_driver(lipschitz_y, q)
    }

    /// Exponential discount `Y' = e^{beta t} Y`:
    /// `q'(gamma, y, z, u) = e^{beta t} q(gamma, e^{-beta t} y, e^{-beta t} z, u) - beta y`,
    /// `phi' = e^{beta T} phi`. The Hamiltonian of the result is strictly
    /// decreasing in `r` with rate at least `beta - L_y`.
    pub fn exponential_discount(&self, beta: f64) -> Self {
        let q = self.driver.clone();
        let phi = self.terminal.clone();
        let horizon = self.horizon;
        let mut m = self.clone();
        m.driver = Arc::new(move |f, y, z, u| {
            let e = (beta * f.time).exp();
            let zs: Vec<f64> = z.iter().map(|v| v / e).collect();
            e * q(f, y / e, &zs, u) - beta * y
        });
        m.terminal = Arc::new(move |f| (beta * horizon).exp() * phi(f));
        m.lipschitz_y = self.lipschitz_y + beta;
        m.name = format!("{}+discount({beta})", self.name);
        m
    }

    /// Same coefficients on a different generator (used for Yosida runs).
    pub fn with_operator(&self, op: SpectralOperator) -> Result<Self> {
        if op.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        let mut m = self.clone();
        m.op = op;
        Ok(m)
    }
}

/// Named coefficient presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelPreset {
    /// `N = 1`, `A = 0`, `F = u`, `G = 1`, `q = -x^2 - u^2`, `phi = -x^2`,
    /// whose value functional is `V(t, x) = -x^2 - (T - t)` when `-x` is an
    /// admissible control.
    #[serde(rename = "lq-1d")]
    Lq1d {
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "lq_radius")]
        u_radius: f64,
        #[serde(default = "lq_step")]
        u_step: f64,
    },
    /// Dirichlet-Laplacian modes, `F_k = kappa x_k + u / k`,
    /// `G = diag(sigma / k)`, `q = -|x|^2 - u^2 / 2`, `phi = -|x|^2`.
    LinearHeat {
        #[serde(default = "three")]
        n: usize,
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "heat_kappa")]
        kappa: f64,
        #[serde(default = "half")]
        sigma: f64,
        #[serde(default = "heat_controls")]
        controls: Vec<f64>,
    },
    /// `N = 1`, `A = lambda`, `F = u`, `G = sigma`,
    /// `q = -a max_s |X(s)| - u^2 / 2`, `phi = -|x|`.
    Runmax {
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "zero")]
        lambda: f64,
        #[serde(default = "half")]
        a: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "runmax_controls")]
        controls: Vec<f64>,
    },
    /// Singleton control set: `N = 1`, `A = lambda`, `F = 0`, `G = sigma`,
    /// `q = alpha y - x^2`, `phi = -x^2`.
    Uncontrolled {
        #[serde(default = "one")]
        horizon: f64,
        #[serde(default = "minus_one")]
        lambda: f64,
        #[serde(default = "half")]
        sigma: f64,
        #[serde(default = "tenth")]
        alpha: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn zero() -> f64 {
    0.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}
fn minus_one() -> f64 {
    -1.0
}
fn three() -> usize {
    3
}
fn lq_radius() -> f64 {
    4.0
}
fn lq_step() -> f64 {
    0.25
}
fn heat_kappa() -> f64 {
    -0.5
}
fn heat_controls() -> Vec<f64> {
    vec![-1.0, 0.0, 1.0]
}
fn runmax_controls() -> Vec<f64> {
    vec![-1.0, -0.5, 0.0, 0.5, 1.0]
}

/// Symmetric grid `-radius, -radius + step, ..., radius`.
pub fn control_grid(radius: f64, step: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) || !(step > 0.0) {
        return Err(Error::Domain("control grid needs radius >= 0 and step > 0".into()));
    }
    let n = (radius / step).round() as i64;
    if ((n as f64) * step - radius).abs() > 1e-9 * radius.max(1.0) {
        return Err(Error::Domain(format!("step {step} does not divide radius {radius}")));
    }
    Ok((-n..=n).map(|k| k as f64 * step).collect())
}

impl ModelPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ModelPreset::Lq1d { .. } => "lq-1d",
            ModelPreset::LinearHeat { .. } => "linear-heat",
            ModelPreset::Runmax { .. } => "runmax",
            ModelPreset::Uncontrolled { .. } => "uncontrolled",
        }
    }

    pub fn build(&self) -> Result<ControlModel> {
        match *self {
            ModelPreset::Lq1d {
                horizon,
                u_radius,
                u_step,
            } => lq_1d(horizon, control_grid(u_radius, u_step)?),
            ModelPreset::LinearHeat {
                n,
                horizon,
                kappa,
                sigma,
                ref controls,
            } => linear_heat(n, horizon, kappa, sigma, controls.clone()),
            ModelPreset::Runmax {
                horizon,
                lambda,
                a,
                sigma,
                ref controls,
            } => runmax(horizon, lambda, a, sigma, controls.clone()),
            ModelPreset::Uncontrolled {
                horizon,
                lambda,
                sigma,
                alpha,
            } => uncontrolled(horizon, lambda, sigma, alpha),
        }
    }
}

pub fn lq_1d(horizon: f64, controls: Vec<f64>) -> Result<ControlModel> {
    Ok(
        ControlModel::new("lq-1d", SpectralOperator::zero(1)?, horizon, 1, controls)?
            .with_drift(|_, u, out| out[0] = u)
            .with_diffusion(|_, _, g| g[(0, 0)] = 1.0)
            .with_driver(0.0, |f, _, _, u| {
                let x = f.endpoint[0];
                -x * x - u * u
            })
            .with_terminal(|f| -f.endpoint[0] * f.endpoint[0])
            .with_lipschitz(8.0),
    )
}

pub fn linear_heat(n: usize, horizon: f64, kappa: f64, sigma: f64, controls: Vec<f64>) -> Result<ControlModel> {
    let op = SpectralOperator::dirichlet_laplacian(n)?;
    Ok(ControlModel::new("linear-heat", op, horizon, n, controls)?
        .with_drift(move |f, u, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = kappa * f.endpoint[k] + u / (k + 1) as f64;
            }
        })
        .with_diffusion(move |_, _, g| {
            g.fill(0.0);
            for k in 0..g.nrows().min(g.ncols()) {
                g[(k, k)] = sigma / (k + 1) as f64;
            }
        })
        .with_driver(0.0, |f, _, _, u| -f.endpoint.norm_sq() - 0.5 * u * u)
        .with_terminal(|f| -f.endpoint.norm_sq())
        .with_lipschitz(kappa.abs().max(1.0)))
}

pub fn runmax(horizon: f64, lambda: f64, a: f64, sigma: f64, controls: Vec<f64>) -> Result<ControlModel> {
    let op = SpectralOperator::new(vec![lambda])?;
    Ok(ControlModel::new("runmax", op, horizon, 1, controls)?
        .with_drift(|_, u, out| out[0] = u)
        .with_diffusion(move |_, _, g| g[(0, 0)] = sigma)
        .with_driver(0.0, move |f, _, _, u| -a * f.running_max - 0.5 * u * u)
        .with_terminal(|f| -f.endpoint[0].abs())
        .with_lipschitz(a.max(1.0))
        .with_dependence(Dependence::RunningMax))
}

pub fn uncontrolled(horizon: f64, lambda: f64, sigma: f64, alpha: f64) -> Result<ControlModel> {
    let op = SpectralOperator::new(vec![lambda])?;
    Ok(ControlModel::new("uncontrolled", op, horizon, 1, vec![0.0])?
        .with_diffusion(move |_, _, g| g[(0, 0)] = sigma)
        .with_driver(alpha.abs(), move |f, y, _, _| alpha * y - f.endpoint[0] * f.endpoint[0])
        .with_terminal(|f| -f.endpoint[0] * f.endpoint[0]))
}

/// Policies `u_i = pi(t_i, features(X_{<=i}))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Constant {
        u: f64,
    },
    /// `controls[j]` is used on `[switch_times[j-1], switch_times[j])`.
    OpenLoop {
        switch_times: Vec<f64>,
        controls: Vec<f64>,
    },
    /// `u = offset + gain_x x_1 + gain_max max|X| + gain_integral int x_1`,
    /// clamped and snapped to the control set.
    Feedback {
        #[serde(default)]
        gain_x: f64,
        #[serde(default)]
        gain_max: f64,
        #[serde(default)]
        gain_integral: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl Policy {
    pub fn feedback_x(gain: f64) -> Self {
        Policy::Feedback {
            gain_x: gain,
            gain_max: 0.0,
            gain_integral: 0.0,
            offset: 0.0,
        }
    }

    /// Control at the current node; always an element of `model.controls`.
    pub fn control(&self, model: &ControlModel, feat: &PathFeatures) -> Result<f64> {
        match self {
            Policy::Constant { u } => model.control_index(*u).map(|i| model.controls[i]),
            Policy::OpenLoop { switch_times, controls } => {
                if controls.len() != switch_times.len() + 1 {
                    return Err(Error::Domain(
                        "open-loop policy needs one more control than switch times".into(),
                    ));
                }
                let piece = switch_times.iter().take_while(|&&s| feat.time >= s - 1e-12).count();
                let u = controls[piece];
                model.control_index(u).map(|i| model.controls[i])
            }
            Policy::Feedback {
                gain_x,
                gain_max,
                gain_integral,
                offset,
            } => {
                let raw = offset
                    + gain_x * feat.endpoint[0]
                    + gain_max * feat.running_max
                    + gain_integral * feat.running_integral[0];
                Ok(model.snap_control(raw))
            }
        }
    }

    /// Reads only the time (no state feedback).
    pub fn is_open_loop(&self) -> bool {
        !matches!(self, Policy::Feedback { .. })
    }
}
