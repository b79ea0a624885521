use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{trace_lggt, FunctionalDerivatives, SmoothFunctional};
use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HVector, Matrix};
use crate::model::ControlModel;
use crate::path::{DiscretePath, PathFeatures, PathGrid};
use crate::rng;

/// Arguments `(gamma_t, r, p, l)` of the Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianInput {
    pub gamma: DiscretePath,
    pub r: f64,
    pub p: HVector,
    pub l: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianValue {
    pub value: f64,
    pub argmax: f64,
}

/// `max_u (p, F) + 1/2 Tr(l G G^T) + q(gamma, r, G^T p, u)`; the first
/// maximizer in control-set order wins ties.
pub fn hamiltonian(model: &ControlModel, inp: &HamiltonianInput) -> Result<HamiltonianValue> {
    let n = model.dim();
    check_dim(n, inp.gamma.dim())?;
    check_dim(n, inp.p.dim())?;
    if inp.l.nrows() != n || inp.l.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: inp.l.nrows(),
        });
    }
    let scale = inp.l.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (inp.l[(i, j)] - inp.l[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Domain("l must be symmetric".into()));
            }
        }
    }
    Ok(hamiltonian_at(model, &inp.gamma.features(), inp.r, &inp.p, &inp.l))
}

/// Hamiltonian on precomputed features (no validation).
pub fn hamiltonian_at(model: &ControlModel, feat: &PathFeatures, r: f64, p: &HVector, l: &Matrix) -> HamiltonianValue {
    let n = model.dim();
    let d = model.noise_dim;
    let mut f = vec![0.0; n];
    let mut g = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    let mut best = HamiltonianValue {
        value: f64::NEG_INFINITY,
        argmax: model.controls[0],
    };
    for &u in &model.controls {
        model.drift_into(feat, u, &mut f);
        model.diffusion_into(feat, u, &mut g);
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (0..n).map(|i| g[(i, k)] * p[i]).sum();
        }
        let pf: f64 = f.iter().zip(&p.0).map(|(a, b)| a * b).sum();
        let v = pf + 0.5 * trace_lggt(l, &g) + model.driver(feat, r, &z, u);
        if v > best.value {
            best = HamiltonianValue { value: v, argmax: u };
        }
    }
    best
}

pub type JetFn = Arc<dyn Fn(&DiscretePath) -> FunctionalDerivatives + Send + Sync>;

/// A smooth test functional with closed-form derivatives. `A* d_x` is taken
/// from the model generator, which is diagonal and hence self-adjoint on the
/// truncation.
#[derive(Clone)]
pub struct SmoothCandidate {
    pub name: String,
    pub growth_degree: u32,
    jet: JetFn,
}

impl std::fmt::Debug for SmoothCandidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothCandidate")
            .field("name", &self.name)
            .field("growth_degree", &self.growth_degree)
            .finish_non_exhaustive()
    }
}

impl SmoothCandidate {
    pub fn new(
        name: impl Into<String>,
        growth_degree: u32,
        jet: impl Fn(&DiscretePath) -> FunctionalDerivatives + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            growth_degree,
            jet: Arc::new(jet),
        }
    }

    pub fn from_smooth<F: SmoothFunctional + Send + 'static>(name: impl Into<String>, f: F) -> Self {
        let deg = f.growth_degree();
        Self::new(name, deg, move |p| f.derivatives(p))
    }

    /// `V(t, x) = -|x|^2 - (T - t)`.
    pub fn lq(horizon: f64) -> Self {
        Self::new("lq-riccati", 2, move |path| {
            let x = path.endpoint();
            let n = x.dim();
            FunctionalDerivatives {
                value: -x.norm_sq() - (horizon - path.end_time()),
                dt: 1.0,
                dx: x.scale(-2.0),
                dxx: Matrix::identity(n, n) * -2.0,
            }
        })
    }

    /// The constant functional `c`.
    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new("constant", 0, move |_| {
            let mut d = FunctionalDerivatives::zero(dim);
            d.value = c;
            d
        })
    }

    /// `self + eps t`.
    pub fn with_time_shift(&self, eps: f64) -> Self {
        let jet = self.jet.clone();
        Self::new(format!("{}+{eps}t", self.name), self.growth_degree, move |p| {
            let mut d = jet(p);
            d.value += eps * p.end_time();
            d.dt += eps;
            d
        })
    }

    /// `c * self + k`.
    pub fn affine(&self, c: f64, k: f64) -> Self {
        let jet = self.jet.clone();
        Self::new(format!("{c}*{}+{k}", self.name), self.growth_degree, move |p| {
            let mut d = jet(p).scaled(c);
            d.value += k;
            d
        })
    }

    pub fn jet(&self, path: &DiscretePath) -> FunctionalDerivatives {
        (self.jet)(path)
    }

    pub fn value(&self, path: &DiscretePath) -> f64 {
        self.jet(path).value
    }
}

/// `d_t phi + (A* d_x phi, gamma(t)) + H(gamma, phi, d_x phi, d_xx phi)`.
pub fn classical_residual(model: &ControlModel, cand: &SmoothCandidate, gamma: &DiscretePath) -> Result<f64> {
    let j = cand.jet(gamma);
    let a_dx = model.op.apply_adjoint(&j.dx)?;
    let h = hamiltonian(
        model,
        &HamiltonianInput {
            gamma: gamma.clone(),
            r: j.value,
            p: j.dx.clone(),
            l: j.dxx.clone(),
        },
    )?;
    Ok(j.dt + a_dx.dot(gamma.endpoint()) + h.value)
}

/// `max |cand(gamma_T) - phi(gamma_T)|` over terminal paths.
pub fn terminal_mismatch(model: &ControlModel, cand: &SmoothCandidate, paths: &[DiscretePath]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in paths {
        if p.end_index() != p.grid().n_steps {
            return Err(Error::Grid("terminal check needs paths that end at the horizon".into()));
        }
        worst = worst.max((cand.value(p) - model.terminal(&p.features())).abs());
    }
    Ok(worst)
}

/// One monotonicity sample: `H(r1) - H(r2)` against `r2 - r1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySample {
    pub features: PathFeatures,
    pub r1: f64,
    pub r2: f64,
    pub p: HVector,
    pub l: Matrix,
}

/// Seeded samples with `r1 < r2`, endpoints in `[-2, 2]^N`, times on the grid.
pub fn monotonicity_samples(model: &ControlModel, grid: &PathGrid, n: usize, seed: u64) -> Vec<MonotonicitySample> {
    let dim = model.dim();
    (0..n)
        .map(|k| {
            let mut r = rng::stream(seed, rng::purpose::HAMILTONIAN_SAMPLES, k as u64);
            let x = HVector((0..dim).map(|_| r.random_range(-2.0..2.0)).collect());
            let mut features = PathFeatures::start(x.clone());
            let step = r.random_range(0..=grid.n_steps);
            features.step = step;
            features.time = grid.time(step);
            features.running_max = x.norm() + r.random_range(0.0..1.0);
            features.pre_sup = features.running_max;
            let r1 = r.random_range(-3.0..3.0);
            let r2 = r1 + r.random_range(0.1..2.0);
            let p = HVector((0..dim).map(|_| r.random_range(-2.0..2.0)).collect());
            let mut l = Matrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..=i {
                    let v = r.random_range(-2.0..2.0);
                    l[(i, j)] = v;
                    l[(j, i)] = v;
                }
            }
            MonotonicitySample { features, r1, r2, p, l }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `min (H(r1) - H(r2)) / (r2 - r1)` over the samples.
    pub k: f64,
    pub n_samples: usize,
    /// `K <= 0`: the uniqueness argument needs the discount transform.
    pub needs_shift: bool,
    /// Discount rate `beta = L_y + 1` recommended when a shift is needed;
    /// [`ControlModel::exponential_discount`] applies it.
    pub recommended_beta: Option<f64>,
}

pub fn monotonicity_normalization_check(
    model: &ControlModel,
    samples: &[MonotonicitySample],
) -> Result<MonotonicityReport> {
    if samples.is_empty() {
        return Err(Error::Empty("monotonicity sample"));
    }
    let ks: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let h1 = hamiltonian_at(model, &s.features, s.r1, &s.p, &s.l).value;
            let h2 = hamiltonian_at(model, &s.features, s.r2, &s.p, &s.l).value;
            (h1 - h2) / (s.r2 - s.r1)
        })
        .collect();
    let k = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let needs_shift = k <= 0.0;
    Ok(MonotonicityReport {
        k,
        n_samples: samples.len(),
        needs_shift,
        recommended_beta: needs_shift.then_some(model.lipschitz_y + 1.0),
    })
}
