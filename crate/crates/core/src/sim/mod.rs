//! Exponential-Euler simulation of the controlled evolution equation
//!
//! ```text
//! X_{i+1} = e^{dt A} (X_i + F(X_{<=i}, u_i) dt + G(X_{<=i}, u_i) dW_i)
//! ```
//!
//! started from a frozen initial path `gamma_t`. Increments of path `p` come
//! from the counter-based stream `(seed, INCREMENTS, p)` (or `p / 2` with
//! antithetic pairing), so a batch is bit-identical for any worker count and
//! two runs with the same seed share their Brownian increments whatever the
//! model or policy.

mod checks;

pub use checks::{
    ito_inequality_verify, ito_verify, moment_and_modulus_check, tail_projection_check, yosida_compare,
    ItoInequalityReport, ItoLevel, ItoReport, MomentReport, TailReport, YosidaReport,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HVector, Matrix};
use crate::model::{ControlModel, Policy};
use crate::path::{DiscretePath, PathFeatures, PathGrid};
use crate::rng;

pub const SCHEME: &str = "exp-euler-v1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    /// Last node to simulate (defaults to the horizon).
    #[serde(default)]
    pub end_index: Option<usize>,
}

impl SimOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            antithetic: false,
            end_index: None,
        }
    }

    pub fn antithetic(mut self) -> Self {
        self.antithetic = true;
        self
    }

    pub fn until(mut self, end_index: usize) -> Self {
        self.end_index = Some(end_index);
        self
    }
}

/// Simulated paths on nodes `start_index..=end_index`; earlier nodes are the
/// shared initial path.
#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    pub grid: PathGrid,
    pub start_index: usize,
    pub end_index: usize,
    pub n_paths: usize,
    pub dim: usize,
    pub noise_dim: usize,
    pub seed: u64,
    pub antithetic: bool,
    initial: DiscretePath,
    initial_features: PathFeatures,
    states: Vec<f64>,
    running_max: Vec<f64>,
    integral: Vec<f64>,
    increments: Vec<f64>,
    controls: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn n_nodes(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn n_steps(&self) -> usize {
        self.end_index - self.start_index
    }

    pub fn initial(&self) -> &DiscretePath {
        &self.initial
    }

    fn node(&self, i: usize) -> usize {
        debug_assert!(i >= self.start_index && i <= self.end_index);
        i - self.start_index
    }

    /// `X_p(t_i)` for a simulated node `i` (global index).
    pub fn state(&self, p: usize, i: usize) -> &[f64] {
        let k = (self.node(i) * self.n_paths + p) * self.dim;
        &self.states[k..k + self.dim]
    }

    /// `max_{j <= i} |X_p(t_j)|`, history included.
    pub fn running_max(&self, p: usize, i: usize) -> f64 {
        self.running_max[self.node(i) * self.n_paths + p]
    }

    /// `dW` on `[t_i, t_{i+1}]`.
    pub fn increment(&self, p: usize, i: usize) -> &[f64] {
        let k = (self.node(i) * self.n_paths + p) * self.noise_dim;
        &self.increments[k..k + self.noise_dim]
    }

    /// Control applied on `[t_i, t_{i+1}]`.
    pub fn control(&self, p: usize, i: usize) -> f64 {
        self.controls[self.node(i) * self.n_paths + p]
    }

    /// Path features of `X_p` restricted to `[0, t_i]`.
    pub fn features(&self, p: usize, i: usize) -> PathFeatures {
        let mut f = self.initial_features.clone();
        self.features_into(p, i, &mut f);
        f
    }

    /// Overwrites `out` (which must have the batch dimension).
    pub fn features_into(&self, p: usize, i: usize, out: &mut PathFeatures) {
        let n = self.node(i);
        out.step = i;
        out.time = self.grid.time(i);
        out.endpoint.0.copy_from_slice(self.state(p, i));
        out.running_max = self.running_max[n * self.n_paths + p];
        out.pre_sup = if n == 0 {
            self.initial_features.pre_sup
        } else {
            self.running_max[(n - 1) * self.n_paths + p]
        };
        let k = (n * self.n_paths + p) * self.dim;
        out.running_integral.0.copy_from_slice(&self.integral[k..k + self.dim]);
    }

    /// Full path of sample `p` up to node `i` (history plus simulated part).
    pub fn path(&self, p: usize, i: usize) -> DiscretePath {
        let mut values: Vec<HVector> = self.initial.values()[..self.start_index].to_vec();
        for j in self.start_index..=i {
            values.push(HVector::from_slice(self.state(p, j)));
        }
        DiscretePath::new(self.grid, values).expect("batch paths are well formed")
    }

    /// Terminal features for every path.
    pub fn terminal_features(&self) -> Vec<PathFeatures> {
        (0..self.n_paths).map(|p| self.features(p, self.end_index)).collect()
    }

    /// CSV with one row per `(path, node)`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.dim).map(|k| format!("c{k}")).collect();
        writeln!(out, "path,step,time,{},running_max", cols.join(","))?;
        for p in 0..self.n_paths {
            for i in self.start_index..=self.end_index {
                write!(out, "{p},{i},{:.16e}", self.grid.time(i))?;
                for x in self.state(p, i) {
                    write!(out, ",{x:.16e}")?;
                }
                writeln!(out, ",{:.16e}", self.running_max(p, i))?;
            }
        }
        Ok(())
    }
}

/// Simulates `n_paths` trajectories of `model` from `initial` under `policy`.
pub fn simulate(
    model: &ControlModel,
    initial: &DiscretePath,
    policy: &Policy,
    opts: &SimOptions,
) -> Result<TrajectoryBatch> {
    let grid = *initial.grid();
    check_dim(model.dim(), initial.dim())?;
    if (grid.horizon() - model.horizon).abs() > 1e-9 * model.horizon {
        return Err(Error::Grid(format!(
            "grid horizon {} differs from the model horizon {}",
            grid.horizon(),
            model.horizon
        )));
    }
    if opts.n_paths == 0 {
        return Err(Error::Empty("path batch"));
    }
    if opts.antithetic && opts.n_paths % 2 == 1 {
        return Err(Error::Domain("antithetic batches need an even path count".into()));
    }
    let start = initial.end_index();
    let end = opts.end_index.unwrap_or(grid.n_steps);
    if end < start || end > grid.n_steps {
        return Err(Error::Grid(format!(
            "end node {end} outside [{start}, {}]",
            grid.n_steps
        )));
    }
    let n = model.dim();
    let d = model.noise_dim;
    let nn = end - start + 1;
    let ns = end - start;
    let dt = grid.dt;
    let factors = model.op.semigroup_factors(dt)?;
    let init_feat = initial.features();

    let mut states = vec![0.0; opts.n_paths * nn * n];
    let mut running_max = vec![0.0; opts.n_paths * nn];
    let mut integral = vec![0.0; opts.n_paths * nn * n];
    let mut increments = vec![0.0; opts.n_paths * ns * d];
    let mut controls = vec![0.0; opts.n_paths * ns];

    (
        states.par_chunks_mut(nn * n),
        running_max.par_chunks_mut(nn),
        integral.par_chunks_mut(nn * n),
        increments.par_chunks_mut((ns * d).max(1)),
        controls.par_chunks_mut(ns.max(1)),
    )
        .into_par_iter()
        .enumerate()
        .try_for_each(|(p, (st, rm, ig, inc, ctl))| -> Result<()> {
            let (index, sign) = if opts.antithetic {
                ((p / 2) as u64, if p % 2 == 0 { 1.0 } else { -1.0 })
            } else {
                (p as u64, 1.0)
            };
            if ns > 0 {
                let mut rng = rng::stream(opts.seed, rng::purpose::INCREMENTS, index);
                rng::fill_normal(&mut rng, dt, &mut inc[..ns * d]);
                if sign < 0.0 {
                    inc.iter_mut().for_each(|v| *v = -*v);
                }
            }
            let mut feat = init_feat.clone();
            let mut drift = vec![0.0; n];
            let mut g = Matrix::zeros(n, d);
            let mut next = HVector::zeros(n);
            st[..n].copy_from_slice(&feat.endpoint.0);
            rm[0] = feat.running_max;
            ig[..n].copy_from_slice(&feat.running_integral.0);
            for j in 0..ns {
                let u = policy.control(model, &feat)?;
                ctl[j] = u;
                model.drift_into(&feat, u, &mut drift);
                model.diffusion_into(&feat, u, &mut g);
                let dw = &inc[j * d..(j + 1) * d];
                for k in 0..n {
                    let mut y = feat.endpoint[k] + drift[k] * dt;
                    for (l, w) in dw.iter().enumerate() {
                        y += g[(k, l)] * w;
                    }
                    next[k] = factors[k] * y;
                }
                feat.advance(&next, dt);
                st[(j + 1) * n..(j + 2) * n].copy_from_slice(&next.0);
                rm[j + 1] = feat.running_max;
                ig[(j + 1) * n..(j + 2) * n].copy_from_slice(&feat.running_integral.0);
            }
            Ok(())
        })?;

    // Simulated path by path; stored node by node so that backward sweeps
    // read each time slice contiguously.
    let np = opts.n_paths;
    Ok(TrajectoryBatch {
        grid,
        start_index: start,
        end_index: end,
        n_paths: opts.n_paths,
        dim: n,
        noise_dim: d,
        seed: opts.seed,
        antithetic: opts.antithetic,
        initial: initial.clone(),
        initial_features: init_feat,
        states: node_major(&states, np, nn, n),
        running_max: node_major(&running_max, np, nn, 1),
        integral: node_major(&integral, np, nn, n),
        increments: node_major(&increments, np, ns, d),
        controls: node_major(&controls, np, ns, 1),
    })
}

/// `v[(p * len + j) * width + w]` rearranged to `[(j * n_paths + p) * width + w]`.
fn node_major(v: &[f64], n_paths: usize, len: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    if v.is_empty() {
        return out;
    }
    out.par_chunks_mut(n_paths * width).enumerate().for_each(|(j, slice)| {
        for p in 0..n_paths {
            let src = (p * len + j) * width;
            slice[p * width..(p + 1) * width].copy_from_slice(&v[src..src + width]);
        }
    });
    out
}
