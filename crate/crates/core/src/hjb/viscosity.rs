//! Lattice-certified viscosity probes.
//!
//! A probe first certifies, by enumerating a declared finite path lattice,
//! that `w - phi - g` (sub) or `w + phi + g` (super) has its maximum or
//! minimum `0` at `gamma_hat`; only then is the Hamiltonian inequality
//! evaluated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{hamiltonian_at, SmoothCandidate};
use crate::calculus::{FunctionalDerivatives, TestFunctionalG};
use crate::error::{Error, Result};
use crate::hilbert::HVector;
use crate::model::ControlModel;
use crate::path::DiscretePath;

pub const MAX_FREE_NODES: usize = 5;
pub const MAX_NODE_VALUES: usize = 9;
pub const MAX_LATTICE_POINTS: usize = 1_000_000;

/// A node whose value ranges over a finite grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeNode {
    pub index: usize,
    pub values: Vec<HVector>,
}

/// Paths obtained from `base` by choosing a value for every free node up to
/// the end, then truncating at one of `end_indices`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLattice {
    pub base: DiscretePath,
    pub free: Vec<FreeNode>,
    pub end_indices: Vec<usize>,
}

impl PathLattice {
    /// Point count, refusing lattices beyond the caps before any enumeration.
    pub fn size(&self) -> Result<usize> {
        if self.free.len() > MAX_FREE_NODES {
            return Err(Error::Refusal(format!(
                "{} free nodes exceed the cap of {MAX_FREE_NODES}",
                self.free.len()
            )));
        }
        let mut seen = Vec::new();
        for f in &self.free {
            if f.values.is_empty() || f.values.len() > MAX_NODE_VALUES {
                return Err(Error::Refusal(format!(
                    "node {} has {} values (allowed 1..={MAX_NODE_VALUES})",
                    f.index,
                    f.values.len()
                )));
            }
            if f.index > self.base.end_index() || seen.contains(&f.index) {
                return Err(Error::Domain(format!(
                    "free node {} is off the base path or repeated",
                    f.index
                )));
            }
            if f.values.iter().any(|v| v.dim() != self.base.dim()) {
                return Err(Error::Dimension {
                    expected: self.base.dim(),
                    got: f
                        .values
                        .iter()
                        .map(HVector::dim)
                        .find(|&d| d != self.base.dim())
                        .unwrap_or(0),
                });
            }
            seen.push(f.index);
        }
        if self.end_indices.is_empty() {
            return Err(Error::Empty("lattice end indices"));
        }
        let mut total: usize = 0;
        for &e in &self.end_indices {
            if e > self.base.end_index() {
                return Err(Error::Domain(format!("end index {e} is beyond the base path")));
            }
            let mut count: usize = 1;
            for f in self.free.iter().filter(|f| f.index <= e) {
                count = count.saturating_mul(f.values.len());
            }
            total = total.saturating_add(count);
            if total > MAX_LATTICE_POINTS {
                return Err(Error::Refusal(format!(
                    "lattice has more than {MAX_LATTICE_POINTS} points"
                )));
            }
        }
        Ok(total)
    }

    /// Point `k` in enumeration order: ends in the listed order, then free
    /// nodes as digits with the first node most significant.
    pub fn point(&self, mut k: usize) -> Result<DiscretePath> {
        for &e in &self.end_indices {
            let active: Vec<&FreeNode> = self.free.iter().filter(|f| f.index <= e).collect();
            let count: usize = active.iter().map(|f| f.values.len()).product();
            if k >= count {
                k -= count;
                continue;
            }
            let mut values = self.base.values()[..=e].to_vec();
            for f in active.iter().rev() {
                let n = f.values.len();
                values[f.index] = f.values[k % n].clone();
                k /= n;
            }
            return DiscretePath::new(*self.base.grid(), values);
        }
        Err(Error::Domain("lattice point index out of range".into()))
    }

    pub fn points(&self) -> Result<Vec<DiscretePath>> {
        let n = self.size()?;
        (0..n).into_par_iter().map(|k| self.point(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    Sub,
    Super,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremumCertificate {
    pub points: usize,
    /// Sub: `max (w - phi - g)`; super: `min (w + phi + g)` over the lattice,
    /// after the constant normalization that makes the value at `gamma_hat` 0.
    pub extremum: f64,
    pub extremum_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    pub certificate: ExtremumCertificate,
    /// Constant added to `phi` so that the test functional touches `w` at `gamma_hat`.
    pub normalization: f64,
    /// Sub: left side of `>= 0`; super: minus the left side of `<= 0`.
    /// `None` when the certificate fails.
    pub slack: Option<f64>,
    /// `Some(true)` when the inequality holds within `1e-6`.
    pub verdict: Option<bool>,
    /// Lattice paths at the horizon violating `w <= phi` (sub) or `w >= phi` (super).
    pub terminal_violations: usize,
    pub terminal_samples: usize,
}

pub const VERDICT_SLACK: f64 = 1e-6;

/// Sub- or supersolution probe of `w` at `gamma_hat` with test pair `(phi, g)`.
#[allow(clippy::too_many_arguments)]
pub fn viscosity_probe(
    model: &ControlModel,
    w: &(dyn Fn(&DiscretePath) -> f64 + Sync),
    phi: &SmoothCandidate,
    g: &TestFunctionalG,
    gamma_hat: &DiscretePath,
    mode: ProbeMode,
    lattice: &PathLattice,
    tolerance: f64,
) -> Result<ProbeReport> {
    let n_points = lattice.size()?;
    if lattice.end_indices.iter().any(|&e| e < gamma_hat.end_index()) {
        return Err(Error::Domain("lattice paths must not end before gamma_hat".into()));
    }
    let sign = match mode {
        ProbeMode::Sub => 1.0,
        ProbeMode::Super => -1.0,
    };
    // Sub: w - (phi + c) - g = 0 at gamma_hat. Super: w + (phi + c) + g = 0.
    let g_hat = g.eval(gamma_hat, &model.op)?;
    let phi_hat = phi.jet(gamma_hat);
    let w_hat = w(gamma_hat);
    let c = sign * w_hat - phi_hat.value - g_hat.value;
    let gap = |path: &DiscretePath| -> Result<f64> {
        let gv = g.eval(path, &model.op)?.value;
        Ok(w(path) - sign * (phi.value(path) + c + gv))
    };
    let gaps: Vec<f64> = (0..n_points)
        .into_par_iter()
        .map(|k| gap(&lattice.point(k)?))
        .collect::<Result<_>>()?;
    // Sub wants max <= 0, super wants min >= 0; fold both into "sign * gap <= 0".
    let mut idx = 0;
    for (k, v) in gaps.iter().enumerate() {
        if sign * v > sign * gaps[idx] {
            idx = k;
        }
    }
    let extremum = gaps.get(idx).copied().unwrap_or(0.0);
    let passed = sign * extremum <= tolerance;
    let certificate = ExtremumCertificate {
        points: n_points,
        extremum,
        extremum_index: idx,
        tolerance,
        passed,
    };

    let horizon = lattice.base.grid().n_steps;
    let mut terminal_samples = 0;
    let mut terminal_violations = 0;
    for k in 0..n_points {
        let p = lattice.point(k)?;
        if p.end_index() == horizon {
            terminal_samples += 1;
            let diff = w(&p) - model.terminal(&p.features());
            if sign * diff > tolerance {
                terminal_violations += 1;
            }
        }
    }

    let (slack, verdict) = if passed {
        let mut test = phi_hat.clone();
        test.value += c;
        test.add_scaled(1.0, &g_hat);
        let s = inequality_slack(model, gamma_hat, &phi_hat, &test, sign)?;
        (Some(s), Some(s >= -VERDICT_SLACK))
    } else {
        (None, None)
    };
    Ok(ProbeReport {
        mode,
        certificate,
        normalization: c,
        slack,
        verdict,
        terminal_violations,
        terminal_samples,
    })
}

/// Sub: `d_t(phi + g) + (A* d_x phi, x) + H(gamma, phi + g, D(phi + g), D^2(phi + g))`.
/// Super: minus `-d_t(phi + g) - (A* d_x phi, x) + H(gamma, -(phi + g), ...)`.
fn inequality_slack(
    model: &ControlModel,
    gamma: &DiscretePath,
    phi: &FunctionalDerivatives,
    test: &FunctionalDerivatives,
    sign: f64,
) -> Result<f64> {
    let a_dx = model.op.apply_adjoint(&phi.dx)?;
    let x = gamma.endpoint();
    let feat = gamma.features();
    let s = test.scaled(sign);
    let h = hamiltonian_at(model, &feat, s.value, &s.dx, &s.dxx).value;
    let lhs = s.dt + sign * a_dx.dot(x) + h;
    Ok(sign * lhs)
}
