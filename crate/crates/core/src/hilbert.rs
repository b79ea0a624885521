//! Finite spectral model of the state space `H`.
//!
//! The generator is diagonal in a fixed orthonormal eigenbasis, so the
//! semigroup, the adjoint and the Yosida approximants all have closed forms
//! and no operator-discretization error enters the experiments.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense real matrix (noise loadings, second vertical derivatives).
pub type Matrix = DMatrix<f64>;

/// Coefficients of a state in the eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HVector(pub Vec<f64>);

impl HVector {
    pub fn zeros(dim: usize) -> Self {
        HVector(vec![0.0; dim])
    }

    pub fn from_slice(v: &[f64]) -> Self {
        HVector(v.to_vec())
    }

    /// Unit vector `e_k`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &HVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, c: f64) -> HVector {
        HVector(self.0.iter().map(|x| c * x).collect())
    }

    pub fn axpy(&mut self, a: f64, x: &HVector) {
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += a * xi;
        }
    }

    pub fn checked_add(&self, other: &HVector) -> Result<HVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(self + other)
    }

    pub fn checked_sub(&self, other: &HVector) -> Result<HVector> {
        check_dim(self.dim(), other.dim())?;
        Ok(self - other)
    }

    /// `P_N`: keep the first `n` coordinates.
    pub fn project_head(&self, n: usize) -> HVector {
        HVector(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &x)| if k < n { x } else { 0.0 })
                .collect(),
        )
    }

    /// `Q_N = I - P_N`.
    pub fn project_tail(&self, n: usize) -> HVector {
        HVector(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &x)| if k < n { 0.0 } else { x })
                .collect(),
        )
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Index<usize> for HVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl IndexMut<usize> for HVector {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.0[k]
    }
}

impl Add for &HVector {
    type Output = HVector;
    fn add(self, rhs: &HVector) -> HVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &HVector {
    type Output = HVector;
    fn sub(self, rhs: &HVector) -> HVector {
        debug_assert_eq!(self.dim(), rhs.dim());
        HVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<f64>> for HVector {
    fn from(v: Vec<f64>) -> Self {
        HVector(v)
    }
}

/// Diagonal generator `A` on an `N`-mode truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    /// Set when some eigenvalue is positive (general C0 semigroup, not a contraction).
    non_contraction: bool,
}

impl SpectralOperator {
    /// Contraction generator; every eigenvalue must be `<= 0`.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Empty("spectrum"));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !l.is_finite() || **l > 0.0) {
            return Err(Error::Domain(format!(
                "eigenvalue {bad} is not a contraction eigenvalue; use SpectralOperator::non_contraction"
            )));
        }
        Ok(Self {
            eigenvalues,
            non_contraction: false,
        })
    }

    /// Generator of a general C0 semigroup; positive eigenvalues allowed.
    pub fn non_contraction(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Empty("spectrum"));
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("non-finite eigenvalue".into()));
        }
        let non_contraction = eigenvalues.iter().any(|&l| l > 0.0);
        Ok(Self {
            eigenvalues,
            non_contraction,
        })
    }

    /// Dirichlet Laplacian on `(0,1)`: `lambda_k = -(k pi)^2`.
    pub fn dirichlet_laplacian(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|k| -(k as f64 * std::f64::consts::PI).powi(2)).collect())
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    /// Parses `dirichlet-laplacian(N)` or `zero(N)`.
    pub fn from_preset(name: &str) -> Result<Self> {
        let name = name.trim();
        let (head, rest) = name
            .split_once('(')
            .ok_or_else(|| Error::Parse(format!("operator preset `{name}`")))?;
        let n: usize = rest
            .strip_suffix(')')
            .and_then(|s| s.trim().parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse(format!("operator preset `{name}`")))?;
        match head.trim() {
            "dirichlet-laplacian" => Self::dirichlet_laplacian(n),
            "zero" => Self::zero(n),
            other => Err(Error::Parse(format!("unknown operator preset `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_contraction(&self) -> bool {
        !self.non_contraction
    }

    /// `M_1 = sup_{s in [0,T]} |e^{sA}|`.
    pub fn semigroup_bound(&self, horizon: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| (l.max(0.0) * horizon).exp())
            .fold(1.0, f64::max)
    }

    /// Diagonal of `e^{tA}`.
    pub fn semigroup_factors(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup time {t} must be >= 0")));
        }
        Ok(self.eigenvalues.iter().map(|l| (l * t).exp()).collect())
    }

    /// `e^{tA} v`.
    pub fn semigroup_apply(&self, t: f64, v: &HVector) -> Result<HVector> {
        check_dim(self.dim(), v.dim())?;
        let f = self.semigroup_factors(t)?;
        Ok(HVector(f.iter().zip(&v.0).map(|(a, b)| a * b).collect()))
    }

    /// `A v`.
    pub fn apply_generator(&self, v: &HVector) -> Result<HVector> {
        check_dim(self.dim(), v.dim())?;
        Ok(HVector(self.eigenvalues.iter().zip(&v.0).map(|(l, x)| l * x).collect()))
    }

    /// `A* v`; identical to [`apply_generator`](Self::apply_generator) for a diagonal generator.
    pub fn apply_adjoint(&self, v: &HVector) -> Result<HVector> {
        self.apply_generator(v)
    }

    /// Yosida approximant `A_mu = mu A (mu I - A)^{-1}`.
    pub fn yosida(&self, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain(format!("Yosida parameter {mu} must be > 0")));
        }
        let mut eigenvalues = Vec::with_capacity(self.dim());
        for &l in &self.eigenvalues {
            if l >= mu {
                return Err(Error::Domain(format!(
                    "mu = {mu} lies in the spectrum region (eigenvalue {l})"
                )));
            }
            eigenvalues.push(mu * l / (mu - l));
        }
        Ok(Self {
            non_contraction: eigenvalues.iter().any(|&l| l > 0.0),
            eigenvalues,
        })
    }
}

impl fmt::Display for SpectralOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "diag{:?}", self.eigenvalues)
    }
}
