//! Pathwise (Dupire) derivatives.
//!
//! A functional of a path `gamma_t` has a horizontal derivative (flat
//! extension of the path in time) and vertical derivatives (bumps of the
//! endpoint only). Closed forms live next to the functionals that have them;
//! [`fd_derivatives`] is the finite-difference reference.

mod gauge;
mod test_functional;

pub use gauge::{
    eval_gauge, eval_s, eval_upsilon, eval_upsilon_pair, gauge_modulus, s_jet, upsilon_jet, GaugeJet, Upsilon,
};
pub use test_functional::{GaugeAnchor, TestFunctionalG, TimeWeight};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HVector, Matrix};
use crate::path::DiscretePath;

/// Value and pathwise derivatives of a functional at one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDerivatives {
    pub value: f64,
    /// Horizontal derivative.
    pub dt: f64,
    /// First vertical derivative.
    pub dx: HVector,
    /// Second vertical derivative (symmetric).
    pub dxx: Matrix,
}

impl FunctionalDerivatives {
    pub fn zero(dim: usize) -> Self {
        Self {
            value: 0.0,
            dt: 0.0,
            dx: HVector::zeros(dim),
            dxx: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dx.dim()
    }

    /// `self + c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &FunctionalDerivatives) {
        self.value += c * other.value;
        self.dt += c * other.dt;
        self.dx.axpy(c, &other.dx);
        self.dxx += &other.dxx * c;
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            value: c * self.value,
            dt: c * self.dt,
            dx: self.dx.scale(c),
            dxx: &self.dxx * c,
        }
    }

    /// `max |dxx - dxx^T|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.dxx[(i, j)] - self.dxx[(j, i)]).abs());
            }
        }
        worst
    }
}

/// `Tr(l G G^T)` for symmetric `l` (`N x N`) and `G` (`N x d`).
pub fn trace_lggt(l: &Matrix, g: &Matrix) -> f64 {
    let lg = l * g;
    lg.iter().zip(g.iter()).map(|(a, b)| a * b).sum()
}

/// A real functional on paths.
pub trait PathFunctional: Sync {
    fn value(&self, path: &DiscretePath) -> f64;
}

impl<F> PathFunctional for F
where
    F: Fn(&DiscretePath) -> f64 + Sync,
{
    fn value(&self, path: &DiscretePath) -> f64 {
        self(path)
    }
}

/// A functional with closed-form pathwise derivatives that can be evaluated
/// incrementally while a path grows.
///
/// `Memory` summarises the nodes strictly before the endpoint; the value
/// and derivatives at a path are a function of `(memory, time, endpoint)`.
pub trait SmoothFunctional: Sync {
    type Memory: Clone + Send + Sync;

    /// Memory of the nodes `history` (all strictly before the endpoint).
    fn memory(&self, history: &[HVector]) -> Self::Memory;

    /// The current endpoint becomes an interior node.
    fn absorb(&self, memory: &mut Self::Memory, node: &HVector);

    fn jet(&self, memory: &Self::Memory, time: f64, endpoint: &HVector) -> FunctionalDerivatives;

    /// Declared polynomial growth degree.
    fn growth_degree(&self) -> u32;

    fn derivatives(&self, path: &DiscretePath) -> FunctionalDerivatives {
        let end = path.end_index();
        let mem = self.memory(&path.values()[..end]);
        self.jet(&mem, path.end_time(), path.endpoint())
    }

    fn eval(&self, path: &DiscretePath) -> f64 {
        self.derivatives(path).value
    }
}

/// `f(gamma_t) = (c, gamma_t(t))`.
#[derive(Clone, Debug)]
pub struct LinearEndpoint(pub HVector);

impl SmoothFunctional for LinearEndpoint {
    type Memory = ();

    fn memory(&self, _: &[HVector]) {}

    fn absorb(&self, _: &mut (), _: &HVector) {}

    fn jet(&self, _: &(), _: f64, x: &HVector) -> FunctionalDerivatives {
        let n = x.dim();
        FunctionalDerivatives {
            value: self.0.dot(x),
            dt: 0.0,
            dx: self.0.clone(),
            dxx: Matrix::zeros(n, n),
        }
    }

    fn growth_degree(&self) -> u32 {
        1
    }
}

/// `f(gamma_t) = |gamma_t(t)|^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EndpointNormSq;

impl SmoothFunctional for EndpointNormSq {
    type Memory = ();

    fn memory(&self, _: &[HVector]) {}

    fn absorb(&self, _: &mut (), _: &HVector) {}

    fn jet(&self, _: &(), _: f64, x: &HVector) -> FunctionalDerivatives {
        let n = x.dim();
        FunctionalDerivatives {
            value: x.norm_sq(),
            dt: 0.0,
            dx: x.scale(2.0),
            dxx: Matrix::identity(n, n) * 2.0,
        }
    }

    fn growth_degree(&self) -> u32 {
        2
    }
}

/// Finite-difference pathwise derivatives.
///
/// The horizontal part is a forward difference over one grid step of flat
/// extension; the vertical parts are central differences under endpoint
/// bumps of size `h`.
pub fn fd_derivatives<F: PathFunctional + ?Sized>(f: &F, path: &DiscretePath, h: f64) -> Result<FunctionalDerivatives> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("bump size {h} must be positive")));
    }
    let end = path.end_index();
    if end >= path.grid().n_steps {
        return Err(Error::Grid("path already at the horizon; no horizontal step".into()));
    }
    let f0 = f.value(path);
    let ext = path.flat_extend(end + 1)?;
    let dt = (f.value(&ext) - f0) / path.grid().dt;
    let (dx, dxx) = vertical_fd(f, path, h)?;
    Ok(FunctionalDerivatives { value: f0, dt, dx, dxx })
}

/// Vertical-only finite differences (usable at the horizon).
pub fn vertical_fd<F: PathFunctional + ?Sized>(f: &F, path: &DiscretePath, h: f64) -> Result<(HVector, Matrix)> {
    let n = path.dim();
    let f0 = f.value(path);
    let bumped = |k: usize, sk: f64, l: Option<(usize, f64)>| -> Result<f64> {
        let mut x = HVector::zeros(n);
        x[k] += sk * h;
        if let Some((l, sl)) = l {
            x[l] += sl * h;
        }
        Ok(f.value(&path.vertical_bump(&x)?))
    };
    let mut dx = HVector::zeros(n);
    let mut dxx = Matrix::zeros(n, n);
    for k in 0..n {
        let fp = bumped(k, 1.0, None)?;
        let fm = bumped(k, -1.0, None)?;
        dx[k] = (fp - fm) / (2.0 * h);
        dxx[(k, k)] = (fp - 2.0 * f0 + fm) / (h * h);
        for l in 0..k {
            let pp = bumped(k, 1.0, Some((l, 1.0)))?;
            let pm = bumped(k, 1.0, Some((l, -1.0)))?;
            let mp = bumped(k, -1.0, Some((l, 1.0)))?;
            let mm = bumped(k, -1.0, Some((l, -1.0)))?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            dxx[(k, l)] = v;
            dxx[(l, k)] = v;
        }
    }
    Ok((dx, dxx))
}

/// Finite differences at `h` and `h/2` with Richardson extrapolation.
#[derive(Clone, Debug)]
pub struct RichardsonFd {
    pub coarse: FunctionalDerivatives,
    pub fine: FunctionalDerivatives,
    /// `(4 fine - coarse) / 3` for the vertical parts; horizontal taken from `fine`.
    pub extrapolated: FunctionalDerivatives,
    /// `max |fine - coarse|` over all vertical entries.
    pub discrepancy: f64,
}

/// Default vertical bump `1e-4 * max(1, ||gamma||_0)`.
pub fn default_bump(path: &DiscretePath) -> f64 {
    1e-4 * path.sup_norm().max(1.0)
}

/// Vertical finite differences with a Richardson check at `h/2`.
pub fn fd_richardson<F: PathFunctional + ?Sized>(f: &F, path: &DiscretePath, h: f64) -> Result<RichardsonFd> {
    let value = f.value(path);
    let (dx1, dxx1) = vertical_fd(f, path, h)?;
    let (dx2, dxx2) = vertical_fd(f, path, 0.5 * h)?;
    check_dim(dx1.dim(), path.dim())?;
    let extrap_dx = HVector(dx1.0.iter().zip(&dx2.0).map(|(c, f)| (4.0 * f - c) / 3.0).collect());
    let extrap_dxx = (&dxx2 * 4.0 - &dxx1) / 3.0;
    let discrepancy = dx1
        .0
        .iter()
        .zip(&dx2.0)
        .map(|(a, b)| (a - b).abs())
        .chain(dxx1.iter().zip(dxx2.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    let mk = |dx: HVector, dxx: Matrix| FunctionalDerivatives {
        value,
        dt: 0.0,
        dx,
        dxx,
    };
    Ok(RichardsonFd {
        coarse: mk(dx1, dxx1),
        fine: mk(dx2, dxx2),
        extrapolated: mk(extrap_dx, extrap_dxx),
        discrepancy,
    })
}
