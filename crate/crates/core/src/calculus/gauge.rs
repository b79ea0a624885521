//! The smooth surrogate `S` of the sixth power of the sup norm, the family
//! `Upsilon^M = S + M |gamma(t)|^6`, and the gauge-type function built on it.
//!
//! `S(gamma_t) = (||gamma_t||_0^6 - |gamma_t(t)|^6)^3 / ||gamma_t||_0^12` depends on
//! the path only through the maximum norm before the endpoint and the endpoint
//! itself, which is what makes it cheap to evaluate along a growing path.
//!
//! Writing `sup = max(pre_sup, |x|)`, `rho = |x| / sup` and `w = 1 - rho^6`,
//!
//! ```text
//! S        = sup^6 w^3
//! d_x S    = -18 w^2 |x|^4 x
//! d_xx S   = (216 w rho^6 - 72 w^2) |x|^2 x x^T - 18 w^2 |x|^4 I
//! ```
//!
//! which is the collected closed form with the `||gamma||_0^12` denominator
//! cancelled, so it stays finite for tiny paths. `S = 0` when `sup = 0`.

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HVector, Matrix, SpectralOperator};
use crate::path::DiscretePath;

use super::{FunctionalDerivatives, SmoothFunctional};

/// Closed-form jet with the structure `dx = slope * x`,
/// `dxx = outer * x x^T + iso * I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeJet {
    pub value: f64,
    pub slope: f64,
    pub outer: f64,
    pub iso: f64,
}

impl GaugeJet {
    /// `(d_x f, v)`.
    pub fn dx_dot(&self, x: &[f64], v: &[f64]) -> f64 {
        self.slope * crate::hilbert::dot(x, v)
    }

    /// `Tr(d_xx f G G^T)` with `G` given column-major `N x d`.
    pub fn trace_with(&self, x: &[f64], g: &Matrix) -> f64 {
        let gtx = g.tr_mul(&nalgebra::DVector::from_column_slice(x));
        self.outer * gtx.norm_squared() + self.iso * g.norm_squared()
    }

    pub fn to_derivatives(&self, x: &HVector) -> FunctionalDerivatives {
        let n = x.dim();
        let mut dxx = Matrix::identity(n, n) * self.iso;
        for i in 0..n {
            for j in 0..n {
                dxx[(i, j)] += self.outer * x[i] * x[j];
            }
        }
        FunctionalDerivatives {
            value: self.value,
            dt: 0.0,
            dx: x.scale(self.slope),
            dxx,
        }
    }

    fn add(self, other: GaugeJet) -> GaugeJet {
        GaugeJet {
            value: self.value + other.value,
            slope: self.slope + other.slope,
            outer: self.outer + other.outer,
            iso: self.iso + other.iso,
        }
    }
}

/// Jet of `S` given the maximum norm strictly before the endpoint.
pub fn s_jet(pre_sup: f64, x: &[f64]) -> GaugeJet {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let r = r2.sqrt();
    let sup = pre_sup.max(r);
    if sup == 0.0 || r >= sup {
        return GaugeJet {
            value: 0.0,
            slope: 0.0,
            outer: 0.0,
            iso: 0.0,
        };
    }
    let rho = r / sup;
    let rho6 = rho.powi(6);
    let w = 1.0 - rho6;
    let r4 = r2 * r2;
    GaugeJet {
        value: sup.powi(6) * w * w * w,
        slope: -18.0 * w * w * r4,
        outer: (216.0 * w * rho6 - 72.0 * w * w) * r2,
        iso: -18.0 * w * w * r4,
    }
}

/// Jet of `M |x|^6`.
fn endpoint_sixth_jet(m: f64, x: &[f64]) -> GaugeJet {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let r4 = r2 * r2;
    GaugeJet {
        value: m * r4 * r2,
        slope: 6.0 * m * r4,
        outer: 24.0 * m * r2,
        iso: 6.0 * m * r4,
    }
}

/// Jet of `Upsilon^M = S + M |x|^6`.
pub fn upsilon_jet(pre_sup: f64, x: &[f64], m: f64) -> GaugeJet {
    s_jet(pre_sup, x).add(endpoint_sixth_jet(m, x))
}

/// `S` and its pathwise derivatives; `d_t S = 0`.
pub fn eval_s(path: &DiscretePath) -> FunctionalDerivatives {
    let x = path.endpoint();
    s_jet(path.pre_sup(), &x.0).to_derivatives(x)
}

/// `Upsilon^M` and its pathwise derivatives.
pub fn eval_upsilon(path: &DiscretePath, m: f64) -> Result<FunctionalDerivatives> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("Upsilon^M needs M >= 1, got {m}")));
    }
    let x = path.endpoint();
    Ok(upsilon_jet(path.pre_sup(), &x.0, m).to_derivatives(x))
}

fn upsilon_value(path: &DiscretePath, m: f64) -> f64 {
    upsilon_jet(path.pre_sup(), &path.endpoint().0, m).value
}

/// `Upsilon^M(gamma_t, eta_s) = Upsilon^M(eta_s - gamma_{t,s,A})` for `s >= t`.
pub fn eval_upsilon_pair(gamma: &DiscretePath, eta: &DiscretePath, op: &SpectralOperator, m: f64) -> Result<f64> {
    if eta.end_index() < gamma.end_index() {
        return Err(Error::Domain(format!(
            "pair needs s >= t (t = {}, s = {})",
            gamma.end_time(),
            eta.end_time()
        )));
    }
    if !gamma.grid().same_as(eta.grid()) {
        return Err(Error::Grid("paths live on different grids".into()));
    }
    check_dim(gamma.dim(), eta.dim())?;
    let ext = gamma.semigroup_extend(op, eta.end_index())?;
    let diff = eta.checked_sub(&ext)?;
    Ok(upsilon_value(&diff, m))
}

/// Gauge-type function `Upsilon^M(gamma_t, eta_s) + |s - t|^2`.
///
/// Symmetric: the earlier of the two paths is the one extended by the semigroup.
pub fn eval_gauge(gamma: &DiscretePath, eta: &DiscretePath, op: &SpectralOperator, m: f64) -> Result<f64> {
    let (early, late) = if gamma.end_index() <= eta.end_index() {
        (gamma, eta)
    } else {
        (eta, gamma)
    };
    let gap = late.end_time() - early.end_time();
    Ok(eval_upsilon_pair(early, late, op, m)? + gap * gap)
}

/// Modulus for gauge axiom (ii) under a contraction semigroup: a gauge value
/// `<= delta` forces `d_infty <= sqrt(delta) + (27 delta / 8)^(1/6)`.
pub fn gauge_modulus(delta: f64) -> f64 {
    delta.sqrt() + (27.0 * delta / 8.0).powf(1.0 / 6.0)
}

/// `Upsilon^M` as a streaming functional; memory is the pre-endpoint sup norm.
#[derive(Clone, Copy, Debug)]
pub struct Upsilon {
    pub m: f64,
}

impl Upsilon {
    pub fn new(m: f64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::Domain(format!("Upsilon^M needs M >= 1, got {m}")));
        }
        Ok(Self { m })
    }
}

impl SmoothFunctional for Upsilon {
    type Memory = f64;

    fn memory(&self, history: &[HVector]) -> f64 {
        history.iter().map(HVector::norm).fold(0.0, f64::max)
    }

    fn absorb(&self, memory: &mut f64, node: &HVector) {
        *memory = memory.max(node.norm());
    }

    fn jet(&self, memory: &f64, _time: f64, x: &HVector) -> FunctionalDerivatives {
        upsilon_jet(*memory, &x.0, self.m).to_derivatives(x)
    }

    fn growth_degree(&self) -> u32 {
        6
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{fd_derivatives, fd_richardson};
    use crate::path::PathGrid;
    use approx::assert_abs_diff_eq;

    fn grid() -> PathGrid {
        PathGrid::new(0.25, 8).unwrap()
    }

    /// Direct transcription of the definition, independent of the jet algebra.
    fn s_by_definition(p: &DiscretePath) -> f64 {
        let sup = p.sup_norm();
        if sup == 0.0 {
            return 0.0;
        }
        let r6 = p.endpoint().norm().powi(6);
        (sup.powi(6) - r6).powi(3) / sup.powi(12)
    }

    #[test]
    fn s_examples() {
        let c = DiscretePath::scalar(grid(), &[0.7, 0.7, 0.7]).unwrap();
        let d = eval_s(&c);
        assert_eq!(d.value, 0.0);
        assert_eq!(d.dx[0], 0.0);
        assert_eq!(d.dxx[(0, 0)], 0.0);

        let p = DiscretePath::scalar(grid(), &[1.0, 1.0, 0.5]).unwrap();
        let d = eval_s(&p);
        assert_abs_diff_eq!(d.value, 0.9538536072, epsilon = 1e-10);
        assert_abs_diff_eq!(d.value, s_by_definition(&p), epsilon = 1e-15);
        // Frozen from a central difference of the definition, h in 1e-4..1e-6.
        assert_abs_diff_eq!(d.dx[0], -0.5450592041, epsilon = 1e-9);
        assert_eq!(d.dt, 0.0);
    }

    #[test]
    fn s_derivative_oracle_h_sweep() {
        let p = DiscretePath::scalar(grid(), &[1.0, 1.0, 0.5]).unwrap();
        for h in [1e-4, 1e-5, 1e-6] {
            let d = fd_derivatives(&s_by_definition, &p, h).unwrap();
            assert!((d.dx[0] + 0.5450592041).abs() < 1e-5, "h={h}: {}", d.dx[0]);
        }
    }

    #[test]
    fn upsilon_examples() {
        let c = DiscretePath::scalar(grid(), &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(eval_upsilon(&c, 3.0).unwrap().value, 0.046875, epsilon = 1e-15);
        let p = DiscretePath::scalar(grid(), &[1.0, 1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(eval_upsilon(&p, 3.0).unwrap().value, 1.0007286072, epsilon = 1e-10);
        let z = DiscretePath::new(grid(), vec![HVector::zeros(2); 3]).unwrap();
        let d = eval_upsilon(&z, 5.0).unwrap();
        assert_eq!(d, FunctionalDerivatives::zero(2));
        assert!(eval_upsilon(&p, 0.5).is_err());
    }

    #[test]
    fn pair_and_gauge_examples() {
        let g = PathGrid::new(0.5, 2).unwrap();
        let zero = SpectralOperator::zero(1).unwrap();
        let gamma = DiscretePath::scalar(g, &[1.0, 1.0]).unwrap();
        let eta = DiscretePath::scalar(g, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(eval_upsilon_pair(&gamma, &eta, &zero, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(eval_gauge(&gamma, &eta, &zero, 3.0).unwrap(), 0.25);
        assert_abs_diff_eq!(eval_gauge(&eta, &gamma, &zero, 3.0).unwrap(), 0.25);
        assert_eq!(eval_gauge(&eta, &eta, &zero, 3.0).unwrap(), 0.0);
        assert!(eval_upsilon_pair(&eta, &gamma, &zero, 3.0).is_err());

        let a = SpectralOperator::new(vec![-1.0]).unwrap();
        let ext = gamma.semigroup_extend(&a, 2).unwrap();
        assert_eq!(eval_upsilon_pair(&gamma, &ext, &a, 3.0).unwrap(), 0.0);
        let origin = DiscretePath::scalar(g, &[0.0, 0.0]).unwrap();
        let bumpy = DiscretePath::scalar(g, &[0.3, -1.2, 0.4]).unwrap();
        assert_abs_diff_eq!(
            eval_upsilon_pair(&origin, &bumpy, &a, 3.0).unwrap(),
            eval_upsilon(&bumpy, 3.0).unwrap().value
        );
    }

    #[test]
    fn doubling_equality_on_constants() {
        let one = DiscretePath::scalar(grid(), &[1.0, 1.0]).unwrap();
        let two = one.checked_add(&one).unwrap();
        let lhs = 32.0 * eval_upsilon(&one, 3.0).unwrap().value * 2.0;
        assert_eq!(lhs, 192.0);
        assert_eq!(eval_upsilon(&two, 3.0).unwrap().value, 192.0);
    }

    #[test]
    fn closed_form_matches_fd_in_two_dims() {
        let p = DiscretePath::new(
            grid(),
            vec![
                HVector(vec![0.3, 1.4]),
                HVector(vec![-1.1, 0.9]),
                HVector(vec![0.4, -0.6]),
            ],
        )
        .unwrap();
        let f = |q: &DiscretePath| upsilon_value(q, 3.0);
        let r = fd_richardson(&f, &p, 1e-4 * p.sup_norm().max(1.0)).unwrap();
        let d = eval_upsilon(&p, 3.0).unwrap();
        for k in 0..2 {
            assert!((r.extrapolated.dx[k] - d.dx[k]).abs() < 1e-7 * (1.0 + d.dx[k].abs()));
            for l in 0..2 {
                assert!((r.extrapolated.dxx[(k, l)] - d.dxx[(k, l)]).abs() < 1e-5 * (1.0 + d.dxx[(k, l)].abs()));
            }
        }
        assert!(d.asymmetry() < 1e-12);
    }

    #[test]
    fn trace_with_matches_dense() {
        let x = HVector(vec![0.4, -0.6, 0.2]);
        let jet = upsilon_jet(1.3, &x.0, 3.0);
        let g = Matrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let dense = crate::calculus::trace_lggt(&jet.to_derivatives(&x).dxx, &g);
        assert_abs_diff_eq!(jet.trace_with(&x.0, &g), dense, epsilon = 1e-12);
    }

    #[test]
    fn flat_extension_leaves_s_unchanged() {
        let p = DiscretePath::scalar(grid(), &[0.2, -1.3, 0.8, 0.4]).unwrap();
        let e = p.flat_extend(7).unwrap();
        assert_eq!(eval_s(&p).value.to_bits(), eval_s(&e).value.to_bits());
    }
}
