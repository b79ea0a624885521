//! Test functionals `g(gamma_s) = h(s) Upsilon^3(gamma_s) + sum_i [ delta_i
//! Ubar^3(gamma_s - gamma^i_{t_i,s,A}) + delta'_i |gamma_s(s) - e^{(s-t_i)A}
//! gamma^i(t_i)|^6 ]` over a finite anchor list.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::SpectralOperator;
use crate::path::DiscretePath;

use super::gauge::upsilon_jet;
use super::FunctionalDerivatives;

/// Nonnegative C^1 time weight `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeWeight {
    Zero,
    Constant {
        c: f64,
    },
    /// `a + b t`.
    Affine {
        a: f64,
        b: f64,
    },
    /// `c e^{r t}`.
    Exponential {
        c: f64,
        rate: f64,
    },
}

impl TimeWeight {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeWeight::Zero => 0.0,
            TimeWeight::Constant { c } => c,
            TimeWeight::Affine { a, b } => a + b * t,
            TimeWeight::Exponential { c, rate } => c * (rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeWeight::Zero | TimeWeight::Constant { .. } => 0.0,
            TimeWeight::Affine { b, .. } => b,
            TimeWeight::Exponential { c, rate } => c * rate * (rate * t).exp(),
        }
    }

    /// `h >= 0` on `[0, horizon]` (affine and exponential weights are monotone,
    /// so checking the endpoints suffices).
    pub fn is_nonnegative_on(&self, horizon: f64) -> bool {
        self.value(0.0) >= 0.0 && self.value(horizon) >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeAnchor {
    pub path: DiscretePath,
    pub delta: f64,
    pub delta_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionalG {
    pub weight: TimeWeight,
    pub anchors: Vec<GaugeAnchor>,
    /// Class constant `N`: bounds the anchor weight sum and anchor sup norms.
    pub class_bound: f64,
    /// Declared bound on the weight mass of anchors dropped by truncation.
    pub tail_mass: f64,
}

impl TestFunctionalG {
    pub fn new(weight: TimeWeight, anchors: Vec<GaugeAnchor>, class_bound: f64, horizon: f64) -> Result<Self> {
        if !weight.is_nonnegative_on(horizon) {
            return Err(Error::Domain("time weight h must be >= 0 on [0,T]".into()));
        }
        let mut mass = 0.0;
        for a in &anchors {
            if a.delta < 0.0 || a.delta_prime < 0.0 {
                return Err(Error::Domain("anchor weights must be >= 0".into()));
            }
            if a.path.sup_norm() > class_bound {
                return Err(Error::Domain(format!(
                    "anchor sup norm {} exceeds class bound {class_bound}",
                    a.path.sup_norm()
                )));
            }
            mass += a.delta + a.delta_prime;
        }
        if mass > class_bound {
            return Err(Error::Domain(format!(
                "anchor weight sum {mass} exceeds class bound {class_bound}"
            )));
        }
        Ok(Self {
            weight,
            anchors,
            class_bound,
            tail_mass: 0.0,
        })
    }

    /// `h(s) Upsilon^3` only.
    pub fn weighted_upsilon(weight: TimeWeight) -> Self {
        Self {
            weight,
            anchors: Vec::new(),
            class_bound: 0.0,
            tail_mass: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::weighted_upsilon(TimeWeight::Zero)
    }

    /// Value and the derivative bundle used in the viscosity inequalities:
    /// `d_t g = h'(s) Upsilon^3 + 2 sum_i delta_i (s - t_i)`, and vertical
    /// derivatives of every term.
    pub fn eval(&self, path: &DiscretePath, op: &SpectralOperator) -> Result<FunctionalDerivatives> {
        check_dim(op.dim(), path.dim())?;
        let s = path.end_time();
        let x = path.endpoint();
        let n = path.dim();
        let mut out = FunctionalDerivatives::zero(n);

        let hv = self.weight.value(s);
        let base = upsilon_jet(path.pre_sup(), &x.0, 3.0);
        if hv != 0.0 || self.weight.derivative(s) != 0.0 {
            let d = base.to_derivatives(x);
            out.add_scaled(hv, &d);
            out.dt += self.weight.derivative(s) * base.value;
        }

        for (i, a) in self.anchors.iter().enumerate() {
            if a.path.end_index() > path.end_index() {
                return Err(Error::Domain(format!(
                    "anchor {i} ends at {} after the path end {s}",
                    a.path.end_time()
                )));
            }
            let ti = a.path.end_time();
            if a.delta != 0.0 {
                let ext = a.path.semigroup_extend(op, path.end_index())?;
                let diff = path.checked_sub(&ext)?;
                let jet = upsilon_jet(diff.pre_sup(), &diff.endpoint().0, 3.0);
                let mut d = jet.to_derivatives(diff.endpoint());
                d.value += (s - ti) * (s - ti);
                d.dt = 2.0 * (s - ti);
                out.add_scaled(a.delta, &d);
            }
            if a.delta_prime != 0.0 {
                let target = op.semigroup_apply(s - ti, a.path.endpoint())?;
                let y = x - &target;
                let r2 = y.norm_sq();
                let mut d = FunctionalDerivatives::zero(n);
                d.value = r2 * r2 * r2;
                d.dx = y.scale(6.0 * r2 * r2);
                for k in 0..n {
                    d.dxx[(k, k)] += 6.0 * r2 * r2;
                    for l in 0..n {
                        d.dxx[(k, l)] += 24.0 * r2 * y[k] * y[l];
                    }
                }
                out.add_scaled(a.delta_prime, &d);
            }
        }
        Ok(out)
    }
}

impl GaugeAnchor {
    /// Anchor with gauge weight only.
    pub fn gauge(path: DiscretePath, delta: f64) -> Self {
        Self {
            path,
            delta,
            delta_prime: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{eval_upsilon, vertical_fd};
    use crate::path::PathGrid;
    use approx::assert_abs_diff_eq;

    fn grid() -> PathGrid {
        PathGrid::new(0.25, 8).unwrap()
    }

    #[test]
    fn zero_functional_is_zero() {
        let p = DiscretePath::scalar(grid(), &[0.3, 1.0, -0.2]).unwrap();
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let d = TestFunctionalG::zero().eval(&p, &op).unwrap();
        assert_eq!(d, FunctionalDerivatives::zero(1));
    }

    #[test]
    fn unit_weight_is_upsilon3() {
        let p = DiscretePath::scalar(grid(), &[0.3, 1.0, -0.2]).unwrap();
        let op = SpectralOperator::zero(1).unwrap();
        let g = TestFunctionalG::weighted_upsilon(TimeWeight::Constant { c: 1.0 });
        let d = g.eval(&p, &op).unwrap();
        assert_eq!(d, eval_upsilon(&p, 3.0).unwrap());
        assert_eq!(d.dt, 0.0);
    }

    #[test]
    fn single_anchor_time_penalty() {
        let op = SpectralOperator::zero(1).unwrap();
        let anchor = DiscretePath::scalar(grid(), &[0.4, 0.7]).unwrap();
        let path = anchor.flat_extend(5).unwrap();
        let g = TestFunctionalG::new(
            TimeWeight::Zero,
            vec![GaugeAnchor::gauge(anchor.clone(), 1.0)],
            2.0,
            2.0,
        )
        .unwrap();
        let d = g.eval(&path, &op).unwrap();
        let gap = path.end_time() - anchor.end_time();
        assert_abs_diff_eq!(d.value, gap * gap, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dt, 2.0 * gap, epsilon = 1e-15);
        assert!(g.eval(&anchor.restrict(0).unwrap(), &op).is_err());
    }

    #[test]
    fn vertical_derivatives_match_fd() {
        let op = SpectralOperator::new(vec![-0.5]).unwrap();
        let anchor = DiscretePath::scalar(grid(), &[0.4, 0.9]).unwrap();
        let path = DiscretePath::scalar(grid(), &[0.1, 0.5, 1.4, 0.2]).unwrap();
        let g = TestFunctionalG::new(
            TimeWeight::Affine { a: 0.5, b: 0.1 },
            vec![GaugeAnchor {
                path: anchor,
                delta: 0.6,
                delta_prime: 0.3,
            }],
            2.0,
            2.0,
        )
        .unwrap();
        let d = g.eval(&path, &op).unwrap();
        let f = |p: &DiscretePath| g.eval(p, &op).unwrap().value;
        let (dx, dxx) = vertical_fd(&f, &path, 1e-5).unwrap();
        assert_abs_diff_eq!(dx[0], d.dx[0], epsilon = 1e-7);
        assert_abs_diff_eq!(dxx[(0, 0)], d.dxx[(0, 0)], epsilon = 1e-4);
    }

    #[test]
    fn class_constraints_enforced() {
        let a = DiscretePath::scalar(grid(), &[5.0]).unwrap();
        assert!(TestFunctionalG::new(TimeWeight::Zero, vec![GaugeAnchor::gauge(a.clone(), 1.0)], 2.0, 1.0).is_err());
        let b = DiscretePath::scalar(grid(), &[0.5]).unwrap();
        assert!(TestFunctionalG::new(TimeWeight::Zero, vec![GaugeAnchor::gauge(b.clone(), 3.0)], 2.0, 1.0).is_err());
        assert!(TestFunctionalG::new(TimeWeight::Affine { a: 0.1, b: -1.0 }, vec![], 2.0, 1.0).is_err());
    }
}
