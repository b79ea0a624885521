//! Paths on a uniform time lattice, the sup norm, the path metric and the
//! three path extensions (vertical bump, flat, semigroup).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{HVector, SpectralOperator};

/// Uniform lattice `t_i = i * dt`, `i = 0..=n_steps`; the horizon is `n_steps * dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl PathGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("dt = {dt} must be positive")));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid with `dt` dividing `horizon` (relative tolerance 1e-9).
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self> {
        let n = horizon / dt;
        let rounded = n.round();
        if !(horizon > 0.0) || rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Grid(format!("dt = {dt} does not divide horizon {horizon}")));
        }
        Self::new(dt, rounded as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    /// Node index of a time that must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let r = x.round();
        if r < 0.0 || (x - r).abs() > 1e-9 * r.max(1.0) || r as usize > self.n_steps {
            return Err(Error::Grid(format!("time {t} is not a grid node")));
        }
        Ok(r as usize)
    }

    pub fn same_as(&self, other: &PathGrid) -> bool {
        self.n_steps == other.n_steps && (self.dt - other.dt).abs() <= 1e-14 * self.dt
    }
}

/// A path `gamma_t` sampled on the nodes `0..=end` of a [`PathGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    grid: PathGrid,
    values: Vec<HVector>,
}

impl DiscretePath {
    pub fn new(grid: PathGrid, values: Vec<HVector>) -> Result<Self> {
        let first = values.first().ok_or(Error::Empty("path"))?;
        let dim = first.dim();
        for v in &values {
            check_dim(dim, v.dim())?;
        }
        if values.len() > grid.n_steps + 1 {
            return Err(Error::Grid(format!(
                "path with {} nodes exceeds horizon of {} steps",
                values.len(),
                grid.n_steps
            )));
        }
        Ok(Self { grid, values })
    }

    /// Scalar path from plain values.
    pub fn scalar(grid: PathGrid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&x| HVector(vec![x])).collect())
    }

    /// Constant path equal to `x` on nodes `0..=end`.
    pub fn constant(grid: PathGrid, x: HVector, end: usize) -> Result<Self> {
        Self::new(grid, vec![x; end + 1])
    }

    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn values(&self) -> &[HVector] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn end_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.grid.time(self.end_index())
    }

    pub fn endpoint(&self) -> &HVector {
        self.values.last().expect("paths are non-empty")
    }

    /// `||gamma_t||_0`: maximum node norm.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(HVector::norm).fold(0.0, f64::max)
    }

    /// Maximum node norm strictly before the endpoint (0 for a single node).
    pub fn pre_sup(&self) -> f64 {
        self.values[..self.end_index()]
            .iter()
            .map(HVector::norm)
            .fold(0.0, f64::max)
    }

    /// `gamma^x_t`: the endpoint shifted by `x`.
    pub fn vertical_bump(&self, x: &HVector) -> Result<Self> {
        check_dim(self.dim(), x.dim())?;
        let mut values = self.values.clone();
        let last = values.last_mut().expect("non-empty");
        *last = &*last + x;
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    fn check_extension_target(&self, to_index: usize) -> Result<()> {
        if to_index < self.end_index() {
            return Err(Error::Grid(format!(
                "extension target {to_index} precedes path end {}",
                self.end_index()
            )));
        }
        if to_index > self.grid.n_steps {
            return Err(Error::Grid(format!(
                "extension target {to_index} beyond horizon index {}",
                self.grid.n_steps
            )));
        }
        Ok(())
    }

    /// `gamma_{t,s}`: the endpoint value frozen on `(t, s]`.
    pub fn flat_extend(&self, to_index: usize) -> Result<Self> {
        self.check_extension_target(to_index)?;
        let mut values = self.values.clone();
        let last = self.endpoint().clone();
        values.resize(to_index + 1, last);
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// `gamma_{t,s,A}`: node `sigma > t` carries `e^{(sigma - t)A} gamma(t)`.
    pub fn semigroup_extend(&self, op: &SpectralOperator, to_index: usize) -> Result<Self> {
        self.check_extension_target(to_index)?;
        check_dim(op.dim(), self.dim())?;
        let end = self.end_index();
        let mut values = self.values.clone();
        values.reserve(to_index - end);
        for j in end + 1..=to_index {
            let lag = self.grid.time(j - end);
            values.push(op.semigroup_apply(lag, self.endpoint())?);
        }
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// Restriction `gamma_s` to nodes `0..=index`.
    pub fn restrict(&self, index: usize) -> Result<Self> {
        if index > self.end_index() {
            return Err(Error::Grid(format!(
                "restriction index {index} beyond path end {}",
                self.end_index()
            )));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values[..=index].to_vec(),
        })
    }

    /// Nodewise difference of two paths ending at the same node.
    pub fn checked_sub(&self, other: &DiscretePath) -> Result<Self> {
        if !self.grid.same_as(&other.grid) || self.end_index() != other.end_index() {
            return Err(Error::Grid("difference of paths on different nodes".into()));
        }
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn checked_add(&self, other: &DiscretePath) -> Result<Self> {
        if !self.grid.same_as(&other.grid) || self.end_index() != other.end_index() {
            return Err(Error::Grid("sum of paths on different nodes".into()));
        }
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Running summary used by path-dependent coefficients.
    pub fn features(&self) -> PathFeatures {
        let mut f = PathFeatures::start(self.values[0].clone());
        for v in &self.values[1..] {
            f.advance(v, self.grid.dt);
        }
        f
    }

    /// CSV with header `time,c1,...,cN`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|k| format!("c{k}")).collect();
        writeln!(out, "time,{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            write!(out, "{:.16e}", self.grid.time(i))?;
            for x in &v.0 {
                write!(out, ",{x:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv); node times must match `grid`.
    pub fn read_csv<R: BufRead>(grid: PathGrid, input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or(Error::Empty("path csv"))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"time") || cols.len() < 2 {
            return Err(Error::Parse(format!("bad path csv header `{header}`")));
        }
        for (k, c) in cols[1..].iter().enumerate() {
            if *c != format!("c{}", k + 1) {
                return Err(Error::Parse(format!("bad path csv header `{header}`")));
            }
        }
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let nums = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            if nums.len() != cols.len() {
                return Err(Error::Parse(format!("row {} has {} columns", i + 1, nums.len())));
            }
            let t = grid.time(i);
            if (nums[0] - t).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(Error::Grid(format!(
                    "row {} has time {} (expected {t})",
                    i + 1,
                    nums[0]
                )));
            }
            values.push(HVector(nums[1..].to_vec()));
        }
        Self::new(grid, values)
    }
}

/// `d_infty(gamma_t, eta_s) = |t - s| + || gamma_{t,T,A} - eta_{s,T,A} ||_0`, with
/// `T` the grid horizon.
pub fn d_infty(gamma: &DiscretePath, eta: &DiscretePath, op: &SpectralOperator) -> Result<f64> {
    if !gamma.grid.same_as(&eta.grid) {
        return Err(Error::Grid("paths live on different grids".into()));
    }
    check_dim(gamma.dim(), eta.dim())?;
    check_dim(op.dim(), gamma.dim())?;
    let horizon = gamma.grid.n_steps;
    let g = gamma.semigroup_extend(op, horizon)?;
    let e = eta.semigroup_extend(op, horizon)?;
    let sup = g
        .values
        .iter()
        .zip(&e.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok((gamma.end_time() - eta.end_time()).abs() + sup)
}

/// Running summary of a path: endpoint, running maximum of `|X|`, and the
/// left-point running integral `sum_{j<m} X_j dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFeatures {
    pub step: usize,
    pub time: f64,
    pub endpoint: HVector,
    /// `max_{j <= m} |X_j|`.
    pub running_max: f64,
    /// `max_{j < m} |X_j|` (0 at the first node).
    pub pre_sup: f64,
    pub running_integral: HVector,
}

impl PathFeatures {
    pub fn start(x0: HVector) -> Self {
        let n = x0.dim();
        Self {
            step: 0,
            time: 0.0,
            running_max: x0.norm(),
            pre_sup: 0.0,
            running_integral: HVector::zeros(n),
            endpoint: x0,
        }
    }

    /// Appends the next node.
    pub fn advance(&mut self, next: &HVector, dt: f64) {
        self.running_integral.axpy(dt, &self.endpoint);
        self.pre_sup = self.running_max;
        self.running_max = self.running_max.max(next.norm());
        self.endpoint.0.copy_from_slice(&next.0);
        self.step += 1;
        self.time = self.step as f64 * dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> PathGrid {
        PathGrid::new(0.25, 4).unwrap()
    }

    fn h(v: &[f64]) -> HVector {
        HVector(v.to_vec())
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(DiscretePath::scalar(grid(), &[1.0, -3.0, 2.0]).unwrap().sup_norm(), 3.0);
        assert_eq!(DiscretePath::scalar(grid(), &[0.0]).unwrap().sup_norm(), 0.0);
        let p = DiscretePath::new(grid(), vec![h(&[3.0, 4.0])]).unwrap();
        assert_eq!(p.sup_norm(), 5.0);
    }

    #[test]
    fn vertical_bump_examples() {
        let p = DiscretePath::scalar(grid(), &[1.0, 2.0]).unwrap();
        assert_eq!(p.vertical_bump(&h(&[0.0])).unwrap(), p);
        let b = p.vertical_bump(&h(&[0.5])).unwrap();
        assert_eq!(b.values(), &[h(&[1.0]), h(&[2.5])]);
        let q = DiscretePath::new(grid(), vec![h(&[1.0, 0.0])]).unwrap();
        assert_eq!(q.vertical_bump(&h(&[0.0, -1.0])).unwrap().values(), &[h(&[1.0, -1.0])]);
        assert!(p.vertical_bump(&h(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn flat_extend_examples() {
        let p = DiscretePath::scalar(grid(), &[1.0, 2.0]).unwrap();
        assert_eq!(p.flat_extend(1).unwrap(), p);
        let s = DiscretePath::scalar(grid(), &[1.0]).unwrap();
        assert_eq!(s.flat_extend(2).unwrap().values(), &[h(&[1.0]), h(&[1.0]), h(&[1.0])]);
        let q = DiscretePath::new(grid(), vec![h(&[1.0, 2.0])]).unwrap();
        assert_eq!(q.flat_extend(1).unwrap().values()[1], h(&[1.0, 2.0]));
        assert!(p.flat_extend(0).is_err());
        assert!(p.flat_extend(5).is_err());
    }

    #[test]
    fn semigroup_extend_examples() {
        let g = PathGrid::new(0.5, 2).unwrap();
        let zero = SpectralOperator::zero(1).unwrap();
        let p = DiscretePath::scalar(g, &[0.3, 2.0]).unwrap();
        assert_eq!(p.semigroup_extend(&zero, 2).unwrap(), p.flat_extend(2).unwrap());
        let a = SpectralOperator::new(vec![-1.0]).unwrap();
        let e = p.semigroup_extend(&a, 2).unwrap();
        assert_abs_diff_eq!(e.values()[2][0], 1.2130613194, epsilon = 1e-10);
        assert_eq!(p.semigroup_extend(&a, 1).unwrap(), p);
    }

    #[test]
    fn d_infty_examples() {
        let g = PathGrid::new(0.5, 2).unwrap();
        let gamma = DiscretePath::scalar(g, &[1.0, 1.0]).unwrap();
        let eta = DiscretePath::scalar(g, &[1.0, 1.0, 1.0]).unwrap();
        let zero = SpectralOperator::zero(1).unwrap();
        assert_eq!(d_infty(&gamma, &gamma, &zero).unwrap(), 0.0);
        assert_abs_diff_eq!(d_infty(&gamma, &eta, &zero).unwrap(), 0.5, epsilon = 1e-15);
        let a = SpectralOperator::new(vec![-1.0]).unwrap();
        assert_abs_diff_eq!(d_infty(&gamma, &eta, &a).unwrap(), 0.8934693403, epsilon = 1e-10);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = PathGrid::new(0.1, 10).unwrap();
        let p = DiscretePath::new(
            g,
            (0..7)
                .map(|i| h(&[(i as f64 * 0.7).sin() / 3.0, 1e-300 * i as f64, -1.0 / 7.0]))
                .collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,c1,c2,c3\n"));
        let q = DiscretePath::read_csv(g, buf.as_slice()).unwrap();
        assert_eq!(p, q);
        let bad = "time,c1\n0.0,1.0\n0.3,2.0\n";
        assert!(DiscretePath::read_csv(g, bad.as_bytes()).is_err());
    }

    #[test]
    fn features_track_running_quantities() {
        let p = DiscretePath::scalar(grid(), &[1.0, -3.0, 2.0]).unwrap();
        let f = p.features();
        assert_eq!(f.step, 2);
        assert_eq!(f.running_max, 3.0);
        assert_eq!(f.pre_sup, 3.0);
        assert_abs_diff_eq!(f.running_integral[0], (1.0 - 3.0) * 0.25);
        assert_eq!(f.pre_sup, p.pre_sup());
    }

    fn arb_path(dim: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
        (0usize..6).prop_flat_map(move |end| (Just(end), prop::collection::vec(-3.0..3.0f64, (end + 1) * dim)))
    }

    fn build(g: PathGrid, dim: usize, raw: &[f64]) -> DiscretePath {
        DiscretePath::new(g, raw.chunks(dim).map(h).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn metric_axioms((_, a) in arb_path(2), (_, b) in arb_path(2), (_, c) in arb_path(2), lam in -4.0..=0.0f64) {
            let g = PathGrid::new(0.1, 8).unwrap();
            let op = SpectralOperator::new(vec![lam, 2.0 * lam]).unwrap();
            let (x, y, z) = (build(g, 2, &a), build(g, 2, &b), build(g, 2, &c));
            let dxy = d_infty(&x, &y, &op).unwrap();
            let dyx = d_infty(&y, &x, &op).unwrap();
            prop_assert!((dxy - dyx).abs() <= 1e-12);
            prop_assert_eq!(d_infty(&x, &x, &op).unwrap(), 0.0);
            let dxz = d_infty(&x, &z, &op).unwrap();
            let dzy = d_infty(&z, &y, &op).unwrap();
            prop_assert!(dxy <= dxz + dzy + 1e-12);
            if x != y {
                prop_assert!(dxy > 0.0 || x.semigroup_extend(&op, 8).unwrap() == y.semigroup_extend(&op, 8).unwrap());
            }
        }

        #[test]
        fn extension_properties((end, a) in arb_path(2), extra in 0usize..3, lam in -4.0..=0.0f64) {
            let g = PathGrid::new(0.1, 8).unwrap();
            let op = SpectralOperator::new(vec![lam, -1.0]).unwrap();
            let p = build(g, 2, &a);
            let target = end + extra;
            let e = p.semigroup_extend(&op, target).unwrap();
            prop_assert!(e.sup_norm() <= p.sup_norm() + 1e-15);
            prop_assert_eq!(e.restrict(end).unwrap(), p.clone());
            prop_assert_eq!(p.flat_extend(target).unwrap().restrict(end).unwrap(), p.clone());
            let zero = SpectralOperator::zero(2).unwrap();
            prop_assert_eq!(p.semigroup_extend(&zero, target).unwrap(), p.flat_extend(target).unwrap());
        }
    }
}
