//! Least-squares conditional expectations on a polynomial feature basis.
//!
//! Raw features are standardized per step; features that are constant over
//! the batch are dropped. Basis columns that are (numerically) linear
//! combinations of earlier columns are pruned while the Gram matrix is
//! factored, so exact collinearities such as `x^2 = max|X|^2` right after a
//! start at zero never reach the solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::PathFeatures;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feature {
    Endpoint,
    RunningMax,
    RunningIntegral,
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_features")]
    pub features: Vec<Feature>,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_picard")]
    pub picard_iterations: usize,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
}

fn default_degree() -> u32 {
    3
}
fn default_features() -> Vec<Feature> {
    vec![Feature::Endpoint, Feature::RunningMax, Feature::Time]
}
fn default_ridge() -> f64 {
    1e-10
}
fn default_picard() -> usize {
    2
}
fn default_max_condition() -> f64 {
    1e12
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self {
            degree: default_degree(),
            features: default_features(),
            ridge: default_ridge(),
            picard_iterations: default_picard(),
            max_condition: default_max_condition(),
        }
    }
}

impl RegressionSpec {
    /// Raw feature vector of one path.
    pub fn raw(&self, f: &PathFeatures, out: &mut Vec<f64>) {
        out.clear();
        for feat in &self.features {
            match feat {
                Feature::Endpoint => out.extend_from_slice(&f.endpoint.0),
                Feature::RunningMax => out.push(f.running_max),
                Feature::RunningIntegral => out.extend_from_slice(&f.running_integral.0),
                Feature::Time => out.push(f.time),
            }
        }
    }
}

/// Relative residual-pivot threshold under which a column counts as collinear.
const PRUNE: f64 = 1e-10;

/// Exponent vectors of total degree `<= degree` in `k` variables, constant first.
fn exponents(k: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0; k]];
    if k == 0 {
        return out;
    }
    for total in 1..=degree {
        let mut cur = vec![0u32; k];
        fill(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// A fitted basis: standardization, surviving columns and the factorization.
#[derive(Clone, Debug)]
pub struct Regressor {
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Raw feature indices that vary over the batch.
    active: Vec<usize>,
    terms: Vec<Vec<u32>>,
    chol: DMatrix<f64>,
    design: DMatrix<f64>,
    pub condition: f64,
}

/// Coefficients of one regression, evaluable on new features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub active: Vec<usize>,
    pub terms: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
}

fn basis_row(z: &[f64], terms: &[Vec<u32>], row: &mut [f64]) {
    for (t, r) in terms.iter().zip(row.iter_mut()) {
        let mut v = 1.0;
        for (x, &e) in z.iter().zip(t) {
            for _ in 0..e {
                v *= x;
            }
        }
        *r = v;
    }
}

impl Regressor {
    /// Builds the design from raw feature rows (`n_rows x n_raw`, row-major).
    pub fn fit(raw: &[f64], n_raw: usize, spec: &RegressionSpec, step: usize) -> Result<Self> {
        let n = raw.len() / n_raw.max(1);
        if n == 0 {
            return Err(Error::Empty("regression sample"));
        }
        let mut means = vec![0.0; n_raw];
        let mut scales = vec![0.0; n_raw];
        let mut active = Vec::new();
        for j in 0..n_raw {
            let col: Vec<f64> = (0..n).map(|p| raw[p * n_raw + j]).collect();
            let m = crate::stats::mean(&col);
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            means[j] = m;
            scales[j] = var.sqrt();
            if scales[j] > 1e-12 * (1.0 + m.abs()) {
                active.push(j);
            }
        }
        let all_terms = exponents(active.len(), spec.degree);
        let k = all_terms.len();
        let mut design = DMatrix::zeros(n, k);
        let mut z = vec![0.0; active.len()];
        let mut row = vec![0.0; k];
        for p in 0..n {
            for (a, &j) in active.iter().enumerate() {
                z[a] = (raw[p * n_raw + j] - means[j]) / scales[j];
            }
            basis_row(&z, &all_terms, &mut row);
            for c in 0..k {
                design[(p, c)] = row[c];
            }
        }
        let gram = design.tr_mul(&design) / n as f64;

        // Cholesky in column order; collinear columns are skipped.
        let mut kept: Vec<usize> = Vec::new();
        let mut l = DMatrix::<f64>::zeros(k, k);
        let mut pivots = Vec::new();
        for c in 0..k {
            let r = kept.len();
            let mut row_l = vec![0.0; r];
            for (a, &ka) in kept.iter().enumerate() {
                let mut s = gram[(c, ka)];
                for b in 0..a {
                    s -= row_l[b] * l[(a, b)];
                }
                row_l[a] = s / l[(a, a)];
            }
            let d = gram[(c, c)] - row_l.iter().map(|v| v * v).sum::<f64>();
            if d <= PRUNE * gram[(c, c)] {
                continue;
            }
            for (a, v) in row_l.iter().enumerate() {
                l[(r, a)] = *v;
            }
            l[(r, r)] = d.sqrt();
            pivots.push(d);
            kept.push(c);
        }
        let kk = kept.len();
        let pmax = pivots.iter().cloned().fold(0.0, f64::max);
        let pmin = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = pmax / pmin;
        if !condition.is_finite() || condition > spec.max_condition {
            return Err(Error::RankDeficient { step, condition });
        }
        let terms: Vec<Vec<u32>> = kept.iter().map(|&c| all_terms[c].clone()).collect();
        let design = design.select_columns(&kept);
        let mut g = gram.select_rows(&kept).select_columns(&kept);
        // The intercept is not penalised, so fitted values keep the sample mean.
        for i in 1..kk {
            g[(i, i)] += spec.ridge;
        }
        let chol = g.cholesky().ok_or(Error::RankDeficient { step, condition })?.l();
        Ok(Self {
            means,
            scales,
            active,
            terms,
            chol,
            design,
            condition,
        })
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Least-squares coefficients for `target`.
    pub fn coefficients(&self, target: &[f64]) -> Vec<f64> {
        let n = target.len() as f64;
        let rhs = self.design.tr_mul(&DVector::from_column_slice(target)) / n;
        let y = self.chol.solve_lower_triangular(&rhs).expect("nonsingular factor");
        let c = self.chol.tr_solve_lower_triangular(&y).expect("nonsingular factor");
        c.as_slice().to_vec()
    }

    /// In-sample fitted values.
    pub fn fitted(&self, coefficients: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coefficients);
        (&self.design * c).as_slice().to_vec()
    }

    /// Diagonal of the hat matrix: how much each row's own target moves its
    /// fitted value.
    pub fn leverages(&self) -> Vec<f64> {
        let (n, k) = self.design.shape();
        // h_p = x_p' G^-1 x_p / n with G = L L'.
        let eye = DMatrix::<f64>::identity(k, k);
        let l_inv = self.chol.solve_lower_triangular(&eye).expect("nonsingular factor");
        let g_inv = l_inv.tr_mul(&l_inv);
        let mut x = vec![0.0; k];
        (0..n)
            .map(|p| {
                for (c, v) in x.iter_mut().enumerate() {
                    *v = self.design[(p, c)];
                }
                let mut q = 0.0;
                for a in 0..k {
                    let mut s = 0.0;
                    for b in 0..k {
                        s += g_inv[(a, b)] * x[b];
                    }
                    q += x[a] * s;
                }
                q / n as f64
            })
            .collect()
    }

    pub fn step_fit(&self, coefficients: Vec<f64>) -> StepFit {
        StepFit {
            means: self.means.clone(),
            scales: self.scales.clone(),
            active: self.active.clone(),
            terms: self.terms.clone(),
            coefficients,
        }
    }
}

impl StepFit {
    /// Evaluates the fitted function at a raw feature vector.
    pub fn eval(&self, raw: &[f64]) -> f64 {
        let z: Vec<f64> = self
            .active
            .iter()
            .map(|&j| (raw[j] - self.means[j]) / self.scales[j])
            .collect();
        let mut row = vec![0.0; self.terms.len()];
        basis_row(&z, &self.terms, &mut row);
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_counts() {
        assert_eq!(exponents(1, 3).len(), 4);
        assert_eq!(exponents(2, 3).len(), 10);
        assert_eq!(exponents(4, 3).len(), 35);
        assert_eq!(exponents(0, 3).len(), 1);
        assert_eq!(exponents(2, 2)[0], vec![0, 0]);
    }

    #[test]
    fn recovers_cubic_and_prunes_duplicates() {
        // features (x, |x|) with x >= 0: the second is a copy of the first.
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0).collect();
        let raw: Vec<f64> = xs.iter().flat_map(|&x| [x, x]).collect();
        let spec = RegressionSpec::default();
        let r = Regressor::fit(&raw, 2, &spec, 0).unwrap();
        assert_eq!(r.n_terms(), 4);
        let y: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x * x).collect();
        let c = r.coefficients(&y);
        let fit = r.step_fit(c);
        for &x in &[0.3, 1.1, 1.7] {
            let want = 1.0 - 2.0 * x + 0.5 * x * x * x;
            assert!((fit.eval(&[x, x]) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_features_reduce_to_the_mean() {
        let raw = vec![2.0; 10];
        let r = Regressor::fit(&raw, 1, &RegressionSpec::default(), 0).unwrap();
        assert_eq!(r.n_terms(), 1);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let c = r.coefficients(&y);
        assert!((c[0] - 5.5).abs() < 1e-9);
    }
}
