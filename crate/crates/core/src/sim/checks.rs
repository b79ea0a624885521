//! Monte Carlo checks built on [`simulate`]: moment and modulus scaling,
//! Yosida convergence, the functional Ito formula and the Ito inequality
//! for `Upsilon^M`, and the noise tail projection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, SimOptions, TrajectoryBatch};
use crate::calculus::{upsilon_jet, SmoothFunctional};
use crate::error::{check_dim, Error, Result};
use crate::hilbert::{dot, HVector, Matrix};
use crate::model::{ControlModel, Policy};
use crate::path::{DiscretePath, PathFeatures, PathGrid};
use crate::stats::{loglog_slope, Estimate};

/// Constant initial path `gamma_{t0} = x0` on `[0, t0]`, placed on whatever
/// grid a check runs at.
fn initial_on(x0: &HVector, t0: f64, grid: PathGrid) -> Result<DiscretePath> {
    let end = grid.index_of(t0)?;
    DiscretePath::constant(grid, x0.clone(), end)
}

fn grid_for(model: &ControlModel, dt: f64) -> Result<PathGrid> {
    PathGrid::with_horizon(model.horizon, dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub dts: Vec<f64>,
    /// `E ||X_T||_0^p` per step size.
    pub sup_moments: Vec<Estimate>,
    /// All moments finite and within a factor 1.5 of each other.
    pub bounded: bool,
    pub lags: Vec<f64>,
    /// `E |X(t + lag) - e^{lag A} gamma(t)|^p` at the finest step.
    pub modulus: Vec<Estimate>,
    pub slope: f64,
}

/// Moment bound and time-modulus scaling from the constant path `x0` at `t0`.
#[allow(clippy::too_many_arguments)]
pub fn moment_and_modulus_check(
    model: &ControlModel,
    x0: &HVector,
    t0: f64,
    policy: &Policy,
    p: f64,
    dts: &[f64],
    lags: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<MomentReport> {
    if !(p > 2.0) {
        return Err(Error::Domain(format!("moment order p = {p} must exceed 2")));
    }
    if dts.is_empty() || lags.is_empty() {
        return Err(Error::Empty("step or lag ladder"));
    }
    let mut sup_moments = Vec::with_capacity(dts.len());
    let mut finest: Option<(f64, TrajectoryBatch)> = None;
    for &dt in dts {
        let grid = grid_for(model, dt)?;
        let init = initial_on(x0, t0, grid)?;
        let batch = simulate(model, &init, policy, &SimOptions::new(n_paths, seed))?;
        let vals: Vec<f64> = (0..n_paths)
            .map(|k| batch.running_max(k, batch.end_index).powf(p))
            .collect();
        sup_moments.push(Estimate::of(&vals));
        if finest.as_ref().is_none_or(|(d, _)| dt < *d) {
            finest = Some((dt, batch));
        }
    }
    let (_, batch) = finest.expect("non-empty ladder");
    let start = batch.start_index;
    let mut modulus = Vec::with_capacity(lags.len());
    for &lag in lags {
        let k = batch.grid.index_of(t0 + lag)?;
        if k <= start {
            return Err(Error::Domain(format!("lag {lag} must be positive")));
        }
        let free = model.op.semigroup_apply(lag, x0)?;
        let vals: Vec<f64> = (0..n_paths)
            .map(|q| {
                let x = batch.state(q, k);
                let d2: f64 = x.iter().zip(&free.0).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt().powf(p)
            })
            .collect();
        modulus.push(Estimate::of(&vals));
    }
    let means: Vec<f64> = sup_moments.iter().map(|e| e.mean).collect();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(0.0, f64::max);
    let bounded = means.iter().all(|m| m.is_finite()) && (lo == hi || hi <= 1.5 * lo);
    let slope = loglog_slope(lags, &modulus.iter().map(|e| e.mean).collect::<Vec<_>>());
    Ok(MomentReport {
        p,
        dts: dts.to_vec(),
        sup_moments,
        bounded,
        lags: lags.to_vec(),
        modulus,
        slope,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YosidaReport {
    pub p: f64,
    pub mus: Vec<f64>,
    /// `(E sup_s |X(s) - X^mu(s)|^p)^{1/p}`.
    pub errors: Vec<f64>,
    pub non_increasing: bool,
}

/// Runs `A` and each Yosida approximant `A_mu` on shared increments.
pub fn yosida_compare(
    model: &ControlModel,
    initial: &DiscretePath,
    policy: &Policy,
    mus: &[f64],
    p: f64,
    opts: &SimOptions,
) -> Result<YosidaReport> {
    if !model.op.is_contraction() {
        return Err(Error::NonContraction("the Yosida comparison"));
    }
    let base = simulate(model, initial, policy, opts)?;
    let mut errors = Vec::with_capacity(mus.len());
    for &mu in mus {
        let approx = model.with_operator(model.op.yosida(mu)?)?;
        let b = simulate(&approx, initial, policy, opts)?;
        let sups: Vec<f64> = (0..base.n_paths)
            .into_par_iter()
            .map(|q| {
                let mut worst: f64 = 0.0;
                for i in base.start_index..=base.end_index {
                    let d2: f64 = base
                        .state(q, i)
                        .iter()
                        .zip(b.state(q, i))
                        .map(|(a, c)| (a - c) * (a - c))
                        .sum();
                    worst = worst.max(d2.sqrt());
                }
                worst.powf(p)
            })
            .collect();
        errors.push(crate::stats::mean(&sups).powf(1.0 / p));
    }
    let non_increasing = errors.windows(2).all(|w| w[1] <= w[0]);
    Ok(YosidaReport {
        p,
        mus: mus.to_vec(),
        errors,
        non_increasing,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoLevel {
    pub dt: f64,
    /// `E |R|`.
    pub abs_residual: Estimate,
    /// `E R`.
    pub residual: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    pub levels: Vec<ItoLevel>,
    /// Log-log slope of `E |R|` against `dt`.
    pub order: f64,
}

/// Pathwise residual of the functional Ito formula
///
/// ```text
/// R = f(X_s) - f(X_t) - sum_i [d_t f + (A* d_x f, X_i) + (d_x f, F_i)
///       + 1/2 Tr(d_xx f G_i G_i^T)] dt - sum_i (d_x f, G_i dW_i)
/// ```
///
/// for the constant initial path `x0` on `[0, t0]`, at every step size.
#[allow(clippy::too_many_arguments)]
pub fn ito_verify<F: SmoothFunctional>(
    f: &F,
    model: &ControlModel,
    x0: &HVector,
    t0: f64,
    policy: &Policy,
    dts: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ItoReport> {
    if dts.is_empty() {
        return Err(Error::Empty("step ladder"));
    }
    let mut levels = Vec::with_capacity(dts.len());
    for &dt in dts {
        let grid = grid_for(model, dt)?;
        let init = initial_on(x0, t0, grid)?;
        let batch = simulate(model, &init, policy, &SimOptions::new(n_paths, seed))?;
        let res = ito_residuals(f, model, &batch)?;
        let abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
        levels.push(ItoLevel {
            dt,
            abs_residual: Estimate::of(&abs),
            residual: Estimate::of(&res),
        });
    }
    let order = if levels.len() > 1 {
        loglog_slope(
            &levels.iter().map(|l| l.dt).collect::<Vec<_>>(),
            &levels.iter().map(|l| l.abs_residual.mean).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    Ok(ItoReport { levels, order })
}

/// Per-path Ito residuals on an existing batch.
pub fn ito_residuals<F: SmoothFunctional>(f: &F, model: &ControlModel, batch: &TrajectoryBatch) -> Result<Vec<f64>> {
    check_dim(model.dim(), batch.dim)?;
    let dt = batch.grid.dt;
    let n = batch.dim;
    let d = batch.noise_dim;
    let start = batch.start_index;
    let history = &batch.initial().values()[..start];
    let mem0 = f.memory(history);
    let lambda = model.op.eigenvalues().to_vec();
    Ok((0..batch.n_paths)
        .into_par_iter()
        .map(|q| {
            let mut mem = mem0.clone();
            let mut feat = batch.features(q, start);
            let mut drift = vec![0.0; n];
            let mut g = Matrix::zeros(n, d);
            let mut x = HVector::from_slice(batch.state(q, start));
            let f_start = f.jet(&mem, batch.grid.time(start), &x).value;
            let mut acc = 0.0;
            for i in start..batch.end_index {
                batch.features_into(q, i, &mut feat);
                x.0.copy_from_slice(batch.state(q, i));
                let jet = f.jet(&mem, batch.grid.time(i), &x);
                let u = batch.control(q, i);
                model.drift_into(&feat, u, &mut drift);
                model.diffusion_into(&feat, u, &mut g);
                let mut a_term = 0.0;
                for k in 0..n {
                    a_term += lambda[k] * jet.dx[k] * x[k];
                }
                let gg = &g * g.transpose();
                let tr: f64 = jet.dxx.component_mul(&gg).sum();
                let mut noise = 0.0;
                let dw = batch.increment(q, i);
                for k in 0..n {
                    let mut gdw = 0.0;
                    for l in 0..d {
                        gdw += g[(k, l)] * dw[l];
                    }
                    noise += jet.dx[k] * gdw;
                }
                acc += (jet.dt + a_term + dot(&jet.dx.0, &drift) + 0.5 * tr) * dt + noise;
                f.absorb(&mut mem, &x);
            }
            x.0.copy_from_slice(batch.state(q, batch.end_index));
            let f_end = f.jet(&mem, batch.grid.time(batch.end_index), &x).value;
            f_end - f_start - acc
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoInequalityReport {
    pub m: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// `D = RHS - LHS`.
    pub defect: Estimate,
    pub min_defect: f64,
    pub tolerance: f64,
    /// Fraction of paths with `D < -tolerance`.
    pub fraction_below: f64,
}

/// Defect of the Ito inequality for `Upsilon^M(X_s - eta_{t,s,A})`.
///
/// `gamma` and `eta` end at the same node. The difference process obeys
/// `y_{i+1} = e^{dt A}(y_i + F dt + G dW)`; the defect drops the (nonpositive
/// for `M >= 3`) generator term `(d_x Upsilon, A y)`.
#[allow(clippy::too_many_arguments)]
pub fn ito_inequality_verify(
    model: &ControlModel,
    gamma: &DiscretePath,
    eta: &DiscretePath,
    m: f64,
    policy: &Policy,
    opts: &SimOptions,
    tolerance: f64,
) -> Result<ItoInequalityReport> {
    if !model.op.is_contraction() {
        return Err(Error::NonContraction("the Ito inequality"));
    }
    if !(m >= 3.0) {
        return Err(Error::Domain(format!("the Ito inequality needs M >= 3, got {m}")));
    }
    if gamma.end_index() != eta.end_index() || !gamma.grid().same_as(eta.grid()) {
        return Err(Error::Grid("gamma and eta must end at the same grid node".into()));
    }
    let batch = simulate(model, gamma, policy, opts)?;
    let start = batch.start_index;
    let dt = batch.grid.dt;
    let n = batch.dim;
    let d = batch.noise_dim;
    let diff = gamma.checked_sub(eta)?;
    let pre0 = diff.pre_sup();
    let eta_end = eta.endpoint().clone();
    let ext: Vec<HVector> = (start..=batch.end_index)
        .map(|i| model.op.semigroup_apply(batch.grid.time(i - start), &eta_end))
        .collect::<Result<_>>()?;
    let defects: Vec<f64> = (0..batch.n_paths)
        .into_par_iter()
        .map(|q| {
            let mut feat: PathFeatures = batch.features(q, start);
            let mut drift = vec![0.0; n];
            let mut g = Matrix::zeros(n, d);
            let mut y = vec![0.0; n];
            let mut pre = pre0;
            let set_y = |i: usize, y: &mut [f64]| {
                let x = batch.state(q, i);
                for k in 0..n {
                    y[k] = x[k] - ext[i - start][k];
                }
            };
            set_y(start, &mut y);
            let v0 = upsilon_jet(pre, &y, m).value;
            let mut acc = 0.0;
            for i in start..batch.end_index {
                set_y(i, &mut y);
                batch.features_into(q, i, &mut feat);
                let u = batch.control(q, i);
                model.drift_into(&feat, u, &mut drift);
                model.diffusion_into(&feat, u, &mut g);
                let jet = upsilon_jet(pre, &y, m);
                let dw = batch.increment(q, i);
                let mut gdw = vec![0.0; n];
                for k in 0..n {
                    for l in 0..d {
                        gdw[k] += g[(k, l)] * dw[l];
                    }
                }
                acc += (jet.dx_dot(&y, &drift) + 0.5 * jet.trace_with(&y, &g)) * dt + jet.dx_dot(&y, &gdw);
                pre = pre.max(dot(&y, &y).sqrt());
            }
            set_y(batch.end_index, &mut y);
            let v_end = upsilon_jet(pre, &y, m).value;
            v0 + acc - v_end
        })
        .collect();
    let below = defects.iter().filter(|&&v| v < -tolerance).count();
    Ok(ItoInequalityReport {
        m,
        dt,
        n_paths: batch.n_paths,
        defect: Estimate::of(&defects),
        min_defect: defects.iter().cloned().fold(f64::INFINITY, f64::min),
        tolerance,
        fraction_below: below as f64 / batch.n_paths as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub ns: Vec<usize>,
    /// `sup_u |Q_N G(gamma, u)|_{HS}^2`.
    pub tails: Vec<f64>,
    pub non_increasing: bool,
}

/// Hilbert-Schmidt mass of `G` outside the first `N` modes, maximised over `U`.
pub fn tail_projection_check(model: &ControlModel, gamma: &DiscretePath, ns: &[usize]) -> Result<TailReport> {
    check_dim(model.dim(), gamma.dim())?;
    let feat = gamma.features();
    let gs: Vec<Matrix> = model.controls.iter().map(|&u| model.diffusion(&feat, u)).collect();
    let tails: Vec<f64> = ns
        .iter()
        .map(|&cut| {
            gs.iter()
                .map(|g| {
                    let mut s = 0.0;
                    for k in cut.min(g.nrows())..g.nrows() {
                        for l in 0..g.ncols() {
                            s += g[(k, l)] * g[(k, l)];
                        }
                    }
                    s
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let non_increasing = tails.windows(2).all(|w| w[1] <= w[0]);
    Ok(TailReport {
        ns: ns.to_vec(),
        tails,
        non_increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{EndpointNormSq, LinearEndpoint};
    use crate::hilbert::SpectralOperator;

    fn bm(lambda: f64) -> ControlModel {
        ControlModel::new("bm", SpectralOperator::new(vec![lambda]).unwrap(), 1.0, 1, vec![0.0])
            .unwrap()
            .with_diffusion(|_, _, g| g[(0, 0)] = 1.0)
    }

    #[test]
    fn linear_functional_has_zero_residual_without_generator() {
        let m = bm(0.0);
        let f = LinearEndpoint(HVector(vec![1.5]));
        let r = ito_verify(
            &f,
            &m,
            &HVector(vec![0.2]),
            0.0,
            &Policy::Constant { u: 0.0 },
            &[0.01],
            200,
            3,
        )
        .unwrap();
        assert!(r.levels[0].abs_residual.mean < 1e-13);
    }

    #[test]
    fn brownian_square_identity() {
        let m = bm(0.0);
        let r = ito_verify(
            &EndpointNormSq,
            &m,
            &HVector(vec![0.0]),
            0.0,
            &Policy::Constant { u: 0.0 },
            &[0.01],
            4000,
            3,
        )
        .unwrap();
        let e = r.levels[0].residual;
        assert!(e.mean.abs() < 3.0 * e.se + 1e-12, "{e:?}");
    }

    #[test]
    fn inequality_trivial_cases() {
        let grid = PathGrid::new(0.01, 100).unwrap();
        let m = ControlModel::new("z", SpectralOperator::new(vec![-5.0]).unwrap(), 1.0, 1, vec![0.0]).unwrap();
        let g = DiscretePath::scalar(grid, &[0.3, 0.7]).unwrap();
        let r = ito_inequality_verify(
            &m,
            &g,
            &g,
            3.0,
            &Policy::Constant { u: 0.0 },
            &SimOptions::new(10, 1),
            1e-12,
        )
        .unwrap();
        assert!(r.defect.mean.abs() < 1e-15);
        assert!(ito_inequality_verify(
            &m,
            &g,
            &g,
            2.0,
            &Policy::Constant { u: 0.0 },
            &SimOptions::new(10, 1),
            0.0
        )
        .is_err());
        let nc = ControlModel::new(
            "nc",
            SpectralOperator::non_contraction(vec![1.0]).unwrap(),
            1.0,
            1,
            vec![0.0],
        )
        .unwrap();
        assert!(matches!(
            ito_inequality_verify(
                &nc,
                &g,
                &g,
                3.0,
                &Policy::Constant { u: 0.0 },
                &SimOptions::new(10, 1),
                0.0
            ),
            Err(Error::NonContraction(_))
        ));
    }

    #[test]
    fn tail_of_harmonic_loadings() {
        let nmax = 400;
        let op = SpectralOperator::dirichlet_laplacian(nmax).unwrap();
        let m = ControlModel::new("h", op, 1.0, nmax, vec![0.0])
            .unwrap()
            .with_diffusion(|_, _, g| {
                for k in 0..g.nrows() {
                    g[(k, k)] = 1.0 / (k + 1) as f64;
                }
            });
        let grid = PathGrid::new(0.5, 2).unwrap();
        let gamma = DiscretePath::constant(grid, HVector::zeros(nmax), 0).unwrap();
        let r = tail_projection_check(&m, &gamma, &[1, 2, 10, 100]).unwrap();
        assert!(r.non_increasing);
        let exact = std::f64::consts::PI.powi(2) / 6.0 - 1.25;
        assert!((r.tails[1] - exact).abs() <= 1.0 / nmax as f64);
    }
}
