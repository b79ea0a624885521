//! Shared fixtures for the criterion benches.

use phjb_core::model::{control_grid, lq_1d};
use phjb_core::{ControlModel, DiscretePath, HVector, PathGrid};

pub fn lq() -> ControlModel {
    lq_1d(1.0, control_grid(4.0, 0.25).expect("valid grid")).expect("valid preset")
}

/// A start path at `x` on the unit horizon with step `dt`.
pub fn start(dt: f64, x: &[f64]) -> DiscretePath {
    let grid = PathGrid::with_horizon(1.0, dt).expect("dt divides 1");
    DiscretePath::constant(grid, HVector(x.to_vec()), 0).expect("fits")
}

/// A deterministic wiggly path of `n` steps in dimension `dim`.
pub fn wiggle(n: usize, dim: usize) -> DiscretePath {
    let grid = PathGrid::new(1.0 / n as f64, n).expect("positive");
    let values = (0..=n)
        .map(|i| HVector((0..dim).map(|k| ((i * (k + 1)) as f64 * 0.37).sin()).collect()))
        .collect();
    DiscretePath::new(grid, values).expect("fits")
}
