//! Backward SDEs on simulated batches: regression sweep, lattice oracle,
//! backward semigroup and the comparison / a-priori suites.

mod checks;
mod lattice;
mod lsmc;
mod regression;

pub use checks::{
    apriori_estimate_check, backward_semigroup, calibrate_dt_constant, comparison_check, AprioriReport,
    ComparisonReport, LadderPoint, DEFAULT_DT_CONSTANT,
};
pub use lattice::{solve_lattice_1d, LatticeSolution};
pub use lsmc::{solve_lsmc, solve_lsmc_terminal, BSDEGridSolution, SweepOptions};
pub use regression::{Feature, RegressionSpec, Regressor, StepFit};
