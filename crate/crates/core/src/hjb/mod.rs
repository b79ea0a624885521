//! Hamiltonian, classical residuals, lattice-certified viscosity probes and
//! the Borwein-Preiss optimizer.

mod bp;
mod hamiltonian;
mod viscosity;

pub use bp::{borwein_preiss, BpCertificate, BpResult, GAUGE_M};
pub use hamiltonian::{
    classical_residual, hamiltonian, hamiltonian_at, monotonicity_normalization_check, monotonicity_samples,
    terminal_mismatch, HamiltonianInput, HamiltonianValue, MonotonicityReport, MonotonicitySample, SmoothCandidate,
};
pub use viscosity::{
    viscosity_probe, ExtremumCertificate, FreeNode, PathLattice, ProbeMode, ProbeReport, MAX_FREE_NODES,
    MAX_LATTICE_POINTS, MAX_NODE_VALUES, VERDICT_SLACK,
};
