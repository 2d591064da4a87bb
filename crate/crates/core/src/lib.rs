//! Green-function simulation of single-pass stimulated Raman scattering.
//!
//! The crate builds the discretized input-output kernels of the Stokes
//! (write) and anti-Stokes (read) interactions, reduces them to independent
//! two-mode squeezers and beamsplitters, and derives photon statistics and
//! readout efficiencies from the resulting mode pairs.
//!
//! Units: lengths in mm, times in ps, couplings in (mm ps)^-1/2, mode
//! functions in (ps)^-1/2 over time and (mm)^-1/2 over position.

pub mod decomposition;
pub mod error;
pub mod grid;
mod linalg;
pub mod propagator;
pub mod readout;
pub mod statistics;

pub use decomposition::{
    beamsplitter_reduce, bloch_messiah, coherence_modes, verify_structure, BeamsplitterModes,
    CoherenceModes, ModePair, ReadoutModePair, ResidualReport, SqueezerModes,
};
pub use error::{Error, Result};
pub use grid::{
    dimensionless, make_grid, pump_envelope, DimensionlessParams, PumpConfig, PumpShape,
    SimulationGrid,
};
pub use linalg::op_norm;
pub use propagator::{build_green, evolve_antistokes, evolve_stokes, GreenKind, GreenSet, Pass};
pub use readout::{
    basis_overlap, calibrate_g0, crosstalk_check, full_chain, readout_modes, OverlapMatrix,
    PassConfig, ReadoutResult,
};
pub use statistics::{equivalent_modes, photon_pmf, total_photons, PhotonStats, Pmf, PmfMethod};

/// Library version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
