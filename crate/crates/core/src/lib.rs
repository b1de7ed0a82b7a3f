//! Simulation and analysis of subradiance in N-atom degenerate three-level
//! cascades coupled to a damped cavity mode.
//!
//! - [`fock`]: truncated Fock bases, ladder operators, partial trace/transpose.
//! - [`dynamics`]: Hamiltonian, master equations, RK4 integration, steady states.
//! - [`subradiance`]: closed-form dark states, the `p <-> eps` relation, qubit pairs.
//! - [`entanglement`]: PPT negativity, covariance matrices, nonGaussianity.

pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod subradiance;

pub use dynamics::{
    CascadeParams, Liouvillian, Observables, StationaryLimit, SteadyState, Trajectory,
};
pub use entanglement::{CovarianceMatrix, NegativityReport, ThermalReference};
pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockBasis, Mode, Occupation, OperatorMatrix};
pub use subradiance::{DarkPair, QubitPair, SubradiantState};

/// Version of this crate, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
