//! Noise-induced state flips in bistable retention cells.
//!
//! The crate builds a surrogate cross-coupled inverter pair, reduces its
//! escape dynamics to a one-dimensional drift-diffusion equation along the
//! line joining the threatened stable point to the saddle, and compares
//! Monte-Carlo mean time to failure (MTTF) against near-equilibrium closed
//! forms (Kish, Nobile) and an exact first-passage quadrature (Siegert).
//!
//! Pipeline, per offset `dv1 = -dv2`:
//!
//! ```text
//! CellParams -> find_equilibria -> make_axis -> relax_trajectory
//!            -> extract_drift -> extend_negative -> quasi_potential
//!            -> {kish, nobile, siegert, MC-1D, MC-2D}
//! ```

pub mod circuit;
pub mod config;
pub mod drift;
mod error;
pub mod estimators;
pub mod interp;
pub mod projection;
pub mod quad;
pub mod sde;
pub mod sweep;

pub use circuit::{
    drift_field, find_equilibria, inverter_vtc, node_noise_sigma, CellParams, Equilibria,
    StatePoint,
};
pub use config::RunConfig;
pub use drift::{
    extend_negative, extract_drift, quasi_potential, relax_trajectory, DriftTable,
    PotentialTable, Trajectory,
};
pub use error::{Error, Result};
pub use estimators::{kish_mttf, nobile_mttf, siegert_mttf, EstimatorResult, Method};
pub use projection::{embed, make_axis, project, ProjectionAxis};
pub use sde::{
    mttf_stats, run_ensemble, simulate_path_1d, simulate_path_2d, MttfEstimate, SdeModel1D,
    TtfEnsemble,
};
pub use sweep::{compare_report, run_sweep, SweepReport};
