//! Robust joint design of ground-node power, IRS phase shifts and UAV trajectory for an
//! uplink under jamming from a transmitter whose position is only known up to a hemisphere.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::field_reassign_with_default))]

extern crate openblas_src as _;

pub mod ao;
pub mod beamforming;
pub mod channels;
pub mod convex_backend;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod oracles;
pub mod power_alloc;
pub mod scalar;
pub mod scenario;
pub mod seeds;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use scalar::Real;
pub use scenario::{
    initial_trajectory, validate_config, BetaPolicy, ConfigFile, PhaseSchedule, PowerSchedule,
    SystemConfig, Trajectory,
};

/// Position in meters at double precision.
pub type Position = scenario::Position3<f64>;
/// Jammer uncertainty region at double precision.
pub type Region = scenario::UncertaintyRegion<f64>;

/// Sizes the global worker pool; must be called before any parallel work.
pub fn set_worker_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}
