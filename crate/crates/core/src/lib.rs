//! Spin-dynamics simulation and estimation-theoretic sequence design for
//! MR fingerprinting.
//!
//! The crate models an IR-FISP acquisition as a discrete-time state-space
//! system (one 3-vector state per isochromat), propagates exact parameter
//! sensitivities alongside the state, and turns them into Fisher information
//! and Cramér-Rao bounds for `(T1, T2, M0)`. On top of that it provides:
//!
//! * [`design`]: a weighted A-optimality cost over representative tissues and
//!   a constrained local optimizer for flip-angle / TR trains,
//! * [`dictionary`]: dictionary generation and maximum-likelihood pattern
//!   matching,
//! * [`mc`]: Gaussian noise injection and Monte Carlo bias/variance metrics.
//!
//! All times are in milliseconds and all angles in radians.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Transcendental functions always go through `libm`, so results
//! are bit-identical with and without `std`. The `parallel` feature spreads
//! isochromat sums, dictionary atoms and Monte Carlo trials over a rayon
//! pool; reductions keep a fixed tree shape so results do not depend on the
//! thread count.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bloch;
pub mod crb;
pub mod design;
pub mod dictionary;
mod error;
mod math;
pub mod mc;

pub use bloch::{
    conventional_schedule, simulate, AcqParams, AcqSchedule, IsochromatEnsemble, MagState,
    SignalTrajectory, TissueParams,
};
pub use crb::{crb, fisher, sensitivity_trajectory, CrbReport, FisherMatrix, SensitivityTrajectory};
pub use design::{optimize, DesignConfig, DesignMode, DesignResult};
pub use dictionary::{match_signal, Dictionary, Estimate, GridSpec};
pub use error::{Error, Result};
pub use mc::{run_mc, McResult, NoiseModel};

/// Number of estimated tissue parameters `(T1, T2, M0)`.
pub const NUM_PARAMS: usize = 3;
