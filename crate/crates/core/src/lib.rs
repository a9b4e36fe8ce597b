//! Unsupervised input reconstruction for echo state networks.
//!
//! The readout that maps reservoir states back onto the network's own input
//! can be computed from the states and the fixed weights alone, without the
//! input series. On top of that this crate provides the online (RLS) version,
//! autonomous replicas of the input-generating system, and ensemble Kalman
//! filtering of noisy reservoir states using those replicas as the process
//! model. [`harness`] holds the experiment drivers used by the `resin` CLI.

// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filtering;
pub mod harness;
pub mod linalg;
pub mod online;
pub mod readout;
pub mod replication;
pub mod reservoir;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
pub use filtering::{build_prior, enkf_step, run_filter, sample_noise, FilterPrior, FilterState, NoiseModel};
pub use online::{readout_at, rls_init, rls_step, run_online, RlsConfig, RlsInit, RlsState};
pub use readout::{
    regularity_report, right_inverse_family, rrmse, solve_supervised, solve_unsupervised_fullrank,
    solve_unsupervised_general, ul_loss, PreparedStates, Provenance, Readout, RegularityReport,
};
pub use replication::{
    build_replica, lorenz_orbit, project, rollout, table1_diagnostics, LorenzConfig, ReplicatedMap, Table1Diagnostics,
};
pub use reservoir::{
    activation_apply, activation_invert, drive, step, synthesize_params, ActivationKind, EsnParams, ReluInverseRule,
};
pub use trajectory::Trajectory;

pub use nalgebra::{DMatrix, DVector};
