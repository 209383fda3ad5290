//! Spillover analysis for cluster-randomized vaccine trials: residence
//! cleaning, time-to-event derivation, contact-based exposure, multiple
//! imputation of survey gaps, additive hazards and an SIR simulator.

// NaN must fail validity checks, hence `!(x > 0.0)` style comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod contacts;
pub mod dates;
pub mod error;
pub mod exposure;
pub mod hazards;
pub mod imputation;
pub mod pipeline;
pub mod plot;
pub mod residence;
pub mod sim;
pub mod tte;

pub use cluster::{Arm, ArmAssignment, ClusterId};
pub use error::{Error, Result};
