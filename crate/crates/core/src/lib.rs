//! Learned screening of inactive AC-OPF inequality constraints.
//!
//! The crate is split along the data flow of the screening workflow:
//!
//! * [`case`] holds the immutable grid description.
//! * [`network`] evaluates power injections, branch flows and their
//!   derivatives in polar coordinates.
//! * [`opf`] is a primal-dual interior-point AC OPF solver that can run on a
//!   truncated constraint set, plus activity labelling.
//! * [`scenario`] perturbs demand and assembles training datasets.
//! * [`learner`] contains small fully connected networks trained with Adam.
//! * [`metrics`] provides confusion statistics, optimality gaps and timing
//!   summaries.
//! * [`pipeline`] ties the pieces together: train, predict, truncate, solve.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. Wall-clock timing is then supplied through [`clock::Clock`].

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod case;
pub mod clock;
mod error;
pub mod learner;
pub mod metrics;
pub mod network;
pub mod opf;
pub mod pipeline;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
