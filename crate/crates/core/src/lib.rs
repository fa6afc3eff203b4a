//! Pilot scheduling, pilot power control and data power control for D2D links
//! underlaying a massive MIMO uplink with partial zero-forcing receivers.
//!
//! The pipeline for one drop:
//! [`scenario`] places users and draws large-scale fading, [`channel`] draws
//! fast fading and forms MMSE estimates from reused pilots, [`receivers`]
//! builds the PZF filters and rate lower bounds, [`pilot_scheduling`] assigns
//! pilots, and [`power_control`] sets data powers. [`harness`] runs seeded
//! Monte Carlo experiments over all of it.

pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod pilot_scheduling;
pub mod power_control;
pub mod receivers;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
