//! Distributed target tracking from linear TDOA measurements.
//!
//! A nearly-constant-velocity target is observed by a network of static
//! sensors. Each sensor forms half squared-range differences against its
//! neighbours, which are exactly linear in the target state once a known
//! bias is removed. Sensors fuse their neighbours' estimates with a single
//! consensus step per sample and correct with a fixed block-diagonal gain.
//!
//! The crate also covers the baselines (linearized TDOA, centralized
//! Kalman filter), distributed observability checks, survivable network
//! construction, residual-based fault detection with sensor isolation, and
//! a Monte-Carlo harness that writes CSV outputs.

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod fdi;
pub mod gain;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod network;
pub mod observability;
pub mod seeding;

pub use error::{Error, Result};
