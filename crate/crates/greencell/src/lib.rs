//! Desk-scale simulation of mobile-network energy use, grid carbon
//! attribution, sleep-mode control, and solar offset economics.
//!
//! The crate models a synthetic city: base stations carry diurnal cellular
//! traffic, per-cell power follows an affine RRU/transmit model plus constant
//! BBU power and a COP cooling model, and the resulting electrical load is fed
//! into a day-ahead unit-commitment model of the local coal fleet. Carbon is
//! attributed to the mobile network by differencing dispatch solutions with
//! and without the base-station load. Three sleep-mode controllers (threshold,
//! greedy, and a collaborative multi-agent Q-learner) reshape the energy
//! curve; regional Monte Carlo extrapolation and PV/cost analysis build on
//! the same primitives.

pub mod control;
pub mod dispatch;
pub mod energy;
pub mod error;
pub mod ioutil;
pub mod metrics;
pub mod regional;
pub mod rl;
pub mod scenario;
pub mod solar;

pub use error::{Error, Result};
