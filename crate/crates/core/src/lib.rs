//! Simulator for multi-AP, multi-UE beam alignment in a cell-free mmWave
//! network: scenario and channel generation, beacon-phase observables, SCO and
//! MCO direction estimators, user-centric association and DL/UL SINR.

pub mod channel;
pub mod config;
pub mod datalink;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod observables;
pub mod resources;
pub mod rng;
pub mod scenario;

pub use config::SimConfig;
pub use error::{Error, Result};
