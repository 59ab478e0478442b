//! Modular end-to-end driving stack on a lane-world simulator.

pub mod approx;
pub mod bench;
pub mod cli;
pub mod control;
pub mod disttrain;
pub mod drive;
pub mod error;
pub mod geometry;
pub mod reward;
pub mod sac;
pub mod simworld;

pub use error::{Error, Result};
