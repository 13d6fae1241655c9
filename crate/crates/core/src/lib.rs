//! Modal simulation and holographic analysis of notched traveling-wave ultrasonic
//! stators.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod holography;
pub mod io;
pub mod modal;
pub mod pipeline;
pub mod reference;

pub use error::{Error, Result};
