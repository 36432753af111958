//! Shuttling solutions and voltage waveforms for segmented radio-frequency
//! ion traps.

pub mod confinement;
pub mod consts;
pub mod demos;
pub mod dynamics;
pub mod error;
pub mod multipole;
pub mod path;
pub mod pipeline;
pub mod potentials;
pub mod solver;
pub mod spline;
pub mod validity;
pub mod waveform;

pub use error::{Error, Result};
