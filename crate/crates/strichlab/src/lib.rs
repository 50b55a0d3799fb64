pub mod cli;
pub mod error;
mod fft;
pub mod field;
pub mod hamflow;
pub mod lattice;
pub mod norms;
pub mod potentials;
pub mod propagate;
pub mod quadrature;
pub mod stft;
pub mod strichartz;

pub use error::{Error, Result};
