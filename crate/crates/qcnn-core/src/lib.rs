//! State-vector QCNN simulator with a training engine and post-training
//! overfitting mitigation (hard gate dropout and soft parameter perturbation).
//!
//! Conventions, fixed across the crate:
//! - little-endian qubit order: qubit 0 is the least significant bit
//! - rotations are R_P(theta) = exp(-i * theta * P / 2)
//! - the model readout is P(measuring 1) on the last surviving qubit

pub mod config;
pub mod data;
pub mod error;
pub mod mitigate;
pub mod model;
pub mod qsim;
pub mod report;
pub mod runner;
pub mod train;

pub use error::{Error, Result};
pub use model::{ParamVector, QcnnModel};
pub use qsim::QuantumState;
