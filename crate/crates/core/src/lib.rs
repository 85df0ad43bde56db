//! Exact simulation and verification of device-independent gate
//! certification in star-shaped quantum networks.

pub mod adversary;
pub mod bell;
pub mod certify;
pub mod cli;
pub mod config;
pub mod error;
pub mod extraction;
pub mod network;
pub mod pauli;
pub mod primitives;
pub mod tensor;

pub use error::{Error, Result};
