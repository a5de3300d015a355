//! Data-driven safety certificates for networks of black-box discrete-time
//! subsystems.

pub mod blackbox;
pub mod compose;
pub mod config;
pub mod error;
pub mod lipschitz;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod scp;
pub mod verify;

pub use error::{Error, Result};
