pub mod bessel;
pub mod decoherence;
pub mod error;
pub mod experiment;
pub mod gate_stats;
pub mod kernel;
pub mod medium;
pub mod oracle;
pub mod quadrature;
pub mod storage;

pub use error::{Error, Result};
pub use medium::{MediumConfig, MediumParams, SpatialGrid};
