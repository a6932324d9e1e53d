//! Parallel MRI reconstruction by linear predictability.
//!
//! Implements the classic calibration-based reconstruction family
//! (AUTO-SMASH, GRAPPA, SPIRiT), a Biot-Savart birdcage coil simulator
//! with a Shepp-Logan phantom and forward signal model, Cartesian
//! undersampling with kernel enumeration, and a directional accuracy
//! metric computed from the auto-calibration region.

pub mod calib;
pub mod error;
pub mod io;
pub mod metric;
pub mod recon;
pub mod sampling;
pub mod sim;
pub mod tensor;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
