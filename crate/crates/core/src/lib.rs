//! Hybrid near-field/far-field localization with multiple reconfigurable
//! intelligent surfaces.
//!
//! The crate simulates the user → RIS → BS links, localizes each user
//! relative to every selected RIS with OMP over a mixed spherical/planar
//! dictionary, fuses the per-RIS estimates into a global position and
//! optimizes the next cycle's phase shifts with ADMM under sidelobe
//! constraints. [`harness`] ties these into the multi-cycle protocol and the
//! Monte Carlo experiments.

pub mod channel;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod locator;
pub mod ris_opt;
pub mod scene;

pub use error::{Error, Result};
