//! Deterministic reliability simulator for mesh manycore chips.
//!
//! The crate models a mesh of homogeneous tiles with process-variation
//! frequencies, runs workloads under pluggable task-mapping policies atop a
//! lumped-RC thermal model, and scores the outcome with rainflow-counted
//! thermal-cycling MTTF plus relative NBTI/HCI/EM aging indices.
//!
//! All randomness flows through seeded ChaCha8 streams, so every run is
//! reproducible bit for bit from its configuration and seeds.

pub mod binning;
pub mod config;
pub mod error;
pub mod mapping;
pub mod platform;
pub mod reliability;
pub mod report;
pub mod sim;
pub mod thermal;
pub mod workload;

pub use error::{Result, TcError};
