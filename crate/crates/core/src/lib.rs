//! Partial-fingerprint identification toolkit with MasterPrint auditing.
//!
//! The pipeline turns a grayscale fingerprint image into a compact template
//! and scores templates against each other:
//!
//! 1. [`preprocess`] — normalization, ROI segmentation, local-mean
//!    binarization and thinning down to a one-pixel ridge skeleton.
//! 2. [`minutiae`] — crossing-number detection of ridge endings and
//!    bifurcations, direction estimation by tracing, false-minutiae removal.
//! 3. [`features`] — rotation- and translation-invariant per-minutia
//!    tuples built from local ridge counts and neighbor distances.
//! 4. [`matcher`] — tuple-multiset correspondence and a normalized
//!    similarity score in [0, 1].
//! 5. [`gallery`] — crop grids for partial fingerprints, template naming,
//!    enrollment and (de)serialization of template sets.
//! 6. [`eval`] — identification over a gallery, threshold sweeps, error
//!    rates, rank curves, and MasterPrint exposure auditing.
//! 7. [`synth`] — deterministic synthetic fingerprints with known ground
//!    truth, for tests and end-to-end experiments without source data.
//!
//! The `fpmatch` binary exposes each step as a subcommand.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod gallery;
pub mod matcher;
pub mod minutiae;
pub mod preprocess;
pub mod raster;
pub mod synth;

pub use config::Config;
pub use error::{Error, Result};
