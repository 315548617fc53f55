//! People counting with IR-UWB radar from hybrid curvelet and distance-bin
//! features.
//!
//! The crate covers the whole chain: synthetic scene and record generation
//! ([`sim`]), preprocessing ([`preprocess`]), the wrapping curvelet transform
//! and its hard-threshold denoiser ([`curvelet`]), feature extraction
//! ([`features`]) and the four classifiers with their evaluation protocol
//! ([`learn`]).

pub mod curvelet;
pub mod error;
pub mod features;
pub mod learn;
pub mod preprocess;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
