//! Topological features of 3D grayscale volumes.
//!
//! The pipeline runs volume ingestion ([`volume`]), the cubical sublevel
//! filtration ([`cubical`]), persistence diagrams ([`homology`]) and Betti
//! curves ([`betti`]), then trains and scores tree ensembles on the
//! resulting vectors ([`learn`], [`eval`]).

pub mod betti;
pub mod cubical;
pub mod error;
pub mod eval;
pub mod homology;
pub mod learn;
pub mod pipeline;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
