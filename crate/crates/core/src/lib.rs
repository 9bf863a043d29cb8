//! Action tube detection: motion-saliency filtering of region proposals,
//! per-action linear SVM scoring, Viterbi linking of regions into tubes, and
//! frame/video-level detection metrics.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod geometry;
pub mod linker;
pub mod metrics;
pub mod pipeline;
pub mod saliency;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::Bbox;
