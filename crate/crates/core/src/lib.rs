//! EEG embedding and probing toolkit.
//!
//! The crate learns unit-norm EEG embeddings with a graph-attention and
//! temporal-convolution encoder trained by triplet loss, measures what those
//! embeddings encode with k-means accuracy and linear probes across channel
//! regions and time windows, and builds the frame-conditioning vectors and
//! video-quality metrics used around a frame generator.

pub mod ad;
pub mod conditioning;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod metric_learning;
pub mod montage;
pub mod preprocess;
pub mod signal_io;
pub mod video_metrics;

pub use error::{Error, ErrorKind, Result};
