//! Dataset containers, their on-disk formats, and synthetic data.

mod pack;
mod synth;
mod types;

pub use pack::{read_pack, read_segments, write_pack, write_segments};
pub use synth::{synth_recordings, synth_segments, SignalChannels, SynthSpec, SYNTH_RATE_HZ};
pub use types::{LabelKind, Recording, SegmentSet, Split, Trial, SEGMENT_SAMPLES};
