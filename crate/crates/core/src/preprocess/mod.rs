//! Preprocessing chain and segmentation/splitting protocol.
//!
//! Order per recording: bad-channel interpolation, average reference, notch,
//! high-pass, resampling, EOG regression. Recordings are then cut into 2 s
//! segments inside each labeled trial.

mod filters;
mod ops;
mod resample;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use filters::{butterworth_highpass4, filtfilt, settling_len, Biquad};
pub use ops::{
    eog_regress, highpass_filter, interpolate_bad_channels, notch_filter, reref_average, resample,
    segment,
};
pub use resample::{resample_channel, resampled_len, Resampler};
pub use split::{largest_remainder, split_leave_two, split_within, DEFAULT_RATIOS};

use crate::error::{Error, Result};
use crate::montage::Montage;
use crate::signal_io::{Recording, SegmentSet, Split, SEGMENT_SAMPLES};

pub const SEGMENT_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_q: f64,
    pub highpass_hz: f64,
    pub target_rate_hz: f64,
    /// Subject id → 0-based bad channel rows.
    pub bad_channels: BTreeMap<u32, Vec<usize>>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            notch_hz: 50.0,
            notch_q: 30.0,
            highpass_hz: 0.5,
            target_rate_hz: 200.0,
            bad_channels: BTreeMap::new(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.highpass_hz
            && self.highpass_hz < self.notch_hz
            && self.notch_hz < self.target_rate_hz / 2.0)
        {
            return Err(Error::Config(format!(
                "need 0 < highpass ({}) < notch ({}) < target_rate/2 ({})",
                self.highpass_hz,
                self.notch_hz,
                self.target_rate_hz / 2.0
            )));
        }
        if !(self.notch_q > 0.0) {
            return Err(Error::Config("notch_q must be positive".into()));
        }
        if (SEGMENT_SECONDS * self.target_rate_hz).round() as usize != SEGMENT_SAMPLES {
            return Err(Error::Config(format!(
                "target rate {} Hz does not give {SEGMENT_SAMPLES}-sample segments",
                self.target_rate_hz
            )));
        }
        Ok(())
    }
}

/// Runs the full chain on one recording.
pub fn preprocess_recording(rec: &Recording, config: &PreprocessConfig, montage: &Montage) -> Result<Recording> {
    config.validate()?;
    rec.validate()?;
    let bad = config
        .bad_channels
        .get(&rec.subject_id)
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    let mut r = interpolate_bad_channels(rec, bad, montage)?;
    r = reref_average(&r)?;
    r = notch_filter(&r, config.notch_hz, config.notch_q)?;
    r = highpass_filter(&r, config.highpass_hz)?;
    r = resample(&r, config.target_rate_hz)?;
    if !r.eog_channel_indices.is_empty() {
        r = eog_regress(&r)?;
    }
    Ok(r)
}

/// Cuts each recording's trials into 400-sample segments, all tagged train.
pub fn segment_recordings(recordings: &[Recording]) -> Result<SegmentSet> {
    let Some(first) = recordings.first() else {
        return Err(Error::Config("no recordings to segment".into()));
    };
    let channels = first.n_channels() - first.eog_channel_indices.len();
    let mut data = Vec::new();
    let (mut video, mut emotion, mut subject) = (Vec::new(), Vec::new(), Vec::new());
    for rec in recordings {
        if (SEGMENT_SECONDS * rec.sample_rate_hz).round() as usize != SEGMENT_SAMPLES {
            return Err(Error::Config(format!(
                "subject {} is at {} Hz; segmentation expects 200 Hz",
                rec.subject_id, rec.sample_rate_hz
            )));
        }
        if !rec.eog_channel_indices.is_empty() {
            return Err(Error::Config(format!(
                "subject {} still carries EOG channels",
                rec.subject_id
            )));
        }
        if rec.n_channels() != channels {
            return Err(Error::Config(format!(
                "subject {} has {} channels, expected {channels}",
                rec.subject_id,
                rec.n_channels()
            )));
        }
        if rec.trials.is_empty() {
            return Err(Error::Config(format!(
                "subject {} has no labeled trials to segment",
                rec.subject_id
            )));
        }
        for trial in &rec.trials {
            for seg in ops::segment_span(rec, trial.start, trial.len, SEGMENT_SECONDS)? {
                data.extend(seg);
                video.push(trial.video_label);
                emotion.push(trial.emotion_label);
                subject.push(rec.subject_id);
            }
        }
    }
    let n = video.len();
    SegmentSet::new(channels, data, video, emotion, subject, vec![Split::Train; n])
}
