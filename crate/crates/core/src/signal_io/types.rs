use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per segment: 2 s at 200 Hz.
pub const SEGMENT_SAMPLES: usize = 400;

/// A labeled stimulus span inside a continuous recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub start: usize,
    pub len: usize,
    pub video_label: usize,
    /// `-1` when the dataset has no emotion annotation.
    pub emotion_label: i32,
}

/// One subject's continuous multichannel EEG, channels × samples, in µV.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub sample_rate_hz: f64,
    pub channel_labels: Vec<String>,
    /// Row-major channels × samples.
    pub data: Vec<f64>,
    pub n_samples: usize,
    pub eog_channel_indices: Vec<usize>,
    pub trials: Vec<Trial>,
}

impl Recording {
    pub fn n_channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.n_samples;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_eog(&self, c: usize) -> bool {
        self.eog_channel_indices.contains(&c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_id == 0 {
            return Err(Error::Contract("subject ids are positive".into()));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Contract(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::Contract("recording has no samples".into()));
        }
        if self.data.len() != self.n_channels() * self.n_samples {
            return Err(Error::Contract(format!(
                "{} channels × {} samples needs {} values, have {}",
                self.n_channels(),
                self.n_samples,
                self.n_channels() * self.n_samples,
                self.data.len()
            )));
        }
        let mut seen = vec![false; self.n_channels()];
        for &e in &self.eog_channel_indices {
            if e >= self.n_channels() || std::mem::replace(&mut seen[e], true) {
                return Err(Error::Contract(format!("invalid or repeated EOG index {e}")));
            }
        }
        for t in &self.trials {
            if t.len == 0 || t.start + t.len > self.n_samples {
                return Err(Error::Contract(format!(
                    "trial [{}, {}) outside recording of {} samples",
                    t.start,
                    t.start + t.len,
                    self.n_samples
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Which label column drives training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Video,
    Emotion,
    Subject,
}

/// Fixed-length labeled segments, stored N × C × T row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
    pub video_label: Vec<usize>,
    pub emotion_label: Vec<i32>,
    pub subject_id: Vec<u32>,
    pub split: Vec<Split>,
}

impl SegmentSet {
    pub fn new(
        channels: usize,
        data: Vec<f64>,
        video_label: Vec<usize>,
        emotion_label: Vec<i32>,
        subject_id: Vec<u32>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let set = Self {
            channels,
            samples: SEGMENT_SAMPLES,
            data,
            video_label,
            emotion_label,
            subject_id,
            split,
        };
        set.validate()?;
        Ok(set)
    }

    /// Like [`SegmentSet::new`] but without requiring contiguous video labels;
    /// used for subsets of a validated set.
    fn new_subset(
        channels: usize,
        data: Vec<f64>,
        video_label: Vec<usize>,
        emotion_label: Vec<i32>,
        subject_id: Vec<u32>,
        split: Vec<Split>,
    ) -> Self {
        Self {
            channels,
            samples: SEGMENT_SAMPLES,
            data,
            video_label,
            emotion_label,
            subject_id,
            split,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.video_label.len();
        if self.channels == 0 {
            return Err(Error::Contract("segments need at least one channel".into()));
        }
        if self.emotion_label.len() != n || self.subject_id.len() != n || self.split.len() != n {
            return Err(Error::Contract("label arrays differ in length".into()));
        }
        if self.data.len() != n * self.channels * self.samples {
            return Err(Error::Contract(format!(
                "{n} segments × {} channels × {} samples needs {} values, have {}",
                self.channels,
                self.samples,
                n * self.channels * self.samples,
                self.data.len()
            )));
        }
        if n > 0 {
            let k = self.num_video_classes();
            let mut present = vec![false; k];
            self.video_label.iter().for_each(|&v| present[v] = true);
            if let Some(missing) = present.iter().position(|p| !p) {
                return Err(Error::Contract(format!(
                    "video labels must be contiguous 0..{k}; {missing} is absent"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.video_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.video_label.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn segment_len(&self) -> usize {
        self.channels * self.samples
    }

    pub fn segment(&self, i: usize) -> &[f64] {
        let s = self.segment_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn num_video_classes(&self) -> usize {
        self.video_label.iter().max().map_or(0, |m| m + 1)
    }

    /// Label column as class indices; subjects and emotions are remapped to
    /// dense 0-based ids in ascending order of their raw values.
    pub fn labels(&self, kind: LabelKind) -> Result<Vec<usize>> {
        match kind {
            LabelKind::Video => Ok(self.video_label.clone()),
            LabelKind::Emotion => {
                if self.emotion_label.iter().any(|&e| e < 0) {
                    return Err(Error::Contract("segments carry no emotion labels".into()));
                }
                Ok(densify(&self.emotion_label))
            }
            LabelKind::Subject => Ok(densify(&self.subject_id)),
        }
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> SegmentSet {
        let s = self.segment_len();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            data.extend_from_slice(self.segment(i));
        }
        Self::new_subset(
            self.channels,
            data,
            indices.iter().map(|&i| self.video_label[i]).collect(),
            indices.iter().map(|&i| self.emotion_label[i]).collect(),
            indices.iter().map(|&i| self.subject_id[i]).collect(),
            indices.iter().map(|&i| self.split[i]).collect(),
        )
    }

    pub fn split_subset(&self, split: Split) -> SegmentSet {
        self.subset(&self.indices_in(split))
    }

    /// Keeps the given 0-based channel rows, in the order given.
    pub fn select_channels(&self, rows: &[usize]) -> Result<SegmentSet> {
        if rows.is_empty() {
            return Err(Error::Montage("channel selection is empty".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.channels) {
            return Err(Error::Montage(format!(
                "channel {bad} out of range for {} channels",
                self.channels
            )));
        }
        let t = self.samples;
        let mut data = Vec::with_capacity(self.len() * rows.len() * t);
        for i in 0..self.len() {
            let seg = self.segment(i);
            for &r in rows {
                data.extend_from_slice(&seg[r * t..(r + 1) * t]);
            }
        }
        Ok(Self::new_subset(
            rows.len(),
            data,
            self.video_label.clone(),
            self.emotion_label.clone(),
            self.subject_id.clone(),
            self.split.clone(),
        ))
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.split {
            c[*s as usize] += 1;
        }
        c
    }
}

fn densify<T: Ord + Copy>(values: &[T]) -> Vec<usize> {
    let mut distinct: Vec<T> = values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect()
}
