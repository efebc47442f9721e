//! Synthetic EEG with planted class, region, time-window, and subject structure.
//!
//! A class-`k` segment carries a sinusoid at `class_freqs_hz[k]` on the signal
//! channels inside the signal window, white Gaussian noise at `snr_db`
//! (relative to the sinusoid's power) on every channel and sample, and a
//! constant per-subject spatial offset on every channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::types::{Recording, SegmentSet, Split, Trial, SEGMENT_SAMPLES};
use crate::error::{Error, Result};
use crate::montage::Montage;

pub const SYNTH_RATE_HZ: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalChannels {
    /// Region key of `SynthSpec::montage`.
    Region(String),
    /// Explicit 1-based channel indices.
    Indices(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub n_classes: usize,
    pub segments_per_class_per_subject: usize,
    pub channels: usize,
    pub signal_channels: SignalChannels,
    pub signal_window: [usize; 2],
    pub class_freqs_hz: Vec<f64>,
    /// `null` disables noise entirely.
    pub snr_db: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_montage")]
    pub montage: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Standard deviation of the per-subject, per-channel constant offset.
    #[serde(default = "default_offset")]
    pub subject_offset_std: f64,
    /// Draw a fresh sinusoid phase per segment instead of starting at phase 0.
    #[serde(default = "yes")]
    pub random_phase: bool,
    /// Emotion label = video class modulo this count; absent means no emotion labels.
    #[serde(default)]
    pub n_emotions: Option<usize>,
}

fn default_montage() -> String {
    "seed_v1".into()
}

fn one() -> f64 {
    1.0
}

fn default_offset() -> f64 {
    3.0
}

fn yes() -> bool {
    true
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let [t1, t2] = self.signal_window;
        if t1 >= t2 || t2 > SEGMENT_SAMPLES {
            return Err(Error::Config(format!(
                "signal window [{t1}, {t2}) must satisfy 0 ≤ t1 < t2 ≤ {SEGMENT_SAMPLES}"
            )));
        }
        if self.n_subjects == 0 || self.n_classes == 0 || self.segments_per_class_per_subject == 0 {
            return Err(Error::Config("subject, class and segment counts must be positive".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("need at least one channel".into()));
        }
        if self.class_freqs_hz.len() != self.n_classes {
            return Err(Error::Config(format!(
                "{} class frequencies for {} classes",
                self.class_freqs_hz.len(),
                self.n_classes
            )));
        }
        for (i, f) in self.class_freqs_hz.iter().enumerate() {
            if !(*f > 0.0 && *f < SYNTH_RATE_HZ / 2.0) {
                return Err(Error::Config(format!("class frequency {f} outside (0, 100) Hz")));
            }
            if self.class_freqs_hz[..i].contains(f) {
                return Err(Error::Config(format!("class frequency {f} repeated")));
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("snr_db must be finite or null".into()));
            }
        }
        if self.n_emotions == Some(0) {
            return Err(Error::Config("n_emotions must be positive".into()));
        }
        self.signal_rows()?;
        Ok(())
    }

    /// 0-based signal channel rows, ascending.
    pub fn signal_rows(&self) -> Result<Vec<usize>> {
        let idx: Vec<u32> = match &self.signal_channels {
            SignalChannels::Region(key) => Montage::load(&self.montage)?.region(key)?.to_vec(),
            SignalChannels::Indices(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        if idx.is_empty() {
            return Err(Error::Config("no signal channels".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i == 0 || i as usize > self.channels) {
            return Err(Error::Config(format!(
                "signal channel {bad} outside 1..={}",
                self.channels
            )));
        }
        Ok(idx.iter().map(|&i| i as usize - 1).collect())
    }

    pub fn noise_std(&self) -> f64 {
        match self.snr_db {
            None => 0.0,
            Some(db) => (self.amplitude * self.amplitude / 2.0 / 10f64.powf(db / 10.0)).sqrt(),
        }
    }
}

/// Generated data, subject-major then class-major then segment order.
pub fn synth_segments(spec: &SynthSpec) -> Result<SegmentSet> {
    spec.validate()?;
    let rows = spec.signal_rows()?;
    let c = spec.channels;
    let t = SEGMENT_SAMPLES;
    let [t1, t2] = spec.signal_window;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let sigma = spec.noise_std();

    let offsets: Vec<Vec<f64>> = (0..spec.n_subjects)
        .map(|_| (0..c).map(|_| spec.subject_offset_std * unit.sample(&mut rng)).collect())
        .collect();

    let n = spec.n_subjects * spec.n_classes * spec.segments_per_class_per_subject;
    let mut data = Vec::with_capacity(n * c * t);
    let mut video = Vec::with_capacity(n);
    let mut subject = Vec::with_capacity(n);
    let mut wave = vec![0.0; t];
    for (s, offset) in offsets.iter().enumerate() {
        for (k, &freq) in spec.class_freqs_hz.iter().enumerate() {
            for _ in 0..spec.segments_per_class_per_subject {
                let phase = if spec.random_phase {
                    rng.random::<f64>() * std::f64::consts::TAU
                } else {
                    0.0
                };
                for (i, w) in wave.iter_mut().enumerate() {
                    *w = if (t1..t2).contains(&i) {
                        let time = (i - t1) as f64 / SYNTH_RATE_HZ;
                        spec.amplitude * (std::f64::consts::TAU * freq * time + phase).sin()
                    } else {
                        0.0
                    };
                }
                let mut next_row = rows.iter().peekable();
                for (ch, &off) in offset.iter().enumerate() {
                    let is_signal = next_row.next_if_eq(&&ch).is_some();
                    for &w in &wave {
                        let mut v = off;
                        if is_signal {
                            v += w;
                        }
                        if sigma > 0.0 {
                            v += sigma * unit.sample(&mut rng);
                        }
                        data.push(v);
                    }
                }
                video.push(k);
                subject.push(s as u32 + 1);
            }
        }
    }
    let emotion = match spec.n_emotions {
        Some(e) => video.iter().map(|&v| (v % e) as i32).collect(),
        None => vec![-1; n],
    };
    SegmentSet::new(c, data, video, emotion, subject, vec![Split::Train; n])
}

/// The same data laid out as one continuous 200 Hz recording per subject,
/// with one trial per class block.
pub fn synth_recordings(spec: &SynthSpec) -> Result<Vec<Recording>> {
    let set = synth_segments(spec)?;
    let c = spec.channels;
    let t = SEGMENT_SAMPLES;
    let per_subject = spec.n_classes * spec.segments_per_class_per_subject;
    let n_samples = per_subject * t;
    let labels: Vec<String> = (1..=c).map(|i| format!("ch{i}")).collect();
    (0..spec.n_subjects)
        .map(|s| {
            let mut data = vec![0.0; c * n_samples];
            for j in 0..per_subject {
                let seg = set.segment(s * per_subject + j);
                for ch in 0..c {
                    data[ch * n_samples + j * t..ch * n_samples + (j + 1) * t]
                        .copy_from_slice(&seg[ch * t..(ch + 1) * t]);
                }
            }
            let block = spec.segments_per_class_per_subject * t;
            let trials = (0..spec.n_classes)
                .map(|k| Trial {
                    start: k * block,
                    len: block,
                    video_label: k,
                    emotion_label: set.emotion_label[s * per_subject + k * spec.segments_per_class_per_subject],
                })
                .collect();
            let rec = Recording {
                subject_id: s as u32 + 1,
                sample_rate_hz: SYNTH_RATE_HZ,
                channel_labels: labels.clone(),
                data,
                n_samples,
                eog_channel_indices: vec![],
                trials,
            };
            rec.validate()?;
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_spec() -> SynthSpec {
        SynthSpec {
            n_subjects: 2,
            n_classes: 3,
            segments_per_class_per_subject: 2,
            channels: 62,
            signal_channels: SignalChannels::Region("noseback_left".into()),
            signal_window: [100, 300],
            class_freqs_hz: vec![8.0, 13.0, 21.0],
            snr_db: Some(0.0),
            seed: 11,
            montage: "seed_v1".into(),
            amplitude: 1.0,
            subject_offset_std: 3.0,
            random_phase: true,
            n_emotions: None,
        }
    }

    #[test]
    fn noise_off_leaves_offset_outside_window() {
        let mut spec = small_spec();
        spec.snr_db = None;
        let set = synth_segments(&spec).unwrap();
        let rows = spec.signal_rows().unwrap();
        let t = SEGMENT_SAMPLES;
        for i in 0..set.len() {
            let seg = set.segment(i);
            for &r in &rows {
                let row = &seg[r * t..(r + 1) * t];
                let base = row[0];
                assert!(row[..100].iter().chain(&row[300..]).all(|&v| v == base));
            }
            // non-signal channels are constant everywhere
            assert!(seg[t..2 * t].iter().all(|&v| v == seg[t]));
        }
        // same subject → same offsets
        assert_eq!(set.segment(0)[0], set.segment(1)[0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_segments(&small_spec()).unwrap();
        let b = synth_segments(&small_spec()).unwrap();
        assert_eq!(a, b);
        let mut other = small_spec();
        other.seed = 12;
        assert_ne!(synth_segments(&other).unwrap().data(), a.data());
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec();
        s.signal_window = [300, 300];
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = small_spec();
        s.signal_channels = SignalChannels::Region("no_such_region".into());
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.class_freqs_hz = vec![8.0, 8.0, 9.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn recordings_mirror_segments() {
        let spec = small_spec();
        let set = synth_segments(&spec).unwrap();
        let recs = synth_recordings(&spec).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].subject_id, 2);
        let t = SEGMENT_SAMPLES;
        // second segment of subject 2, channel 5
        let j = 1;
        let seg = set.segment(6 + j);
        assert_eq!(&recs[1].channel(5)[j * t..(j + 1) * t], &seg[5 * t..6 * t]);
        assert_eq!(recs[0].trials[2].video_label, 2);
    }
}
