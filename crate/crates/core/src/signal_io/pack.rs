//! On-disk containers: a JSON manifest beside little-endian `f32` payloads.
//!
//! Pack layout: `<dir>/manifest.json` + `<dir>/rec_<subject>.f32raw`
//! (channels × samples, row-major). Segment layout: `<dir>/segments.json` +
//! `<dir>/segments.f32raw` (N × C × 400, N-major).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Recording, SegmentSet, Split, Trial, SEGMENT_SAMPLES};
use crate::error::{Error, Result};

pub const PACK_MANIFEST: &str = "manifest.json";
pub const SEGMENTS_MANIFEST: &str = "segments.json";
pub const SEGMENTS_PAYLOAD: &str = "segments.f32raw";

#[derive(Debug, Serialize, Deserialize)]
struct PackManifest {
    recordings: Vec<RecordingEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordingEntry {
    subject_id: u32,
    sample_rate_hz: f64,
    channel_labels: Vec<String>,
    n_samples: usize,
    #[serde(default)]
    eog_channel_indices: Vec<usize>,
    #[serde(default)]
    trials: Vec<Trial>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentsManifest {
    n: usize,
    channels: usize,
    samples: usize,
    video_label: Vec<usize>,
    emotion_label: Vec<i32>,
    subject_id: Vec<u32>,
    split: Vec<String>,
    file: String,
}

fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!(
                "manifest declares {expected} values ({} bytes), file has {} bytes",
                expected * 4,
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pack(recordings: &[Recording], dir: &Path) -> Result<()> {
    if recordings.is_empty() {
        return Err(Error::Contract("cannot write an empty pack".into()));
    }
    let mut subjects: Vec<u32> = recordings.iter().map(|r| r.subject_id).collect();
    subjects.sort_unstable();
    if subjects.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Contract("pack holds one recording per subject".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(recordings.len());
    for rec in recordings {
        rec.validate()?;
        let file = format!("rec_{}.f32raw", rec.subject_id);
        write_f32(&dir.join(&file), &rec.data)?;
        entries.push(RecordingEntry {
            subject_id: rec.subject_id,
            sample_rate_hz: rec.sample_rate_hz,
            channel_labels: rec.channel_labels.clone(),
            n_samples: rec.n_samples,
            eog_channel_indices: rec.eog_channel_indices.clone(),
            trials: rec.trials.clone(),
            file,
        });
    }
    write_json(&dir.join(PACK_MANIFEST), &PackManifest { recordings: entries })
}

pub fn read_pack(dir: &Path) -> Result<Vec<Recording>> {
    let manifest_path = dir.join(PACK_MANIFEST);
    let manifest: PackManifest = read_json(&manifest_path)?;
    if manifest.recordings.is_empty() {
        return Err(Error::format(&manifest_path, "pack lists no recordings"));
    }
    manifest
        .recordings
        .into_iter()
        .map(|e| {
            if e.file.contains('/') || e.file.contains('\\') {
                return Err(Error::format(&manifest_path, format!("bad file name `{}`", e.file)));
            }
            let path = dir.join(&e.file);
            let data = read_f32(&path, e.channel_labels.len() * e.n_samples)?;
            let rec = Recording {
                subject_id: e.subject_id,
                sample_rate_hz: e.sample_rate_hz,
                channel_labels: e.channel_labels,
                data,
                n_samples: e.n_samples,
                eog_channel_indices: e.eog_channel_indices,
                trials: e.trials,
            };
            rec.validate()
                .map_err(|err| Error::format(&path, err.to_string()))?;
            Ok(rec)
        })
        .collect()
}

pub fn write_segments(set: &SegmentSet, dir: &Path) -> Result<()> {
    set.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f32(&dir.join(SEGMENTS_PAYLOAD), set.data())?;
    let manifest = SegmentsManifest {
        n: set.len(),
        channels: set.channels(),
        samples: set.samples(),
        video_label: set.video_label.clone(),
        emotion_label: set.emotion_label.clone(),
        subject_id: set.subject_id.clone(),
        split: set.split.iter().map(|s| s.as_str().to_string()).collect(),
        file: SEGMENTS_PAYLOAD.to_string(),
    };
    write_json(&dir.join(SEGMENTS_MANIFEST), &manifest)
}

pub fn read_segments(dir: &Path) -> Result<SegmentSet> {
    let manifest_path = dir.join(SEGMENTS_MANIFEST);
    let m: SegmentsManifest = read_json(&manifest_path)?;
    let bad = |msg: String| Error::format(&manifest_path, msg);
    if m.samples != SEGMENT_SAMPLES {
        return Err(bad(format!(
            "segments must hold {SEGMENT_SAMPLES} samples, manifest says {}",
            m.samples
        )));
    }
    for (name, len) in [
        ("video_label", m.video_label.len()),
        ("emotion_label", m.emotion_label.len()),
        ("subject_id", m.subject_id.len()),
        ("split", m.split.len()),
    ] {
        if len != m.n {
            return Err(bad(format!("{name} has {len} entries, expected {}", m.n)));
        }
    }
    let split = m
        .split
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Split::parse(s).ok_or_else(|| bad(format!("segment {i} has invalid split tag `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if m.file.contains('/') || m.file.contains('\\') {
        return Err(bad(format!("bad file name `{}`", m.file)));
    }
    let data = read_f32(&dir.join(&m.file), m.n * m.channels * m.samples)?;
    SegmentSet::new(m.channels, data, m.video_label, m.emotion_label, m.subject_id, split)
        .map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel() -> Recording {
        Recording {
            subject_id: 3,
            sample_rate_hz: 200.0,
            channel_labels: vec!["Fp1".into(), "Fp2".into()],
            data: (0..20).map(|i| (i as f64 * 0.37).sin() * 50.0).collect(),
            n_samples: 10,
            eog_channel_indices: vec![],
            trials: vec![Trial {
                start: 0,
                len: 10,
                video_label: 0,
                emotion_label: -1,
            }],
        }
    }

    #[test]
    fn pack_round_trip_within_f32_rounding() {
        let dir = tempfile::tempdir().unwrap();
        let rec = two_channel();
        write_pack(std::slice::from_ref(&rec), dir.path()).unwrap();
        let back = read_pack(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(b.subject_id, rec.subject_id);
        assert_eq!(b.sample_rate_hz.to_bits(), rec.sample_rate_hz.to_bits());
        assert_eq!(b.channel_labels, rec.channel_labels);
        assert_eq!(b.trials, rec.trials);
        for (x, y) in rec.data.iter().zip(&b.data) {
            assert_eq!(*y, (*x as f32) as f64);
            let ulp = f32::EPSILON as f64 * x.abs().max(f32::MIN_POSITIVE as f64);
            assert!((x - y).abs() <= ulp);
        }
    }

    #[test]
    fn short_payload_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = two_channel();
        rec.channel_labels.truncate(1);
        rec.data = vec![0.0; 400];
        rec.n_samples = 400;
        rec.trials.clear();
        write_pack(&[rec], dir.path()).unwrap();
        let raw = dir.path().join("rec_3.f32raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..399 * 4]).unwrap();
        match read_pack(dir.path()) {
            Err(Error::Format { file, .. }) => assert!(file.ends_with("rec_3.f32raw")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_pack(dir.path()), Err(Error::Io { .. })));
        fs::write(dir.path().join(PACK_MANIFEST), "{not json").unwrap();
        assert!(matches!(read_pack(dir.path()), Err(Error::Format { .. })));
    }

    fn segment_set(n: usize) -> SegmentSet {
        SegmentSet::new(
            1,
            (0..n * SEGMENT_SAMPLES).map(|i| i as f64).collect(),
            (0..n).map(|i| i % 2).collect(),
            vec![-1; n],
            vec![7; n],
            (0..n)
                .map(|i| [Split::Train, Split::Val, Split::Test][i % 3])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn segments_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = segment_set(6);
        write_segments(&set, dir.path()).unwrap();
        let back = read_segments(dir.path()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn empty_split_tag_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_segments(&segment_set(3), dir.path()).unwrap();
        let path = dir.path().join(SEGMENTS_MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replacen("\"val\"", "\"\"", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(read_segments(dir.path()), Err(Error::Format { .. })));
    }
}
