//! Frame-conditioning vectors for a frame generator: an EEG embedding
//! concatenated with a sinusoidal code of the frame index.

use std::path::Path;

use crate::encoder::EMBED_DIM;
use crate::error::{Error, Result};
use crate::evaluation::{fmt_f64, LabeledEmbeddings};

pub const DEFAULT_ENC_DIM: usize = 10;
pub const DEFAULT_TOTAL_FRAMES: usize = 8;
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// `[x, sin(x·2⁰), cos(x·2⁰), …, sin(x·2^{d−1}), cos(x·2^{d−1})]`.
pub fn positional_encode(x: f64, enc_dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(1 + 2 * enc_dim);
    out.push(x);
    let mut freq = 1.0;
    for _ in 0..enc_dim {
        let a = x * freq;
        out.push(a.sin());
        out.push(a.cos());
        freq *= 2.0;
    }
    out
}

/// `class_id · total_frames + frame_index`.
pub fn frame_label(class_id: usize, frame_index: usize, total_frames: usize) -> Result<usize> {
    if frame_index >= total_frames {
        return Err(Error::Contract(format!(
            "frame index {frame_index} outside [0, {total_frames})"
        )));
    }
    Ok(class_id * total_frames + frame_index)
}

/// `λ1·gen + λ2·l1`; the usual weights are 0.5 and 5.0.
pub fn generator_total_loss(gen_loss: f64, l1_loss: f64, lambda1: f64, lambda2: f64) -> f64 {
    lambda1 * gen_loss + lambda2 * l1_loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningVector {
    pub values: Vec<f64>,
    pub frame_index: usize,
    pub class_id: usize,
}

/// `[emb ‖ positional_encode(frame_index)]`; `emb` must be a unit vector of
/// length 1024.
pub fn build_conditioning(emb: &[f64], frame_index: usize, enc_dim: usize) -> Result<Vec<f64>> {
    if emb.len() != EMBED_DIM {
        return Err(Error::Contract(format!(
            "embedding has {} entries, expected {EMBED_DIM}",
            emb.len()
        )));
    }
    if enc_dim == 0 {
        return Err(Error::Config("enc_dim must be at least 1".into()));
    }
    let norm = emb.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Contract(format!("embedding norm {norm} is not 1")));
    }
    let mut out = Vec::with_capacity(emb.len() + 1 + 2 * enc_dim);
    out.extend_from_slice(emb);
    out.extend(positional_encode(frame_index as f64, enc_dim));
    Ok(out)
}

impl ConditioningVector {
    pub fn new(emb: &[f64], class_id: usize, frame_index: usize, total_frames: usize, enc_dim: usize) -> Result<Self> {
        frame_label(class_id, frame_index, total_frames)?;
        Ok(Self {
            values: build_conditioning(emb, frame_index, enc_dim)?,
            frame_index,
            class_id,
        })
    }

    pub fn label(&self, total_frames: usize) -> Result<usize> {
        frame_label(self.class_id, self.frame_index, total_frames)
    }
}

/// One conditioning row per (embedding row, frame), frames innermost.
/// The class of a row is its video label.
pub fn conditioning_rows(
    emb: &LabeledEmbeddings,
    total_frames: usize,
    enc_dim: usize,
) -> Result<Vec<(usize, ConditioningVector)>> {
    if total_frames == 0 {
        return Err(Error::Config("total_frames must be at least 1".into()));
    }
    let (n, _) = emb.features.dims2()?;
    let mut out = Vec::with_capacity(n * total_frames);
    for i in 0..n {
        let row = emb.features.row(i);
        for f in 0..total_frames {
            let v = ConditioningVector::new(row, emb.video_label[i], f, total_frames, enc_dim)
                .map_err(|e| Error::Contract(format!("embedding row {i}: {e}")))?;
            out.push((i, v));
        }
    }
    Ok(out)
}

/// Embedding CSV layout plus `frame_index,frame_label`.
pub fn export_conditioning(
    emb: &LabeledEmbeddings,
    total_frames: usize,
    enc_dim: usize,
    path: &Path,
) -> Result<usize> {
    let rows = conditioning_rows(emb, total_frames, enc_dim)?;
    let width = EMBED_DIM + 1 + 2 * enc_dim;
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..width).map(|j| format!("f{j}")).collect();
    header.extend(
        ["video_label", "emotion_label", "subject_id", "frame_index", "frame_label"].map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (i, v) in &rows {
        let mut rec: Vec<String> = v.values.iter().map(|&x| fmt_f64(x)).collect();
        rec.push(emb.video_label[*i].to_string());
        rec.push(emb.emotion_label[*i].to_string());
        rec.push(emb.subject_id[*i].to_string());
        rec.push(v.frame_index.to_string());
        rec.push(v.label(total_frames)?.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(x: f64, d: usize) -> Vec<f64> {
        let mut v = vec![x];
        for k in 0..d {
            let a = x * 2f64.powi(k as i32);
            v.push(a.sin());
            v.push(a.cos());
        }
        v
    }

    fn unit(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..EMBED_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn encode_examples() {
        let z = positional_encode(0.0, 10);
        assert_eq!(z.len(), 21);
        assert_eq!(z[0], 0.0);
        for k in 0..10 {
            assert_eq!((z[1 + 2 * k], z[2 + 2 * k]), (0.0, 1.0));
        }
        let t = positional_encode(3.0, 2);
        let want = [3.0, 3f64.sin(), 3f64.cos(), 6f64.sin(), 6f64.cos()];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() <= 1e-15);
        }
        for d in 1..16 {
            assert_eq!(positional_encode(1.5, d).len(), 1 + 2 * d);
        }
    }

    #[test]
    fn encode_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = rng.random_range(-50.0..50.0);
            for (a, b) in positional_encode(x, 10).iter().zip(reference(x, 10)) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn frame_codes_are_distinct() {
        let codes: Vec<Vec<f64>> = (0..8).map(|f| positional_encode(f as f64, 10)).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                let d = codes[i].iter().zip(&codes[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(d > 0.1);
            }
        }
    }

    #[test]
    fn conditioning_layout() {
        let e = unit(1);
        let a = build_conditioning(&e, 2, 10).unwrap();
        let b = build_conditioning(&e, 5, 10).unwrap();
        assert_eq!(a.len(), 1045);
        assert_eq!(&a[..1024], &e[..]);
        assert_eq!(&a[..1024], &b[..1024]);
        assert_ne!(&a[1024..], &b[1024..]);
        assert_eq!(&a[1024..], &positional_encode(2.0, 10)[..]);
        let norm = a[..1024].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_unit_rejected() {
        let e: Vec<f64> = unit(2).iter().map(|v| v * 1.01).collect();
        assert!(matches!(build_conditioning(&e, 0, 10), Err(Error::Contract(_))));
        assert!(matches!(build_conditioning(&e[..10], 0, 10), Err(Error::Contract(_))));
    }

    #[test]
    fn frame_labels() {
        assert_eq!(frame_label(0, 0, 8).unwrap(), 0);
        assert_eq!(frame_label(2, 5, 8).unwrap(), 21);
        assert!(frame_label(1, 8, 8).is_err());
        let mut seen = vec![false; 320];
        for c in 0..40 {
            for f in 0..8 {
                let l = frame_label(c, f, 8).unwrap();
                assert!(!seen[l]);
                seen[l] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn loss_combiner() {
        assert_eq!(generator_total_loss(1.0, 0.2, 0.5, 5.0), 1.5);
        assert_eq!(generator_total_loss(0.0, 0.0, 0.5, 5.0), 0.0);
        let (g, l) = (0.37, 1.9);
        assert_eq!(
            generator_total_loss(2.0 * g, 2.0 * l, 0.5, 5.0),
            2.0 * generator_total_loss(g, l, 0.5, 5.0)
        );
    }

    #[test]
    fn export_rows() {
        let data: Vec<f64> = [unit(5), unit(6)].concat();
        let emb = LabeledEmbeddings {
            features: Tensor::new([2, EMBED_DIM], data).unwrap(),
            video_label: vec![3, 1],
            emotion_label: vec![-1, -1],
            subject_id: vec![0, 1],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        assert_eq!(export_conditioning(&emb, 8, 10, &path).unwrap(), 16);
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().len(), 1045 + 5);
        let recs: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(recs.len(), 16);
        assert_eq!(&recs[5][1048], "5");
        assert_eq!(&recs[5][1049], "29");
        assert_eq!(&recs[9][1049], "9");
    }
}
