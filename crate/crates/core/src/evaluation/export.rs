use std::path::Path;

use crate::ad::Tensor;
use crate::error::{Error, Result};

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Feature rows with their labels, as exchanged through CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub features: Tensor,
    pub video_label: Vec<usize>,
    pub emotion_label: Vec<i32>,
    pub subject_id: Vec<u32>,
}

/// Writes `f0..f{d-1},video_label,emotion_label,subject_id`.
pub fn export_embeddings(
    emb: &Tensor,
    video: &[usize],
    emotion: &[i32],
    subject: &[u32],
    path: &Path,
) -> Result<()> {
    let (n, d) = emb.dims2()?;
    if video.len() != n || emotion.len() != n || subject.len() != n {
        return Err(Error::Dimension(format!("label columns must have {n} entries")));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.extend(["video_label", "emotion_label", "subject_id"].map(String::from));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..n {
        let mut rec: Vec<String> = emb.row(i).iter().map(|&v| fmt_f64(v)).collect();
        rec.push(video[i].to_string());
        rec.push(emotion[i].to_string());
        rec.push(subject[i].to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_embeddings`]; feature columns are the
/// ones named `f<j>`.
pub fn read_embeddings(path: &Path) -> Result<LabeledEmbeddings> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
    };
    let (cv, ce, cs) = (col("video_label")?, col("emotion_label")?, col("subject_id")?);
    let feat: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.strip_prefix('f').is_some_and(|s| s.parse::<usize>().is_ok()))
        .map(|(i, _)| i)
        .collect();
    if feat.is_empty() {
        return Err(Error::format(path, "no feature columns"));
    }
    let mut data = Vec::new();
    let (mut video, mut emotion, mut subject) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::format(path, format!("row {}: bad {what}", line + 1));
        for &j in &feat {
            data.push(rec[j].parse::<f64>().map_err(|_| bad("feature"))?);
        }
        video.push(rec[cv].parse().map_err(|_| bad("video_label"))?);
        emotion.push(rec[ce].parse().map_err(|_| bad("emotion_label"))?);
        subject.push(rec[cs].parse().map_err(|_| bad("subject_id"))?);
    }
    if video.is_empty() {
        return Err(Error::format(path, "no rows"));
    }
    Ok(LabeledEmbeddings {
        features: Tensor::new([video.len(), feat.len()], data)?,
        video_label: video,
        emotion_label: emotion,
        subject_id: subject,
    })
}
