//! Recording-level preprocessing steps. Every step returns a new recording.

use nalgebra::DMatrix;

use super::filters::{butterworth_highpass4, check_below_nyquist, filtfilt, Biquad};
use super::resample::Resampler;
use crate::error::{Error, Result};
use crate::montage::Montage;
use crate::signal_io::Recording;

/// Replaces each bad channel with the mean of the good channels in its lobe
/// region: the first `lobes_*` region of `montage` (published order) that
/// contains it. `bad` holds 0-based channel rows.
pub fn interpolate_bad_channels(rec: &Recording, bad: &[usize], montage: &Montage) -> Result<Recording> {
    let mut out = rec.clone();
    if bad.is_empty() {
        return Ok(out);
    }
    let c = rec.n_channels();
    if let Some(&b) = bad.iter().find(|&&b| b >= c) {
        return Err(Error::Interpolation(format!("bad channel {b} out of range for {c} channels")));
    }
    for &b in bad {
        let label = &rec.channel_labels[b];
        let lobe = montage.lobe_of(b as u32 + 1).ok_or_else(|| {
            Error::Interpolation(format!(
                "channel {label} (index {}) belongs to no lobe region of `{}`",
                b + 1,
                montage.name()
            ))
        })?;
        let mates: Vec<usize> = montage
            .region(lobe)?
            .iter()
            .map(|&i| i as usize - 1)
            .filter(|&m| m < c && m != b && !bad.contains(&m) && !rec.is_eog(m))
            .collect();
        if mates.is_empty() {
            return Err(Error::Interpolation(format!(
                "channel {label} (index {}): lobe region `{lobe}` has no good channels",
                b + 1
            )));
        }
        let n = rec.n_samples;
        let mut mean = vec![0.0; n];
        for &m in &mates {
            mean.iter_mut().zip(rec.channel(m)).for_each(|(a, v)| *a += v);
        }
        let k = mates.len() as f64;
        mean.iter_mut().for_each(|v| *v /= k);
        out.channel_mut(b).copy_from_slice(&mean);
    }
    Ok(out)
}

/// Common average reference over the non-EOG channels.
pub fn reref_average(rec: &Recording) -> Result<Recording> {
    let eeg: Vec<usize> = (0..rec.n_channels()).filter(|&c| !rec.is_eog(c)).collect();
    if eeg.len() < 2 {
        return Err(Error::Config(format!(
            "average reference needs ≥ 2 EEG channels, recording has {}",
            eeg.len()
        )));
    }
    let n = rec.n_samples;
    let mut mean = vec![0.0; n];
    for &c in &eeg {
        mean.iter_mut().zip(rec.channel(c)).for_each(|(a, v)| *a += v);
    }
    let k = eeg.len() as f64;
    mean.iter_mut().for_each(|v| *v /= k);
    let mut out = rec.clone();
    for &c in &eeg {
        out.channel_mut(c).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    Ok(out)
}

fn filter_all(rec: &Recording, sections: &[Biquad]) -> Recording {
    let mut out = rec.clone();
    for c in 0..rec.n_channels() {
        let y = filtfilt(sections, rec.channel(c));
        out.channel_mut(c).copy_from_slice(&y);
    }
    out
}

/// Zero-phase biquad notch on every channel.
pub fn notch_filter(rec: &Recording, notch_hz: f64, q: f64) -> Result<Recording> {
    check_below_nyquist(notch_hz, rec.sample_rate_hz, "notch frequency")?;
    if !(q > 0.0) {
        return Err(Error::Config(format!("notch quality must be positive, got {q}")));
    }
    Ok(filter_all(rec, &[Biquad::notch(notch_hz, q, rec.sample_rate_hz)]))
}

/// Zero-phase 4th-order Butterworth high-pass on every channel.
pub fn highpass_filter(rec: &Recording, cutoff_hz: f64) -> Result<Recording> {
    check_below_nyquist(cutoff_hz, rec.sample_rate_hz, "high-pass cutoff")?;
    Ok(filter_all(rec, &butterworth_highpass4(cutoff_hz, rec.sample_rate_hz)))
}

/// Downsamples every channel and rescales trial spans to the new rate.
pub fn resample(rec: &Recording, target_rate_hz: f64) -> Result<Recording> {
    let source = rec.sample_rate_hz;
    if target_rate_hz > source {
        return Err(Error::Config(format!(
            "cannot upsample {source} Hz → {target_rate_hz} Hz"
        )));
    }
    if target_rate_hz == source {
        return Ok(rec.clone());
    }
    let plan = Resampler::new(rec.n_samples, source, target_rate_hz)?;
    let n_out = plan.output_len();
    if n_out == 0 {
        return Err(Error::Config("recording too short to resample".into()));
    }
    let mut data = Vec::with_capacity(rec.n_channels() * n_out);
    for c in 0..rec.n_channels() {
        data.extend(plan.apply(rec.channel(c)));
    }
    let ratio = target_rate_hz / source;
    let trials = rec
        .trials
        .iter()
        .filter_map(|t| {
            let start = ((t.start as f64 * ratio).round() as usize).min(n_out);
            let end = (((t.start + t.len) as f64 * ratio).round() as usize).min(n_out);
            (end > start).then(|| crate::signal_io::Trial {
                start,
                len: end - start,
                ..t.clone()
            })
        })
        .collect();
    Ok(Recording {
        sample_rate_hz: target_rate_hz,
        data,
        n_samples: n_out,
        trials,
        ..rec.clone()
    })
}

/// Least-squares removal of EOG activity (with intercept) from every EEG
/// channel; EOG channels are dropped from the result.
pub fn eog_regress(rec: &Recording) -> Result<Recording> {
    let eog = &rec.eog_channel_indices;
    if eog.is_empty() {
        return Err(Error::Config("EOG regression needs at least one EOG channel".into()));
    }
    let n = rec.n_samples;
    let k = eog.len();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / n as f64;

    let eog_means: Vec<f64> = eog.iter().map(|&e| mean(rec.channel(e))).collect();
    let centered: Vec<Vec<f64>> = eog
        .iter()
        .zip(&eog_means)
        .map(|(&e, m)| rec.channel(e).iter().map(|v| v - m).collect())
        .collect();
    let gram = DMatrix::from_fn(k, k, |i, j| {
        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * k as f64;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        log::warn!(
            "subject {}: EOG channels are rank-deficient; using the pseudo-inverse",
            rec.subject_id
        );
    }
    let pinv = svd
        .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("EOG pseudo-inverse failed: {e}")))?;

    let keep: Vec<usize> = (0..rec.n_channels()).filter(|c| !eog.contains(c)).collect();
    let mut data = Vec::with_capacity(keep.len() * n);
    for &c in &keep {
        let y = rec.channel(c);
        let ym = mean(y);
        let cross = nalgebra::DVector::from_fn(k, |i, _| {
            centered[i].iter().zip(y).map(|(a, b)| a * (b - ym)).sum::<f64>()
        });
        let beta = &pinv * cross;
        for t in 0..n {
            let fit: f64 = (0..k).map(|i| beta[i] * centered[i][t]).sum();
            data.push(y[t] - ym - fit);
        }
    }
    Ok(Recording {
        channel_labels: keep.iter().map(|&c| rec.channel_labels[c].clone()).collect(),
        data,
        eog_channel_indices: Vec::new(),
        ..rec.clone()
    })
}

/// Consecutive non-overlapping windows of `seconds · rate` samples; the
/// trailing remainder is dropped. Each window is channels × window samples.
pub fn segment(rec: &Recording, seconds: f64) -> Result<Vec<Vec<f64>>> {
    segment_span(rec, 0, rec.n_samples, seconds)
}

pub(crate) fn segment_span(
    rec: &Recording,
    start: usize,
    len: usize,
    seconds: f64,
) -> Result<Vec<Vec<f64>>> {
    let win = (seconds * rec.sample_rate_hz).round() as usize;
    if win == 0 {
        return Err(Error::Config("segment length rounds to zero samples".into()));
    }
    let count = len / win;
    Ok((0..count)
        .map(|s| {
            let from = start + s * win;
            let mut seg = Vec::with_capacity(rec.n_channels() * win);
            for c in 0..rec.n_channels() {
                seg.extend_from_slice(&rec.channel(c)[from..from + win]);
            }
            seg
        })
        .collect())
}
