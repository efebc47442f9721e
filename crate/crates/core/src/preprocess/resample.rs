//! Band-limited downsampling with a Kaiser-windowed sinc kernel.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const KAISER_BETA: f64 = 8.6;
/// Sinc zero crossings on each side of the kernel center, counted at the
/// output rate (64 in total).
pub const HALF_ZERO_CROSSINGS: usize = 32;
/// Anti-alias cutoff as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.95;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Output length `round(n · target / source)`.
pub fn resampled_len(n: usize, source_hz: f64, target_hz: f64) -> usize {
    (n as f64 * target_hz / source_hz).round() as usize
}

/// Kernel taps for one output sample: first input index and weights
/// normalized over the in-range taps.
struct Taps {
    first: usize,
    weights: Vec<f64>,
}

/// Precomputed resampling plan shared by every channel of a recording.
pub struct Resampler {
    taps: Vec<Taps>,
    input_len: usize,
}

impl Resampler {
    pub fn new(input_len: usize, source_hz: f64, target_hz: f64) -> Result<Self> {
        if !(target_hz > 0.0) {
            return Err(Error::Config("target rate must be positive".into()));
        }
        if target_hz > source_hz {
            return Err(Error::Config(format!(
                "upsampling {source_hz} Hz → {target_hz} Hz is not supported"
            )));
        }
        let ratio = target_hz / source_hz;
        let cutoff = ratio * ROLLOFF;
        let half_width = HALF_ZERO_CROSSINGS as f64 / ratio;
        let i0_beta = bessel_i0(KAISER_BETA);
        let n_out = resampled_len(input_len, source_hz, target_hz);
        let last = input_len as i64 - 1;

        // the unclipped kernel depends only on the fractional part of the center
        let mut by_phase: HashMap<u64, (i64, Vec<f64>)> = HashMap::new();
        let mut taps = Vec::with_capacity(n_out);
        for m in 0..n_out {
            let center = m as f64 / ratio;
            let base = center.floor();
            let frac = center - base;
            let (offset, kernel) = by_phase.entry(frac.to_bits()).or_insert_with(|| {
                let lo = (frac - half_width).ceil() as i64;
                let hi = (frac + half_width).floor() as i64;
                let kernel = (lo..=hi)
                    .map(|i| {
                        let d = i as f64 - frac;
                        let r = d / half_width;
                        let window =
                            bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                        cutoff * sinc(cutoff * d) * window
                    })
                    .collect();
                (lo, kernel)
            });
            let start = base as i64 + *offset;
            let lo = start.max(0);
            let hi = (start + kernel.len() as i64 - 1).min(last);
            let mut weights: Vec<f64> = if lo <= hi {
                kernel[(lo - start) as usize..=(hi - start) as usize].to_vec()
            } else {
                Vec::new()
            };
            let total: f64 = weights.iter().sum();
            if total != 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            taps.push(Taps {
                first: lo.max(0) as usize,
                weights,
            });
        }
        Ok(Self { taps, input_len })
    }

    pub fn output_len(&self) -> usize {
        self.taps.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_len, "resampler built for another length");
        self.taps
            .iter()
            .map(|t| {
                t.weights
                    .iter()
                    .zip(&x[t.first..])
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect()
    }
}

/// Resamples one channel from `source_hz` to `target_hz ≤ source_hz`.
pub fn resample_channel(x: &[f64], source_hz: f64, target_hz: f64) -> Result<Vec<f64>> {
    if target_hz == source_hz && target_hz > 0.0 {
        return Ok(x.to_vec());
    }
    Ok(Resampler::new(x.len(), source_hz, target_hz)?.apply(x))
}
