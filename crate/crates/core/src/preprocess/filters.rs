//! Second-order IIR sections and zero-phase (forward–backward) filtering.

use crate::error::{Error, Result};

/// Normalized biquad: `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_unnormalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Band-stop at `f0` with quality `q`.
    pub fn notch(f0: f64, q: f64, fs: f64) -> Self {
        let w0 = std::f64::consts::TAU * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::from_unnormalized([1.0, -2.0 * c, 1.0], [1.0 + alpha, -2.0 * c, 1.0 - alpha])
    }

    /// Second-order high-pass (bilinear transform, pre-warped at `f0`).
    pub fn highpass(f0: f64, q: f64, fs: f64) -> Self {
        let w0 = std::f64::consts::TAU * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::from_unnormalized(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// Magnitude response at `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = std::f64::consts::TAU * f / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let nr = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let ni = -(self.b[1] * s1 + self.b[2] * s2);
        let dr = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let di = -(self.a[0] * s1 + self.a[1] * s2);
        ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
    }

    /// Largest pole magnitude.
    /// Transposed direct-form II state that is at rest for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }

}

/// Four-pole Butterworth high-pass as two cascaded sections.
pub fn butterworth_highpass4(cutoff: f64, fs: f64) -> [Biquad; 2] {
    use std::f64::consts::PI;
    let q1 = 1.0 / (2.0 * (PI / 8.0).cos());
    let q2 = 1.0 / (2.0 * (3.0 * PI / 8.0).cos());
    [Biquad::highpass(cutoff, q1, fs), Biquad::highpass(cutoff, q2, fs)]
}

pub(crate) fn check_below_nyquist(f: f64, fs: f64, what: &str) -> Result<()> {
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::Config(format!(
            "{what} {f} Hz must lie in (0, {}) Hz at {fs} Hz sampling",
            fs / 2.0
        )));
    }
    Ok(())
}

fn run_cascade(sections: &[Biquad], x: &mut [f64]) {
    let mut level = x[0];
    for s in sections {
        let [mut z1, mut z2] = s.step_state().map(|v| v * level);
        level *= s.dc_gain();
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[0] * y + z2;
            z2 = s.b[2] * xin - s.a[1] * y;
            *v = y;
        }
    }
}

/// Samples needed for the slowest pole of `sections` to decay by 1e-4.
pub fn settling_len(sections: &[Biquad]) -> usize {
    let r = sections
        .iter()
        .map(Biquad::pole_radius)
        .fold(0.0f64, f64::max)
        .min(1.0 - 1e-12);
    (9.3 / (1.0 - r)).ceil() as usize
}

/// Zero-phase filtering: odd-reflection padding, forward pass, reverse pass.
/// Each pass starts from the steady state of its first sample.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 || sections.is_empty() {
        return x.to_vec();
    }
    let pad = settling_len(sections).max(6).min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}
