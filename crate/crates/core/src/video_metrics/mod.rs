//! Frame-quality and motion metrics for short clips: PSNR, SSIM,
//! Horn–Schunck optical flow, the optical-flow score and keyframe picking.

mod flow;
mod io;

pub use flow::{ofs, optical_flow, select_keyframes, Flow, HS_ALPHA, HS_ITERATIONS};
pub use io::{compare_clips, read_clip, read_frame, write_clip, write_frame, ClipMetrics, FrameMetrics};

use crate::error::{Error, Result};

/// Grayscale image with values clamped to `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract("frame must be at least 1×1".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::Dimension(format!(
                "{height}×{width} frame needs {} pixels, have {}",
                height * width,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| p.is_nan()) {
            return Err(Error::NonFinite("frame pixels"));
        }
        let pixels = pixels.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
        Ok(Self { height, width, pixels })
    }

    /// Interleaved RGB in `[0, 1]`, converted with luma weights 0.299/0.587/0.114.
    pub fn from_rgb(height: usize, width: usize, rgb: &[f64]) -> Result<Self> {
        if rgb.len() != 3 * height * width {
            return Err(Error::Dimension(format!(
                "{height}×{width} RGB frame needs {} values, have {}",
                3 * height * width,
                rgb.len()
            )));
        }
        let gray = rgb
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Self::new(height, width, gray)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    fn same_shape(&self, other: &Frame) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "frame shapes differ: {}×{} vs {}×{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Ordered frames of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    frames: Vec<Frame>,
}

impl Clip {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Contract("clip has no frames".into()))?;
        for f in &frames[1..] {
            first.same_shape(f)?;
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// `10·log10(1/MSE)` for unit peak; `+∞` when the frames are identical.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_shape(b)?;
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean SSIM over every 8×8 window (stride 1), uniform weights and
/// population moments, `C1 = K1²`, `C2 = K2²`.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_shape(b)?;
    let w = SSIM_WINDOW;
    if a.height < w || a.width < w {
        return Err(Error::Contract(format!(
            "SSIM needs frames of at least {w}×{w}, got {}×{}",
            a.height, a.width
        )));
    }
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let n = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=a.height - w {
        for x0 in 0..=a.width - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + w {
                for x in x0..x0 + w {
                    let (p, q) = (a.at(y, x), b.at(y, x));
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
