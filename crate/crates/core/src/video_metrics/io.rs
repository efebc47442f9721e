use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, DynamicImage, ImageEncoder};
use serde::{Serialize, Serializer};

use super::{ofs, psnr, ssim, Clip, Frame};
use crate::error::{Error, Result};

/// Reads a PGM (or any PNM) file; colour images are luma-converted.
pub fn read_frame(path: &Path) -> Result<Frame> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => Frame::new(h, w, g.into_raw().into_iter().map(|p| p as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(g) => Frame::new(h, w, g.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect()),
        other => {
            let rgb: Vec<f64> = other.to_rgb8().into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
            Frame::from_rgb(h, w, &rgb)
        }
    }
}

/// Writes an 8-bit binary PGM (P5).
pub fn write_frame(frame: &Frame, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = frame.pixels().iter().map(|p| (p * 255.0).round() as u8).collect();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, frame.width() as u32, frame.height() as u32, ColorType::L8.into())
        .map_err(|e| Error::format(path, e.to_string()))
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| {
                n.len() == "frame_0000.pgm".len()
                    && n.starts_with("frame_")
                    && n.ends_with(".pgm")
                    && n[6..10].bytes().all(|b| b.is_ascii_digit())
            })
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads `frame_%04d.pgm` files from `dir` in index order.
pub fn read_clip(dir: &Path) -> Result<Clip> {
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::format(dir, "no frame_NNNN.pgm files"));
    }
    Clip::new(paths.iter().map(|p| read_frame(p)).collect::<Result<_>>()?)
}

pub fn write_clip(clip: &Clip, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in clip.frames().iter().enumerate() {
        write_frame(f, &dir.join(format!("frame_{i:04}.pgm")))?;
    }
    Ok(())
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub index: usize,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipMetrics {
    pub frames: usize,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
    pub ofs_gt: Option<f64>,
    pub ofs_gen: Option<f64>,
    pub per_frame: Vec<FrameMetrics>,
}

/// Frame-paired PSNR/SSIM means plus the optical-flow score of each clip
/// (absent for single-frame clips).
pub fn compare_clips(gt: &Clip, generated: &Clip) -> Result<ClipMetrics> {
    if gt.len() != generated.len() {
        return Err(Error::Contract(format!(
            "clips differ in length: {} vs {}",
            gt.len(),
            generated.len()
        )));
    }
    let per_frame = gt
        .frames()
        .iter()
        .zip(generated.frames())
        .enumerate()
        .map(|(index, (a, b))| Ok(FrameMetrics { index, psnr: psnr(a, b)?, ssim: ssim(a, b)? }))
        .collect::<Result<Vec<_>>>()?;
    let n = per_frame.len() as f64;
    let score = |c: &Clip| if c.len() >= 2 { ofs(c).map(Some) } else { Ok(None) };
    Ok(ClipMetrics {
        frames: per_frame.len(),
        psnr: per_frame.iter().map(|m| m.psnr).sum::<f64>() / n,
        ssim: per_frame.iter().map(|m| m.ssim).sum::<f64>() / n,
        ofs_gt: score(gt)?,
        ofs_gen: score(generated)?,
        per_frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, off: usize) -> Frame {
        Frame::new(h, w, (0..h * w).map(|i| ((i + off) % 256) as f64 / 255.0).collect()).unwrap()
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clip = Clip::new((0..3).map(|i| ramp(9, 11, i * 7)).collect()).unwrap();
        write_clip(&clip, dir.path()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        assert!(std::fs::read(dir.path().join("frame_0002.pgm")).unwrap().starts_with(b"P5"));
        let back = read_clip(dir.path()).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_clip(dir.path()).is_err());
    }

    #[test]
    fn identical_clips_report_inf() {
        let clip = Clip::new((0..3).map(|i| ramp(8, 8, i)).collect()).unwrap();
        let m = compare_clips(&clip, &clip).unwrap();
        assert_eq!(m.ssim, 1.0);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["psnr"], "inf");
        assert_eq!(json["per_frame"][1]["psnr"], "inf");
        assert_eq!(m.ofs_gt, m.ofs_gen);
    }
}
