use super::{Clip, Frame};
use crate::error::{Error, Result};

pub const HS_ALPHA: f64 = 1.0;
pub const HS_ITERATIONS: usize = 100;

/// Per-pixel displacement, row-major; `u` along x (columns), `v` along y.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Flow {
    pub fn magnitude(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).collect()
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitude().iter().sum::<f64>() / self.u.len() as f64
    }
}

fn clamp_at(p: &[f64], h: usize, w: usize, y: isize, x: isize) -> f64 {
    let y = y.clamp(0, h as isize - 1) as usize;
    let x = x.clamp(0, w as isize - 1) as usize;
    p[y * w + x]
}

/// Horn–Schunck: spatial derivatives are central differences of the mean of
/// both frames (borders replicated), the temporal derivative is `b − a`, and
/// the smoothness term uses the 4-neighbour average.
pub fn optical_flow(a: &Frame, b: &Frame, alpha: f64, iterations: usize) -> Result<Flow> {
    a.same_shape(b)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothness weight must be positive, got {alpha}")));
    }
    let (h, w) = (a.height, a.width);
    let mean: Vec<f64> = a.pixels.iter().zip(&b.pixels).map(|(p, q)| 0.5 * (p + q)).collect();
    let n = h * w;
    let (mut ix, mut iy, mut it) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let k = y * w + x;
            ix[k] = 0.5 * (clamp_at(&mean, h, w, yi, xi + 1) - clamp_at(&mean, h, w, yi, xi - 1));
            iy[k] = 0.5 * (clamp_at(&mean, h, w, yi + 1, xi) - clamp_at(&mean, h, w, yi - 1, xi));
            it[k] = b.pixels[k] - a.pixels[k];
        }
    }
    let a2 = alpha * alpha;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut nu, mut nv) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let (yi, xi) = (y as isize, x as isize);
                let avg = |f: &[f64]| {
                    0.25 * (clamp_at(f, h, w, yi, xi - 1)
                        + clamp_at(f, h, w, yi, xi + 1)
                        + clamp_at(f, h, w, yi - 1, xi)
                        + clamp_at(f, h, w, yi + 1, xi))
                };
                let (ub, vb) = (avg(&u), avg(&v));
                let k = y * w + x;
                let t = (ix[k] * ub + iy[k] * vb + it[k]) / (a2 + ix[k] * ix[k] + iy[k] * iy[k]);
                nu[k] = ub - ix[k] * t;
                nv[k] = vb - iy[k] * t;
            }
        }
        std::mem::swap(&mut u, &mut nu);
        std::mem::swap(&mut v, &mut nv);
    }
    Ok(Flow { height: h, width: w, u, v })
}

fn pair_motion(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(optical_flow(a, b, HS_ALPHA, HS_ITERATIONS)?.mean_magnitude())
}

/// Mean over consecutive frame pairs of the mean per-pixel flow magnitude.
pub fn ofs(clip: &Clip) -> Result<f64> {
    if clip.len() < 2 {
        return Err(Error::Contract("optical-flow score needs at least 2 frames".into()));
    }
    let f = clip.frames();
    let mut total = 0.0;
    for pair in f.windows(2) {
        total += pair_motion(&pair[0], &pair[1])?;
    }
    Ok(total / (f.len() - 1) as f64)
}

/// Greedy forward selection: frame 0, then repeatedly the later frame with
/// the largest mean flow from the last pick, leaving room for the picks
/// still owed. Ties go to the earliest frame.
pub fn select_keyframes(clip: &Clip, n: usize) -> Result<Vec<usize>> {
    let len = clip.len();
    if n == 0 || len < n {
        return Err(Error::Contract(format!("cannot pick {n} keyframes from {len} frames")));
    }
    let f = clip.frames();
    let mut picked = vec![0];
    while picked.len() < n {
        let last = *picked.last().expect("non-empty");
        let latest = len - (n - picked.len());
        let mut best = (last + 1, f64::NEG_INFINITY);
        for j in last + 1..=latest {
            let m = pair_motion(&f[last], &f[j])?;
            if m > best.1 {
                best = (j, m);
            }
        }
        picked.push(best.0);
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(h: usize, w: usize, shift: f64, transpose: bool) -> Frame {
        let mut p = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (a, b) = if transpose { (y, x) } else { (x, y) };
                let s = a as f64 - shift;
                let t = b as f64;
                p.push(0.5 + 0.225 * (s * 0.9).sin() + 0.225 * (t * 0.6).cos());
            }
        }
        Frame::new(h, w, p).unwrap()
    }

    #[test]
    fn no_motion_no_flow() {
        let a = pattern(16, 16, 0.0, false);
        let f = optical_flow(&a, &a, 1.0, 100).unwrap();
        assert!(f.magnitude().iter().all(|m| *m < 1e-6));
    }

    #[test]
    fn shift_is_recovered() {
        let a = pattern(24, 24, 0.0, false);
        let b = pattern(24, 24, 1.0, false);
        let f = optical_flow(&a, &b, 1.0, 100).unwrap();
        let mu = f.u.iter().sum::<f64>() / f.u.len() as f64;
        let mv = f.v.iter().sum::<f64>() / f.v.len() as f64;
        assert!((0.5..=1.5).contains(&mu), "{mu}");
        assert!(mv.abs() <= 0.2, "{mv}");
    }

    #[test]
    fn axes_swap() {
        let (h, w) = (20, 20);
        let f = optical_flow(&pattern(h, w, 0.0, false), &pattern(h, w, 1.0, false), 1.0, 50).unwrap();
        let g = optical_flow(&pattern(h, w, 0.0, true), &pattern(h, w, 1.0, true), 1.0, 50).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert!((f.u[y * w + x] - g.v[x * w + y]).abs() < 1e-12);
                assert!((f.v[y * w + x] - g.u[x * w + y]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn static_clip_scores_zero() {
        let c = Clip::new(vec![pattern(10, 10, 0.0, false); 4]).unwrap();
        assert!(ofs(&c).unwrap().abs() < 1e-6);
        assert!(ofs(&Clip::new(vec![pattern(10, 10, 0.0, false)]).unwrap()).is_err());
    }

    #[test]
    fn duplicate_tail_rescales() {
        let frames: Vec<Frame> = (0..4).map(|i| pattern(12, 12, i as f64 * 0.5, false)).collect();
        let base = ofs(&Clip::new(frames.clone()).unwrap()).unwrap();
        let mut more = frames.clone();
        more.push(frames[3].clone());
        let ext = ofs(&Clip::new(more).unwrap()).unwrap();
        assert!((ext - base * 3.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn alternating_shift() {
        let frames: Vec<Frame> = (0..6).map(|i| pattern(24, 24, (i % 2) as f64, false)).collect();
        let s = ofs(&Clip::new(frames).unwrap()).unwrap();
        assert!((0.4..=1.6).contains(&s), "{s}");
    }

    #[test]
    fn keyframe_rules() {
        let still = Clip::new(vec![pattern(8, 8, 0.0, false); 10]).unwrap();
        assert_eq!(select_keyframes(&still, 8).unwrap(), (0..8).collect::<Vec<_>>());
        let exact = Clip::new((0..8).map(|i| pattern(8, 8, i as f64, false)).collect()).unwrap();
        assert_eq!(select_keyframes(&exact, 8).unwrap(), (0..8).collect::<Vec<_>>());
        assert!(select_keyframes(&exact, 9).is_err());
    }

    #[test]
    fn keyframes_catch_bursts() {
        let (a, b) = (pattern(12, 12, 0.0, false), pattern(12, 12, 1.5, false));
        let frames: Vec<Frame> = (0..20)
            .map(|i| match i {
                0..=2 => a.clone(),
                3..=8 => b.clone(),
                9..=14 => a.clone(),
                _ => b.clone(),
            })
            .collect();
        let k = select_keyframes(&Clip::new(frames).unwrap(), 8).unwrap();
        assert_eq!(k.len(), 8);
        assert!(k.windows(2).all(|p| p[0] < p[1]));
        for burst in [3, 9, 15] {
            assert!(k.contains(&burst), "{k:?}");
        }
    }
}
