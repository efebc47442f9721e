use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ad::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when an iteration lowers inertia by less than `tol` relative.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    /// k×d cluster means.
    pub centroids: Tensor,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run.
    pub trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: the first center uniformly, then each next center
/// with probability proportional to the squared distance to the nearest
/// chosen one (uniformly if every point coincides with a center).
pub fn kmeans_pp_init(data: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let (n, _) = data.dims2()?;
    if k == 0 || n < k {
        return Err(Error::Dimension(format!("k-means needs 1 ≤ k ≤ N, got k={k}, N={n}")));
    }
    let mut centers = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), &c));
        }
        centers.push(c);
    }
    Ok(centers)
}

fn assign(data: &Tensor, centers: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        let row = data.row(i);
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for (j, c) in centers.iter().enumerate() {
            let d = sq_dist(row, c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        *slot = best;
        inertia += best_d;
    }
    inertia
}

/// Lloyd iterations from `centers`. Each empty cluster is reseeded at the
/// point farthest from its current center (distinct points for several
/// empty clusters).
pub fn lloyd(data: &Tensor, mut centers: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> Result<KMeansResult> {
    let (n, d) = data.dims2()?;
    let k = centers.len();
    let mut labels = vec![0; n];
    let mut inertia = assign(data, &centers, &mut labels);
    let mut trace = vec![inertia];
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            sums[l].iter_mut().zip(data.row(i)).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let mut taken = Vec::new();
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..n)
                .filter(|i| !taken.contains(i))
                .max_by(|&a, &b| {
                    let da = sq_dist(data.row(a), &centers[labels[a]]);
                    let db = sq_dist(data.row(b), &centers[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("n ≥ k");
            taken.push(far);
            centers[j] = data.row(far).to_vec();
        }
        let prev = inertia;
        let before = labels.clone();
        inertia = assign(data, &centers, &mut labels);
        trace.push(inertia);
        if labels == before || prev - inertia <= tol * prev {
            break;
        }
    }
    let flat: Vec<f64> = centers.concat();
    Ok(KMeansResult {
        assignments: labels,
        centroids: Tensor::new([k, d], flat)?,
        inertia,
        trace,
    })
}

/// Best of `restarts` k-means++ / Lloyd runs by inertia (first on ties).
pub fn kmeans(data: &Tensor, k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let (n, _) = data.dims2()?;
    if k == 0 || n < k {
        return Err(Error::Dimension(format!("k-means needs 1 ≤ k ≤ N, got k={k}, N={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = kmeans_pp_init(data, k, &mut rng)?;
        let run = lloyd(data, init, cfg.max_iter, cfg.tol)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Tensor {
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)] {
            for i in 0..5 {
                let t = i as f64;
                rows.extend([cx + 0.1 * t.sin(), cy + 0.1 * t.cos()]);
            }
        }
        Tensor::new([15, 2], rows).unwrap()
    }

    #[test]
    fn k_one_is_the_mean() {
        let x = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 2.0], &[5.0, 8.0]]).unwrap();
        let r = kmeans(&x, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(r.centroids.data(), &[3.0, 4.0]);
        // per-dimension variance (8/3, 8) summed, times N
        assert!((r.inertia - (8.0 + 24.0)).abs() < 1e-12);
    }

    #[test]
    fn separated_blobs() {
        let r = kmeans(&blobs(), 3, &KMeansConfig::default()).unwrap();
        for b in 0..3 {
            let ids: Vec<usize> = r.assignments[b * 5..b * 5 + 5].to_vec();
            assert!(ids.iter().all(|&i| i == ids[0]));
        }
        let mut firsts = [r.assignments[0], r.assignments[5], r.assignments[10]];
        firsts.sort_unstable();
        assert_eq!(firsts, [0, 1, 2]);
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::new([50, 4], data).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = kmeans_pp_init(&x, 6, &mut rng).unwrap();
            let r = lloyd(&x, init, 300, 0.0).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let x = Tensor::from_rows(&[&[0.0], &[1.0], &[10.0]]).unwrap();
        // the second center starts far from every point and empties
        let r = lloyd(&x, vec![vec![0.5], vec![1000.0]], 10, 0.0).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1]);
        assert_eq!(r.centroids.data(), &[0.5, 10.0]);
    }

    #[test]
    fn eight_points_reach_exhaustive_optimum() {
        let x = Tensor::from_rows(&[
            &[0.0, 0.1],
            &[0.3, -0.2],
            &[1.1, 0.9],
            &[0.2, 0.4],
            &[2.0, 2.2],
            &[1.8, 1.7],
            &[2.4, 1.9],
            &[1.2, 1.4],
        ])
        .unwrap();
        let mut best = f64::INFINITY;
        for mask in 1u32..255 {
            let mut cost = 0.0;
            for side in [true, false] {
                let idx: Vec<usize> = (0..8).filter(|&i| (mask >> i & 1 == 1) == side).collect();
                let mean: Vec<f64> = (0..2)
                    .map(|d| idx.iter().map(|&i| x.at2(i, d)).sum::<f64>() / idx.len() as f64)
                    .collect();
                cost += idx.iter().map(|&i| sq_dist(x.row(i), &mean)).sum::<f64>();
            }
            best = best.min(cost);
        }
        let r = kmeans(&x, 2, &KMeansConfig { seed: 7, ..KMeansConfig::default() }).unwrap();
        assert!((r.inertia - best).abs() < 1e-12, "{} vs {best}", r.inertia);
    }

    #[test]
    fn too_few_points() {
        let x = Tensor::from_rows(&[&[0.0]]).unwrap();
        assert!(kmeans(&x, 2, &KMeansConfig::default()).is_err());
    }
}
