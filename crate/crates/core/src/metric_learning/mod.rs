//! Triplet-loss metric learning: loss, multi-similarity mining, Adam and the
//! training loop.

mod adam;
mod train;

use serde::{Deserialize, Serialize};

use crate::ad::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{train, train_region, EpochRecord, LabelMode, TrainConfig, TrainHistory};

/// Anchor/positive/negative row indices into an embedding batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletBatch {
    pub anchor: Vec<usize>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor.is_empty()
    }

    pub fn push(&mut self, a: usize, p: usize, n: usize) {
        self.anchor.push(a);
        self.positive.push(p);
        self.negative.push(n);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).map(|i| (self.anchor[i], self.positive[i], self.negative[i]))
    }

    /// Checks `label(a) = label(p) ≠ label(n)` and `a ≠ p` for every triple.
    pub fn validate(&self, labels: &[usize]) -> Result<()> {
        let n = labels.len();
        for (a, p, q) in self.iter() {
            if a >= n || p >= n || q >= n {
                return Err(Error::Contract(format!("triple ({a}, {p}, {q}) out of range for {n} rows")));
            }
            if a == p || labels[a] != labels[p] || labels[a] == labels[q] {
                return Err(Error::Contract(format!("invalid triple ({a}, {p}, {q})")));
            }
        }
        Ok(())
    }
}

/// Mean hinge triplet loss over `triples` on the rows of `emb`:
/// `max(0, ‖a−p‖² − ‖a−n‖² + margin)`. An empty set gives a constant 0.
pub fn triplet_loss(tape: &mut Tape, emb: Var, triples: &TripletBatch, margin: f64) -> Result<Var> {
    if triples.is_empty() {
        log::warn!("triplet loss over an empty triple set is 0");
        return tape.constant(Tensor::scalar(0.0));
    }
    let a = tape.gather_rows(emb, &triples.anchor)?;
    let p = tape.gather_rows(emb, &triples.positive)?;
    let n = tape.gather_rows(emb, &triples.negative)?;
    let dp = tape.sub(a, p)?;
    let dp = tape.mul(dp, dp)?;
    let dp = tape.sum_rows(dp)?;
    let dn = tape.sub(a, n)?;
    let dn = tape.mul(dn, dn)?;
    let dn = tape.sum_rows(dn)?;
    let gap = tape.sub(dp, dn)?;
    let m = tape.constant(Tensor::scalar(margin))?;
    let gap = tape.add(gap, m)?;
    let hinge = tape.leaky_relu(gap, 0.0)?;
    tape.mean(hinge)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multi-similarity mining on unit-norm rows (cosine = dot product).
///
/// For anchor `a`, positives with `s(a,p) < max_n s(a,n) + ε` and negatives
/// with `s(a,n) > min_p s(a,p) − ε` are hard; their cross product is ranked
/// by `s(a,n) − s(a,p)` (largest first, ties by index) and cut at
/// `max_per_anchor`.
pub fn mine_multisimilarity(
    emb: &Tensor,
    labels: &[usize],
    epsilon: f64,
    max_per_anchor: usize,
) -> Result<TripletBatch> {
    let (n, _) = emb.dims2()?;
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} embeddings",
            labels.len()
        )));
    }
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = dot(emb.row(i), emb.row(j));
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let mut out = TripletBatch::default();
    for a in 0..n {
        let s = &sim[a * n..(a + 1) * n];
        let pos: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let neg: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let max_neg = neg.iter().map(|&j| s[j]).fold(f64::NEG_INFINITY, f64::max);
        let min_pos = pos.iter().map(|&j| s[j]).fold(f64::INFINITY, f64::min);
        let hard_pos: Vec<usize> = pos.into_iter().filter(|&p| s[p] < max_neg + epsilon).collect();
        let hard_neg: Vec<usize> = neg.into_iter().filter(|&q| s[q] > min_pos - epsilon).collect();
        let mut cands: Vec<(f64, usize, usize)> = hard_pos
            .iter()
            .flat_map(|&p| hard_neg.iter().map(move |&q| (s[q] - s[p], p, q)))
            .collect();
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        for &(_, p, q) in cands.iter().take(max_per_anchor) {
            out.push(a, p, q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for row in data.chunks_mut(d) {
            let norm = dot(row, row).sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Tensor::new([n, d], data).unwrap()
    }

    fn loss_value(emb: Tensor, triples: &TripletBatch, margin: f64) -> f64 {
        let mut tape = Tape::new();
        let e = tape.constant(emb).unwrap();
        let l = triplet_loss(&mut tape, e, triples, margin).unwrap();
        tape.value(l).data()[0]
    }

    fn one(a: usize, p: usize, n: usize) -> TripletBatch {
        let mut t = TripletBatch::default();
        t.push(a, p, n);
        t
    }

    #[test]
    fn closed_forms() {
        // a = p, ‖a − n‖² = 1
        let e = Tensor::from_rows(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(loss_value(e, &one(0, 1, 2), 0.2), 0.0);
        // a = n, ‖a − p‖² = 0.5
        let e = Tensor::from_rows(&[&[0.0, 0.0], &[0.5, 0.5], &[0.0, 0.0]]).unwrap();
        assert!((loss_value(e, &one(0, 1, 2), 0.2) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_reference() {
        let e = unit_rows(10, 16, 1);
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let t = mine_multisimilarity(&e, &labels, 10.0, 1000).unwrap();
        assert!(!t.is_empty());
        let d2 = |i: usize, j: usize| -> f64 {
            e.row(i).iter().zip(e.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let want: f64 = t
            .iter()
            .map(|(a, p, n)| (d2(a, p) - d2(a, n) + 0.2).max(0.0))
            .sum::<f64>()
            / t.len() as f64;
        assert!((loss_value(e, &t, 0.2) - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_on_unit_vectors() {
        let e = unit_rows(6, 5, 2);
        let labels = [0, 0, 1, 1, 2, 2];
        let t = mine_multisimilarity(&e, &labels, 10.0, 1000).unwrap();
        // a large margin keeps every hinge away from its kink
        let err = finite_diff_check(|tape, x| triplet_loss(tape, x, &t, 5.0), &e, 1e-6).unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn separated_classes_mine_nothing() {
        let e = Tensor::from_rows(&[&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[-1.0, 0.0]]).unwrap();
        let t = mine_multisimilarity(&e, &[0, 0, 1, 1], 0.1, 20).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn intruding_negative_is_mined() {
        let s = 0.5f64.sqrt();
        // anchor 0 and positive 1 are 45° apart, negative 2 sits on the anchor
        let e = Tensor::from_rows(&[&[1.0, 0.0], &[s, s], &[1.0, 0.0], &[-1.0, 0.0]]).unwrap();
        let t = mine_multisimilarity(&e, &[0, 0, 1, 1], 0.1, 20).unwrap();
        assert!(t.iter().any(|x| x == (0, 1, 2)));
        assert!(!t.iter().any(|x| x == (0, 1, 3)));
        t.validate(&[0, 0, 1, 1]).unwrap();
    }

    /// Brute force of the mining rule over all (a, p, n).
    fn brute(e: &Tensor, labels: &[usize], eps: f64) -> Vec<(usize, usize, usize)> {
        let n = labels.len();
        let s = |i: usize, j: usize| dot(e.row(i), e.row(j));
        let mut out = Vec::new();
        for a in 0..n {
            for p in 0..n {
                for q in 0..n {
                    if p == a || labels[p] != labels[a] || labels[q] == labels[a] {
                        continue;
                    }
                    let max_neg = (0..n)
                        .filter(|&j| labels[j] != labels[a])
                        .map(|j| s(a, j))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let min_pos = (0..n)
                        .filter(|&j| j != a && labels[j] == labels[a])
                        .map(|j| s(a, j))
                        .fold(f64::INFINITY, f64::min);
                    if s(a, p) < max_neg + eps && s(a, q) > min_pos - eps {
                        out.push((a, p, q));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn eight_point_instance_matches_brute_force() {
        let e = unit_rows(8, 3, 4);
        let labels = [0, 1, 0, 1, 0, 1, 0, 1];
        let mut got: Vec<_> = mine_multisimilarity(&e, &labels, 0.1, usize::MAX).unwrap().iter().collect();
        got.sort_unstable();
        assert_eq!(got, brute(&e, &labels, 0.1));
    }

    #[test]
    fn cap_keeps_hardest() {
        let e = unit_rows(12, 3, 5);
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let all = mine_multisimilarity(&e, &labels, 2.0, usize::MAX).unwrap();
        let capped = mine_multisimilarity(&e, &labels, 2.0, 3).unwrap();
        for a in 0..12 {
            let hard = |t: &TripletBatch| -> Vec<f64> {
                t.iter()
                    .filter(|x| x.0 == a)
                    .map(|(a, p, n)| dot(e.row(a), e.row(n)) - dot(e.row(a), e.row(p)))
                    .collect()
            };
            let (full, cut) = (hard(&all), hard(&capped));
            assert_eq!(cut.len(), 3.min(full.len()));
            let mut sorted = full.clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            assert_eq!(cut, sorted[..cut.len()]);
        }
    }

    #[test]
    fn loss_is_rotation_invariant() {
        let e = unit_rows(6, 2, 6);
        let labels = [0, 0, 0, 1, 1, 1];
        let t = mine_multisimilarity(&e, &labels, 10.0, 100).unwrap();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rotated: Vec<f64> = (0..6)
            .flat_map(|i| {
                let r = e.row(i);
                [c * r[0] - s * r[1], s * r[0] + c * r[1]]
            })
            .collect();
        let r = Tensor::new([6, 2], rotated).unwrap();
        assert!((loss_value(e, &t, 0.2) - loss_value(r, &t, 0.2)).abs() < 1e-12);
    }

    #[test]
    fn empty_triples_give_zero() {
        assert_eq!(loss_value(unit_rows(2, 2, 0), &TripletBatch::default(), 0.2), 0.0);
    }

    #[test]
    fn single_class_mines_nothing() {
        let t = mine_multisimilarity(&unit_rows(4, 3, 7), &[2, 2, 2, 2], 0.1, 20).unwrap();
        assert!(t.is_empty());
    }
}
