use crate::ad::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
            l2: 1e-4,
        }
    }
}

/// One-vs-rest linear SVMs: for each class `c`, minimize
/// `mean_i max(0, 1 − y_ic (w_c·x_i + b_c)) + l2/2 ‖w_c‖²` by full-batch
/// (sub)gradient descent from zero. Prediction is the arg-max score.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// d×K weights.
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl LinearProbe {
    pub fn fit(x: &Tensor, labels: &[usize], cfg: &ProbeConfig) -> Result<Self> {
        let (n, d) = x.dims2()?;
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let distinct = {
            let mut seen = vec![false; k];
            labels.iter().for_each(|&l| seen[l] = true);
            seen.iter().filter(|&&s| s).count()
        };
        if distinct < 2 {
            return Err(Error::Training("linear probe needs at least 2 classes in the train set".into()));
        }
        let xd = x.data();
        let mut w = vec![0.0; d * k];
        let mut b = vec![0.0; k];
        let mut scores = vec![0.0; n * k];
        let mut coef = vec![0.0; n * k];
        for _ in 0..cfg.epochs {
            scores.iter_mut().for_each(|s| *s = 0.0);
            for i in 0..n {
                let row = &xd[i * d..(i + 1) * d];
                let srow = &mut scores[i * k..(i + 1) * k];
                srow.copy_from_slice(&b);
                for (t, &xv) in row.iter().enumerate() {
                    let wrow = &w[t * k..(t + 1) * k];
                    srow.iter_mut().zip(wrow).for_each(|(s, wv)| *s += xv * wv);
                }
            }
            // d loss / d score: −y/n where the margin is violated
            for i in 0..n {
                for c in 0..k {
                    let y = if labels[i] == c { 1.0 } else { -1.0 };
                    coef[i * k + c] = if y * scores[i * k + c] < 1.0 { -y / n as f64 } else { 0.0 };
                }
            }
            let mut gw: Vec<f64> = w.iter().map(|v| cfg.l2 * v).collect();
            let mut gb = vec![0.0; k];
            for i in 0..n {
                let row = &xd[i * d..(i + 1) * d];
                let crow = &coef[i * k..(i + 1) * k];
                gb.iter_mut().zip(crow).for_each(|(g, c)| *g += c);
                for (t, &xv) in row.iter().enumerate() {
                    gw[t * k..(t + 1) * k]
                        .iter_mut()
                        .zip(crow)
                        .for_each(|(g, c)| *g += xv * c);
                }
            }
            w.iter_mut().zip(&gw).for_each(|(v, g)| *v -= cfg.lr * g);
            b.iter_mut().zip(&gb).for_each(|(v, g)| *v -= cfg.lr * g);
        }
        Ok(Self {
            weights: Tensor::new([d, k], w)?,
            bias: b,
        })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let (n, d) = x.dims2()?;
        let (wd, k) = self.weights.dims2()?;
        if wd != d {
            return Err(Error::Dimension(format!("probe expects {wd} features, got {d}")));
        }
        let w = self.weights.data();
        Ok((0..n)
            .map(|i| {
                let row = x.row(i);
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..k {
                    let s = self.bias[c] + row.iter().enumerate().map(|(t, v)| v * w[t * k + c]).sum::<f64>();
                    if s > best.1 {
                        best = (c, s);
                    }
                }
                best.0
            })
            .collect())
    }
}

/// Test accuracy of a probe trained on `(train, train_labels)`.
pub fn linear_probe(
    train: &Tensor,
    train_labels: &[usize],
    test: &Tensor,
    test_labels: &[usize],
    cfg: &ProbeConfig,
) -> Result<f64> {
    let probe = LinearProbe::fit(train, train_labels, cfg)?;
    let pred = probe.predict(test)?;
    if pred.len() != test_labels.len() {
        return Err(Error::Dimension("test labels do not match test rows".into()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred.iter().zip(test_labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / pred.len() as f64)
}
