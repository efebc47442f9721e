use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest disagreement between reverse-mode gradients and central
/// differences over every coordinate of every input, relative once either
/// side exceeds 1 and absolute below that:
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1)`.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check_coords(f, inputs, h, |_, len| (0..len).collect())
}

/// Like [`finite_diff_check_many`] but probes at most `per_input` seeded
/// random coordinates of each input.
pub fn finite_diff_check_sampled<F>(
    f: F,
    inputs: &[Tensor],
    h: f64,
    per_input: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Vec<usize>> = inputs
        .iter()
        .map(|t| {
            let mut idx = sample(&mut rng, t.len(), per_input.min(t.len())).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    check_coords(f, inputs, h, |which, _| picks[which].clone())
}

fn check_coords<F, C>(f: F, inputs: &[Tensor], h: f64, coords: C) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    C: Fn(usize, usize) -> Vec<usize>,
{
    if h.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Config("finite-difference step must be > 0".into()));
    }
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.param(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_scalar() {
        return Err(Error::Autodiff("gradient check needs a scalar function".into()));
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = probe
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut probe = inputs.to_vec();
    let mut worst = 0.0f64;
    for (which, grad) in analytic.iter().enumerate() {
        for j in coords(which, grad.len()) {
            let orig = probe[which].data()[j];
            probe[which].data_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[which].data_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[which].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_diff_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}
