//! Central-difference verification of tape gradients.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// An ordered collection of named tensors. Insertion order is preserved so
/// iteration (and everything derived from it) is deterministic.
#[derive(Clone, Debug, Default)]
pub struct NamedTensors {
    entries: Vec<(String, Tensor)>,
}

impl NamedTensors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::Usage(format!("duplicate tensor name {name:?}")));
        }
        self.entries.push((name.to_string(), t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Compare tape gradients of `f` against central finite differences.
///
/// `f` builds a scalar loss on the given tape and must register every entry
/// of `params` it reads via [`Tape::param`] under the same name. Parameters
/// with at most `max_coords` entries are checked exhaustively; larger ones
/// on a seeded random subset of at least 32 coordinates. Returns the worst
/// relative error, with denominators floored at 1e-8 so near-zero gradients
/// do not blow the ratio up.
pub fn grad_check<F>(
    f: F,
    params: &NamedTensors,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &NamedTensors) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::Usage(format!("step must be positive, got {h}")));
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let grads = tape.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (name, t) in params.entries() {
        let analytic = grads.get(name).ok_or_else(|| {
            Error::Usage(format!("parameter {name:?} was never registered on the tape"))
        })?;
        let n = t.numel();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let k = max_coords.max(32).min(n);
            let mut picks = rand::seq::index::sample(&mut rng, n, k).into_vec();
            picks.sort_unstable();
            picks
        };
        for i in coords {
            let fd = {
                let mut plus = params.clone();
                plus.get_mut(name).unwrap().data_mut()[i] += h;
                let mut tp = Tape::new();
                let lp = f(&mut tp, &plus)?;
                let vp = tp.value(lp).data()[0];
                let mut minus = params.clone();
                minus.get_mut(name).unwrap().data_mut()[i] -= h;
                let mut tm = Tape::new();
                let lm = f(&mut tm, &minus)?;
                let vm = tm.value(lm).data()[0];
                (vp - vm) / (2.0 * h)
            };
            let a = analytic.data()[i];
            let denom = a.abs().max(fd.abs()).max(1e-8);
            worst = worst.max((a - fd).abs() / denom);
        }
    }
    Ok(worst)
}
