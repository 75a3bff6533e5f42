use rand::Rng;
use rayon::prelude::*;

use super::classify::{best_neuron_accuracy, NeuronEval};
use crate::data::interp::resize;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;

pub const DEFAULT_BASELINE_FILTERS: usize = 1_000;

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub accuracy: f64,
    /// Index into the sampled filter list.
    pub filter_index: usize,
    pub filter: Tensor,
    pub eval: NeuronEval,
}

/// A random square crop of a random pool image, at least half the shorter
/// side, resized to `shape`.
pub fn sample_patch(pool: &[Tensor], shape: &[usize], rng: &mut impl Rng) -> Result<Tensor> {
    let src = &pool[rng.gen_range(0..pool.len())];
    let s = src.shape();
    let side_max = s[0].min(s[1]);
    let side = rng.gen_range(side_max.div_ceil(2)..=side_max);
    let y0 = rng.gen_range(0..=s[0] - side);
    let x0 = rng.gen_range(0..=s[1] - side);
    let ch = s[2];
    let mut crop = Vec::with_capacity(side * side * ch);
    for y in y0..y0 + side {
        let row = (y * s[1] + x0) * ch;
        crop.extend_from_slice(&src.data()[row..row + side * ch]);
    }
    let crop = Tensor::new(vec![side, side, ch], crop)?;
    resize(&crop, shape[0], shape[1])
}

/// Cosine-similarity template matching with `n_filters` patches drawn from
/// `pool` (with replacement); the best filter under the threshold protocol
/// wins.
pub fn linear_filter_baseline(pool: &[Tensor], eval: &[Tensor], labels: &[bool], n_filters: usize, seed: u64) -> Result<BaselineResult> {
    if pool.is_empty() || eval.is_empty() || n_filters == 0 {
        return Err(Error::argument("baseline needs a pool, an evaluation set and at least one filter"));
    }
    let shape = eval[0].shape().to_vec();
    if shape.len() != 3 || pool.iter().any(|p| p.rank() != 3 || p.shape()[2] != shape[2]) {
        return Err(Error::geometry("pool and evaluation images must be HWC with equal channels"));
    }
    let mut rng = substream(seed, "baseline.patches");
    let filters = (0..n_filters)
        .map(|_| sample_patch(pool, &shape, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    filters_baseline(&filters, eval, labels)
}

/// The protocol on an explicit filter list.
pub fn filters_baseline(filters: &[Tensor], eval: &[Tensor], labels: &[bool]) -> Result<BaselineResult> {
    let scored = filters
        .par_iter()
        .map(|f| {
            let sims: Vec<f64> = eval.iter().map(|x| cosine_similarity(f, x)).collect();
            best_neuron_accuracy(&sims, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let (idx, best) = scored
        .iter()
        .enumerate()
        .fold(None::<(usize, &NeuronEval)>, |acc, (i, e)| match acc {
            Some((_, b)) if b.accuracy >= e.accuracy => acc,
            _ => Some((i, e)),
        })
        .expect("nonempty filter list");
    Ok(BaselineResult {
        accuracy: best.accuracy,
        filter_index: idx,
        filter: filters[idx].clone(),
        eval: NeuronEval { neuron_index: idx, ..*best },
    })
}
