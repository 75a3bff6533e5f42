use rand::seq::SliceRandom;

use super::{Dataset, Item};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Share of faces in the reference evaluation set (13,026 of 37,000).
pub const FACE_FRACTION: f64 = 13_026.0 / 37_000.0;

fn n_positive(ratio: f64, total: usize) -> usize {
    (ratio * total as f64 + 1e-9).floor() as usize
}

/// Largest total that both pools can supply at `ratio`.
pub fn max_eval_total(n_pos: usize, n_neg: usize, ratio: f64) -> usize {
    let mut best = 0;
    for total in 1..=n_pos + n_neg {
        let p = n_positive(ratio, total);
        if p <= n_pos && total - p <= n_neg {
            best = total;
        }
    }
    best
}

fn pick(pool: &Dataset, k: usize, seed: u64, purpose: &str, label: u32) -> Vec<Item> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut substream(seed, purpose));
    idx.truncate(k);
    idx.sort_unstable();
    idx.into_iter()
        .map(|i| Item {
            label: Some(label),
            ..pool.items[i].clone()
        })
        .collect()
}

/// Seeded subsample with `floor(ratio · total)` positives (label 1) followed
/// by the remaining negatives (label 0).
pub fn assemble_eval_set(
    positives: &Dataset,
    negatives: &Dataset,
    ratio_pos: f64,
    total: usize,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&ratio_pos) {
        return Err(Error::argument(format!("ratio {ratio_pos} outside [0, 1]")));
    }
    if total == 0 {
        return Err(Error::argument("evaluation set size must be positive"));
    }
    let n_pos = n_positive(ratio_pos, total);
    let n_neg = total - n_pos;
    if n_pos > positives.len() || n_neg > negatives.len() {
        return Err(Error::data(format!(
            "insufficient pool: need {n_pos} positives and {n_neg} negatives, have {} and {}",
            positives.len(),
            negatives.len()
        )));
    }
    let mut items = pick(positives, n_pos, seed, "assemble.pos", 1);
    items.extend(pick(negatives, n_neg, seed, "assemble.neg", 0));
    let ds = Dataset { items };
    ds.validate()?;
    Ok(ds)
}
