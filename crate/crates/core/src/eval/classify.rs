use rayon::prelude::*;

use crate::error::{Error, Result};

pub const N_THRESHOLDS: usize = 20;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// `t_i = min + i·(max − min)/21` for `i = 1..=20`.
pub fn neuron_thresholds(min: f64, max: f64) -> [f64; N_THRESHOLDS] {
    let step = (max - min) / (N_THRESHOLDS + 1) as f64;
    std::array::from_fn(|i| min + (i + 1) as f64 * step)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronEval {
    pub neuron_index: usize,
    pub best_threshold: f64,
    /// `+1`: positive when the activation exceeds the threshold.
    /// `−1`: positive when it does not.
    pub polarity: i8,
    pub accuracy: f64,
    pub activation_min: f64,
    pub activation_max: f64,
}

/// Fraction of positive labels.
pub fn class_prior(labels: &[bool]) -> f64 {
    labels.iter().filter(|&&l| l).count() as f64 / labels.len().max(1) as f64
}

/// Best one-threshold classifier over the 20 interior thresholds in both
/// polarities. The threshold `max` is also tried, which under the two
/// polarities gives the all-negative and all-positive classifiers.
pub fn best_neuron_accuracy(activations: &[f64], labels: &[bool]) -> Result<NeuronEval> {
    if activations.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} activations for {} labels",
            activations.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::argument("both classes must be present"));
    }
    if let Some(bad) = activations.iter().find(|a| !a.is_finite()) {
        return Err(Error::NonFinite(format!("activation {bad}")));
    }
    let min = activations.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = activations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = labels.len() as f64;
    let mut best: Option<NeuronEval> = None;
    let candidates = neuron_thresholds(min, max).into_iter().chain(std::iter::once(max));
    for t in candidates {
        let correct = activations
            .iter()
            .zip(labels)
            .filter(|(&a, &l)| (a > t) == l)
            .count() as f64;
        for (polarity, acc) in [(1i8, correct / n), (-1i8, (n - correct) / n)] {
            if best.is_none_or(|b| acc > b.accuracy) {
                best = Some(NeuronEval {
                    neuron_index: 0,
                    best_threshold: t,
                    polarity,
                    accuracy: acc,
                    activation_min: min,
                    activation_max: max,
                });
            }
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
}

/// Per-class counts on `n_bins` equal bins spanning all activations. When
/// every activation is equal they all land in the first bin.
pub fn activation_histogram(activations: &[f64], labels: &[bool], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::argument("n_bins must be at least 1"));
    }
    if activations.len() != labels.len() || activations.is_empty() {
        return Err(Error::argument("activations and labels must be nonempty and aligned"));
    }
    let min = activations.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = activations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| min + i as f64 * width).collect();
    edges[n_bins] = max;
    let mut pos = vec![0; n_bins];
    let mut neg = vec![0; n_bins];
    for (&a, &l) in activations.iter().zip(labels) {
        let bin = if width > 0.0 {
            (((a - min) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        if l {
            pos[bin] += 1;
        } else {
            neg[bin] += 1;
        }
    }
    Ok(Histogram { edges, pos, neg })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by accuracy, highest first; ties keep neuron order.
    pub neurons: Vec<NeuronEval>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub all_negative: f64,
    pub histograms: Vec<(usize, Histogram)>,
    pub linear_baseline: Option<f64>,
}

impl EvalReport {
    pub fn best(&self) -> &NeuronEval {
        &self.neurons[0]
    }
}

/// `activations[example][neuron]`.
pub fn scan_all_neurons(activations: &[Vec<f64>], labels: &[bool]) -> Result<EvalReport> {
    let n_neurons = activations.first().map_or(0, |r| r.len());
    if activations.is_empty() || n_neurons == 0 {
        return Err(Error::argument("activation matrix is empty"));
    }
    if activations.iter().any(|r| r.len() != n_neurons) {
        return Err(Error::argument("ragged activation matrix"));
    }
    let mut neurons = (0..n_neurons)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = activations.iter().map(|r| r[j]).collect();
            best_neuron_accuracy(&col, labels).map(|e| NeuronEval { neuron_index: j, ..e })
        })
        .collect::<Result<Vec<_>>>()?;
    neurons.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(a.neuron_index.cmp(&b.neuron_index)));
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(EvalReport {
        neurons,
        n_pos,
        n_neg: labels.len() - n_pos,
        all_negative: (labels.len() - n_pos) as f64 / labels.len() as f64,
        histograms: Vec::new(),
        linear_baseline: None,
    })
}
