use rayon::prelude::*;

use super::classify::{activation_histogram, scan_all_neurons, EvalReport};
use crate::data::{make_distortions, Whitening};
use crate::error::{Error, Result};
use crate::netcore::{top_features, NetworkParams};
use crate::tensor::Tensor;

/// A trained network plus the preprocessing its inputs need.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub net: &'a NetworkParams,
    pub whitening: Option<&'a Whitening>,
}

impl<'a> Probe<'a> {
    pub fn new(net: &'a NetworkParams) -> Self {
        Self { net, whitening: None }
    }

    pub fn with_whitening(mut self, w: Option<&'a Whitening>) -> Self {
        self.whitening = w;
        self
    }

    pub fn num_neurons(&self) -> usize {
        self.net.config.num_top_neurons()
    }

    /// Top-layer responses to a raw image.
    pub fn features(&self, image: &Tensor) -> Result<Vec<f32>> {
        match self.whitening {
            Some(w) => top_features(&w.apply(image)?, self.net),
            None => top_features(image, self.net),
        }
    }

    pub fn response(&self, image: &Tensor, neuron: usize) -> Result<f64> {
        let n = self.num_neurons();
        if neuron >= n {
            return Err(Error::argument(format!("neuron {neuron} out of range (network has {n})")));
        }
        Ok(self.features(image)?[neuron] as f64)
    }
}

impl<'a> From<&'a NetworkParams> for Probe<'a> {
    fn from(net: &'a NetworkParams) -> Self {
        Probe::new(net)
    }
}

/// `[example][neuron]` top-layer responses, computed in parallel.
pub fn top_activations(probe: &Probe, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| Ok(probe.features(img)?.into_iter().map(f64::from).collect()))
        .collect()
}

/// Scans every top neuron and attaches histograms for the `n_hist` best.
pub fn evaluate_network(probe: &Probe, images: &[Tensor], labels: &[bool], n_bins: usize, n_hist: usize) -> Result<EvalReport> {
    let acts = top_activations(probe, images)?;
    let mut report = scan_all_neurons(&acts, labels)?;
    for ne in report.neurons.iter().take(n_hist) {
        let col: Vec<f64> = acts.iter().map(|r| r[ne.neuron_index]).collect();
        report.histograms.push((ne.neuron_index, activation_histogram(&col, labels, n_bins)?));
    }
    Ok(report)
}

/// Mean response of `neuron`, summed in image order.
pub fn mean_response(probe: &Probe, neuron: usize, images: &[Tensor]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::argument("empty stimulus set"));
    }
    let r: Vec<f64> = images
        .par_iter()
        .map(|img| probe.response(img, neuron))
        .collect::<Result<_>>()?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Scale,
    TranslateX,
    TranslateY,
    RotationFrame,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Scale => "scale",
            Axis::TranslateX => "translate-x",
            Axis::TranslateY => "translate-y",
            Axis::RotationFrame => "rotation-frame",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceCurve {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub means: Vec<f64>,
    pub n_stimuli: usize,
}

/// Mean response of `neuron` while one distortion parameter sweeps
/// `values`; the others stay at identity.
pub fn invariance_curve(probe: &Probe, neuron: usize, stimuli: &[Tensor], axis: Axis, values: &[f64]) -> Result<InvarianceCurve> {
    if stimuli.is_empty() {
        return Err(Error::argument("empty stimulus set"));
    }
    let mut means = Vec::with_capacity(values.len());
    for &v in values {
        let (scales, shifts) = match axis {
            Axis::Scale => (vec![v], vec![(0.0, 0.0)]),
            Axis::TranslateX => (vec![1.0], vec![(v, 0.0)]),
            Axis::TranslateY => (vec![1.0], vec![(0.0, v)]),
            Axis::RotationFrame => {
                return Err(Error::argument("rotation curves come from frame sequences; use rotation_curve"))
            }
        };
        let distorted = stimuli
            .iter()
            .map(|s| make_distortions(s, &scales, &shifts).map(|mut v| v.remove(0)))
            .collect::<Result<Vec<_>>>()?;
        means.push(mean_response(probe, neuron, &distorted)?);
    }
    Ok(InvarianceCurve {
        axis,
        values: values.to_vec(),
        means,
        n_stimuli: stimuli.len(),
    })
}

/// Mean response per frame index across equally long rotation sequences.
pub fn rotation_curve(probe: &Probe, neuron: usize, sequences: &[Vec<Tensor>]) -> Result<InvarianceCurve> {
    let len = sequences.first().map_or(0, |s| s.len());
    if len == 0 || sequences.iter().any(|s| s.len() != len) {
        return Err(Error::argument("rotation sequences must be nonempty and equally long"));
    }
    let means = (0..len)
        .map(|f| {
            let frames: Vec<Tensor> = sequences.iter().map(|s| s[f].clone()).collect();
            mean_response(probe, neuron, &frames)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvarianceCurve {
        axis: Axis::RotationFrame,
        values: (0..len).map(|f| f as f64).collect(),
        means,
        n_stimuli: sequences.len(),
    })
}

/// Indices and responses of the `k` strongest stimuli, highest first; ties
/// keep dataset order.
pub fn top_stimuli(probe: &Probe, neuron: usize, images: &[Tensor], k: usize) -> Result<Vec<(usize, f64)>> {
    if k > images.len() {
        return Err(Error::argument(format!("k = {k} exceeds the {} available images", images.len())));
    }
    let mut scored: Vec<(usize, f64)> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| Ok((i, probe.response(img, neuron)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
