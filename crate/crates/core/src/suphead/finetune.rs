use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::head::{check_classes, head_loss_and_grad, HeadGrad, LogisticHead};
use crate::error::{Error, Result};
use crate::netcore::{network_backward, top_features, NetworkParams};
use crate::rng::substream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// 0 means full batch.
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 100,
            minibatch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FineTuneGrads {
    pub loss: f64,
    /// Per stage, gradient of the loss with respect to the encoding filters.
    pub w1: Vec<Vec<f64>>,
    pub head: HeadGrad,
}

fn features(net: &NetworkParams, images: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|x| Ok(top_features(x, net)?.into_iter().map(f64::from).collect()))
        .collect()
}

/// Summed classification loss and its gradient with respect to the head and
/// every stage's encoding filters. Decoding weights, pooling and LCN
/// windows are not on the supervised path.
pub fn fine_tune_gradient(net: &NetworkParams, head: &LogisticHead, images: &[Tensor], labels: &[usize]) -> Result<FineTuneGrads> {
    let feats = features(net, images)?;
    let hg = head_loss_and_grad(head, &feats, labels)?;
    let per_example = images
        .par_iter()
        .zip(&hg.features)
        .map(|(x, gx)| network_backward(x, net, gx))
        .collect::<Result<Vec<_>>>()?;
    let mut w1: Vec<Vec<f64>> = net.stages.iter().map(|s| vec![0.0; s.w1_encode.len()]).collect();
    for b in &per_example {
        for (acc, g) in w1.iter_mut().zip(&b.w1) {
            for (a, &v) in acc.iter_mut().zip(g.data()) {
                *a += v as f64;
            }
        }
    }
    Ok(FineTuneGrads { loss: hg.loss, w1, head: hg })
}

/// Joint SGD on the head and all encoding filters. Returns the tuned
/// network, the tuned head, and the minibatch loss before each step.
pub fn fine_tune(
    net: &NetworkParams,
    head: &LogisticHead,
    images: &[Tensor],
    labels: &[usize],
    cfg: &FineTuneConfig,
) -> Result<(NetworkParams, LogisticHead, Vec<f64>)> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::argument("fine-tuning needs aligned, nonempty images and labels"));
    }
    check_classes(labels, head.n_classes())?;
    let mut net = net.clone();
    let mut head = head.clone();
    let batch = if cfg.minibatch_size == 0 { images.len() } else { cfg.minibatch_size.min(images.len()) };
    let mut rng = substream(cfg.seed, "finetune.minibatch");
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx: Vec<usize> = if batch == images.len() {
            (0..images.len()).collect()
        } else {
            let mut idx = Vec::with_capacity(batch);
            while idx.len() < batch {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            idx
        };
        let xs: Vec<Tensor> = idx.iter().map(|&i| images[i].clone()).collect();
        let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let g = fine_tune_gradient(&net, &head, &xs, &ys)?;
        losses.push(g.loss);
        for (stage, gw) in net.stages.iter_mut().zip(&g.w1) {
            for (w, &d) in stage.w1_encode.data_mut().iter_mut().zip(gw) {
                *w = (*w as f64 - cfg.learning_rate * d) as f32;
            }
            stage.w1_encode.ensure_finite("fine-tuned w1")?;
        }
        head.step(&g.head, cfg.learning_rate)?;
    }
    Ok((net, head, losses))
}
