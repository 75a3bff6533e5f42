use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Independent per-class sigmoids over a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticHead {
    /// `[n_classes, feature_dim]`.
    pub weights: Tensor,
    /// `[n_classes]`.
    pub biases: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 500,
            minibatch_size: 16,
            seed: 0,
        }
    }
}

/// Gradients of the summed log-loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Per example, gradient with respect to the features.
    pub features: Vec<Vec<f64>>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticHead {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[n_classes, dim]),
            biases: Tensor::zeros(&[n_classes]),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let w = self.weights.data();
        (0..self.n_classes())
            .map(|k| {
                self.biases.data()[k] as f64
                    + w[k * d..(k + 1) * d].iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.scores(x).into_iter().map(sigmoid).collect()
    }

    /// Argmax of the class scores; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for (k, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = k;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let hits = features.iter().zip(labels).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / labels.len().max(1) as f64
    }

    pub fn ensure_finite(&self) -> Result<()> {
        self.weights.ensure_finite("head weights")?;
        self.biases.ensure_finite("head biases")
    }

    pub(crate) fn step(&mut self, g: &HeadGrad, lr: f64) -> Result<()> {
        for (w, gw) in self.weights.data_mut().iter_mut().zip(&g.weights) {
            *w = (*w as f64 - lr * gw) as f32;
        }
        for (b, gb) in self.biases.data_mut().iter_mut().zip(&g.biases) {
            *b = (*b as f64 - lr * gb) as f32;
        }
        self.ensure_finite()
    }
}

/// Sum over examples and classes of the binary log-loss of class `k`
/// against the indicator `label == k`.
pub fn head_loss_and_grad(head: &LogisticHead, features: &[Vec<f64>], labels: &[usize]) -> Result<HeadGrad> {
    let (k, d) = (head.n_classes(), head.dim());
    if features.len() != labels.len() {
        return Err(Error::argument("features and labels differ in length"));
    }
    let mut g = HeadGrad {
        loss: 0.0,
        weights: vec![0.0; k * d],
        biases: vec![0.0; k],
        features: Vec::with_capacity(features.len()),
    };
    let w = head.weights.data();
    for (x, &y) in features.iter().zip(labels) {
        if x.len() != d {
            return Err(Error::geometry(format!("feature length {} != head dimension {d}", x.len())));
        }
        if y >= k {
            return Err(Error::argument(format!("label {y} outside [0, {k})")));
        }
        let z = head.scores(x);
        let mut gx = vec![0.0; d];
        for c in 0..k {
            let t = if c == y { 1.0 } else { 0.0 };
            g.loss += softplus(z[c]) - t * z[c];
            let dz = sigmoid(z[c]) - t;
            g.biases[c] += dz;
            for j in 0..d {
                g.weights[c * d + j] += dz * x[j];
                gx[j] += dz * w[c * d + j] as f64;
            }
        }
        g.features.push(gx);
    }
    Ok(g)
}

pub(crate) fn check_classes(labels: &[usize], n_classes: usize) -> Result<()> {
    let mut seen = vec![false; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(Error::argument(format!("label {y} outside [0, {n_classes})")));
        }
        seen[y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::argument("training data must contain at least two classes"));
    }
    Ok(())
}

/// Minibatch SGD on the summed log-loss from a zero-initialized head.
pub fn train_head(features: &[Vec<f64>], labels: &[usize], n_classes: usize, cfg: &HeadConfig) -> Result<LogisticHead> {
    if features.is_empty() {
        return Err(Error::argument("no training features"));
    }
    check_classes(labels, n_classes)?;
    let mut head = LogisticHead::zeros(n_classes, features[0].len());
    let mut rng = substream(cfg.seed, "head.minibatch");
    let mut order: Vec<usize> = (0..features.len()).collect();
    let batch = cfg.minibatch_size.clamp(1, features.len());
    let mut cursor = order.len();
    for _ in 0..cfg.steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| features[i].clone()).collect();
        let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let g = head_loss_and_grad(&head, &xs, &ys)?;
        head.step(&g, cfg.learning_rate)?;
    }
    Ok(head)
}
