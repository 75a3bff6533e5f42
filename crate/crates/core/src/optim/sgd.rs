use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netcore::{joint_objective_and_gradient, NetworkParams, StageGrads};
use crate::rng::substream;
use crate::tensor::Tensor;

pub const DEFAULT_MINIBATCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub minibatch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            minibatch_size: DEFAULT_MINIBATCH,
            max_steps: 1000,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be a nonnegative real"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size must be positive"));
        }
        if self.minibatch_size > dataset_len {
            return Err(Error::config(format!(
                "minibatch_size {} exceeds dataset size {dataset_len}",
                self.minibatch_size
            )));
        }
        Ok(())
    }
}

/// One row of the metrics trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Minibatch objective at the parameters the step started from.
    pub objective: f64,
    pub wall_ms: u64,
}

/// Writes `step,objective,wall_ms` rows as they are produced.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "step,objective,wall_ms")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &TraceRow) -> Result<()> {
        writeln!(self.out, "{},{},{}", row.step, row.objective, row.wall_ms)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Seeded epoch-wise shuffling over `len` examples.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl MinibatchSampler {
    /// Sampler for replica `replica`; the local trainer uses replica 0.
    pub fn new(len: usize, batch: usize, seed: u64, replica: usize) -> Self {
        let rng = substream(seed, &format!("minibatch.{replica}"));
        Self {
            rng,
            order: (0..len).collect(),
            cursor: len,
            batch,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// `W ← W − lr·∇W` for the encoding and decoding weights. Pooling and LCN
/// windows are never touched.
pub fn sgd_step(params: &mut NetworkParams, grads: &[StageGrads], lr: f32) -> Result<()> {
    if grads.len() != params.num_stages() {
        return Err(Error::geometry(format!(
            "{} gradient sets for {} stages",
            grads.len(),
            params.num_stages()
        )));
    }
    for (s, g) in params.stages.iter().zip(grads) {
        g.w1.ensure_shape(s.w1_encode.shape(), "w1 gradient")?;
        g.w2.ensure_shape(s.w2_decode.shape(), "w2 gradient")?;
        g.w1.ensure_finite("w1 gradient")?;
        g.w2.ensure_finite("w2 gradient")?;
    }
    for (s, g) in params.stages.iter_mut().zip(grads) {
        apply_update(&mut s.w1_encode, &g.w1, lr);
        apply_update(&mut s.w2_decode, &g.w2, lr);
    }
    Ok(())
}

/// The single update rule shared by the local trainer and the parameter
/// shards, so both paths round identically.
pub(crate) fn apply_update(value: &mut Tensor, grad: &Tensor, lr: f32) {
    for (w, &g) in value.data_mut().iter_mut().zip(grad.data()) {
        *w -= lr * g;
    }
}

pub(crate) fn gather(dataset: &[Tensor], idx: &[usize]) -> Vec<Tensor> {
    idx.iter().map(|&i| dataset[i].clone()).collect()
}

/// Synchronous single-process reference trainer.
pub fn train_local(dataset: &[Tensor], net: NetworkParams, cfg: &SgdConfig) -> Result<(NetworkParams, Vec<TraceRow>)> {
    let mut trace = Vec::with_capacity(cfg.max_steps);
    let net = train_local_with(dataset, net, cfg, |row| {
        trace.push(*row);
        Ok(())
    })?;
    Ok((net, trace))
}

/// Like [`train_local`], handing each trace row to `observe` as soon as the
/// step finishes.
pub fn train_local_with(
    dataset: &[Tensor],
    mut net: NetworkParams,
    cfg: &SgdConfig,
    mut observe: impl FnMut(&TraceRow) -> Result<()>,
) -> Result<NetworkParams> {
    if dataset.is_empty() {
        return Err(Error::argument("empty dataset"));
    }
    cfg.validate(dataset.len())?;
    let mut sampler = MinibatchSampler::new(dataset.len(), cfg.minibatch_size, cfg.seed, 0);
    let start = Instant::now();
    for step in 0..cfg.max_steps {
        let batch = gather(dataset, &sampler.next_batch());
        let eval = joint_objective_and_gradient(&batch, &net)?;
        sgd_step(&mut net, &eval.grads, cfg.learning_rate)?;
        let row = TraceRow {
            step,
            objective: eval.total,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if step % 100 == 0 {
            log::debug!("step {step}: objective {:.6}", eval.total);
        }
        observe(&row)?;
    }
    Ok(net)
}
