//! Reconstruction-TICA objective and its gradients.
//!
//! For one stage with encoder `W1`, decoder `W2` and fixed pooling `H`:
//!
//! ```text
//! J = Σ_i ‖W2 W1ᵀ x_i − x_i‖² + λ Σ_i Σ_j sqrt(ε + H_j · (W1ᵀ x_i)²)
//! ```
//!
//! Decoding runs through the transposed local connectivity: every simple
//! unit writes `W2[u] · z_u` back onto its own receptive field and
//! overlapping contributions add up.

use rayon::prelude::*;

use super::config::StageConfig;
use super::forward::{encode, network_forward, pool_energy};
use super::params::{NetworkParams, StageGrads, StageParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Examples per deterministic reduction chunk. Chunks may run on any thread;
/// partial sums are always combined in chunk order.
const CHUNK: usize = 8;

struct Partial {
    objective: f64,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl Partial {
    fn new(len: usize, with_grad: bool) -> Self {
        let n = if with_grad { len } else { 0 };
        Self {
            objective: 0.0,
            w1: vec![0.0; n],
            w2: vec![0.0; n],
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.objective += other.objective;
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += b;
        }
        self
    }
}

/// Visits each `(filter offset, input index)` pair in unit `u`'s receptive field.
#[inline]
fn for_patch(cfg: &StageConfig, u: usize, mut f: impl FnMut(usize, usize)) {
    let sw = cfg.simple_width();
    let k = cfg.num_maps;
    let loc = u / k;
    let (y0, x0) = ((loc / sw) * cfg.stride, (loc % sw) * cfg.stride);
    let (rf, ic, iw) = (cfg.rf_size, cfg.input_maps, cfg.input_width);
    for dy in 0..rf {
        let row = ((y0 + dy) * iw + x0) * ic;
        for j in 0..rf * ic {
            f(dy * rf * ic + j, row + j);
        }
    }
}

fn accumulate_example(x: &[f32], cfg: &StageConfig, params: &StageParams, acc: &mut Partial, with_grad: bool) {
    let w1 = params.w1_encode.data();
    let w2 = params.w2_decode.data();
    let h = params.h_pool.data();
    let flen = cfg.filter_len();
    let units = cfg.simple_len();

    let z = encode(x, cfg, w1);
    let mut residual: Vec<f64> = x.iter().map(|&v| -f64::from(v)).collect();
    for (u, &zu) in z.iter().enumerate() {
        let filt = &w2[u * flen..(u + 1) * flen];
        for_patch(cfg, u, |p, i| residual[i] += f64::from(filt[p]) * zu);
    }
    let recon: f64 = residual.iter().map(|e| e * e).sum();

    let energy = pool_energy(&z, cfg, h);
    let (lambda, eps) = (cfg.sparsity_lambda, cfg.sparsity_epsilon);
    let sparse: f64 = energy.iter().map(|e| (eps + e).sqrt()).sum();
    acc.objective += recon + lambda * sparse;

    if !with_grad {
        return;
    }

    // dJ/dz from the sparsity term: Σ_j λ H_ju z_u / sqrt(ε + E_j).
    let mut dz = vec![0.0f64; units];
    let [_, sw, k] = cfg.simple_shape();
    let [ph, pw, _] = cfg.pooled_shape();
    let p = cfg.pool_size;
    for py in 0..ph {
        for px in 0..pw {
            for m in 0..k {
                let e = energy[(py * pw + px) * k + m];
                let coef = lambda / (eps + e).sqrt();
                for a in 0..p {
                    for b in 0..p {
                        let u = ((py + a) * sw + px + b) * k + m;
                        dz[u] += coef * f64::from(h[a * p + b]) * z[u];
                    }
                }
            }
        }
    }

    for (u, &zu) in z.iter().enumerate() {
        let base = u * flen;
        let filt = &w2[base..base + flen];
        let mut back = 0.0f64;
        for_patch(cfg, u, |pi, i| {
            let e = residual[i];
            acc.w2[base + pi] += 2.0 * e * zu;
            back += f64::from(filt[pi]) * e;
        });
        let coef = 2.0 * back + dz[u];
        if coef != 0.0 {
            for_patch(cfg, u, |pi, i| acc.w1[base + pi] += coef * f64::from(x[i]));
        }
    }
}

fn evaluate(batch: &[&[f32]], cfg: &StageConfig, params: &StageParams, with_grad: bool) -> Partial {
    let len = cfg.weight_len();
    let partials: Vec<Partial> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Partial::new(len, with_grad);
            for x in chunk {
                accumulate_example(x, cfg, params, &mut acc, with_grad);
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(Partial::new(len, with_grad), Partial::merge)
}

fn check_batch(batch: &[Tensor], cfg: &StageConfig, params: &StageParams) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::argument("objective needs a nonempty batch"));
    }
    cfg.validate()?;
    params.validate(cfg)?;
    for (i, x) in batch.iter().enumerate() {
        x.ensure_shape(&cfg.input_shape(), &format!("batch example {i}"))?;
    }
    Ok(())
}

/// Value of the stage objective summed over `batch`.
pub fn rica_stage_objective(batch: &[Tensor], cfg: &StageConfig, params: &StageParams) -> Result<f64> {
    check_batch(batch, cfg, params)?;
    let views: Vec<&[f32]> = batch.iter().map(Tensor::data).collect();
    Ok(evaluate(&views, cfg, params, false).objective)
}

/// Objective value with exact gradients for `W1` and `W2`. `H` and `G` are fixed.
pub fn rica_stage_objective_and_gradient(
    batch: &[Tensor],
    cfg: &StageConfig,
    params: &StageParams,
) -> Result<(f64, StageGrads)> {
    check_batch(batch, cfg, params)?;
    if cfg.sparsity_epsilon <= 0.0 {
        return Err(Error::argument(
            "sparsity_epsilon must be positive for the gradient (sqrt is not differentiable at 0)",
        ));
    }
    let views: Vec<&[f32]> = batch.iter().map(Tensor::data).collect();
    let acc = evaluate(&views, cfg, params, true);
    let shape = cfg.weight_shape();
    let grads = StageGrads {
        w1: Tensor::from_f64(&shape, &acc.w1)?,
        w2: Tensor::from_f64(&shape, &acc.w2)?,
    };
    Ok((acc.objective, grads))
}

pub fn rica_stage_gradient(batch: &[Tensor], cfg: &StageConfig, params: &StageParams) -> Result<StageGrads> {
    rica_stage_objective_and_gradient(batch, cfg, params).map(|(_, g)| g)
}

/// Summed objective of all stages with per-stage gradients.
#[derive(Debug, Clone)]
pub struct JointEvaluation {
    pub total: f64,
    pub per_stage: Vec<f64>,
    pub grads: Vec<StageGrads>,
}

/// Inputs seen by every stage: the raw batch for stage one, the previous
/// stage's normalized output afterwards.
pub fn stage_inputs(batch: &[Tensor], net: &NetworkParams) -> Result<Vec<Vec<Tensor>>> {
    let n = net.num_stages();
    let mut inputs: Vec<Vec<Tensor>> = vec![Vec::with_capacity(batch.len()); n];
    let forwards: Vec<_> = batch
        .par_iter()
        .map(|x| network_forward(x, net))
        .collect::<Result<_>>()?;
    for (x, acts) in batch.iter().zip(forwards) {
        inputs[0].push(x.clone());
        for (s, a) in acts.into_iter().take(n - 1).enumerate() {
            inputs[s + 1].push(a.normalized);
        }
    }
    Ok(inputs)
}

/// Sum of the stage objectives. Each stage's gradient is taken with respect
/// to its own objective with its input held fixed; stages do not
/// backpropagate into one another.
pub fn joint_objective_and_gradient(batch: &[Tensor], net: &NetworkParams) -> Result<JointEvaluation> {
    if batch.is_empty() {
        return Err(Error::argument("objective needs a nonempty batch"));
    }
    let inputs = stage_inputs(batch, net)?;
    let mut per_stage = Vec::with_capacity(net.num_stages());
    let mut grads = Vec::with_capacity(net.num_stages());
    for ((cfg, params), xs) in net.config.stages.iter().zip(&net.stages).zip(&inputs) {
        let (obj, g) = rica_stage_objective_and_gradient(xs, cfg, params)?;
        per_stage.push(obj);
        grads.push(g);
    }
    Ok(JointEvaluation {
        total: per_stage.iter().sum(),
        per_stage,
        grads,
    })
}

pub fn joint_objective(batch: &[Tensor], net: &NetworkParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::argument("objective needs a nonempty batch"));
    }
    let inputs = stage_inputs(batch, net)?;
    let mut total = 0.0;
    for ((cfg, params), xs) in net.config.stages.iter().zip(&net.stages).zip(&inputs) {
        total += rica_stage_objective(xs, cfg, params)?;
    }
    Ok(total)
}
