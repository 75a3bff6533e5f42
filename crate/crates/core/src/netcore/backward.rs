//! Backpropagation of a top-layer gradient through all nine sublayers.
//!
//! Used where a loss depends on the network output (supervised fine-tuning,
//! optimal-stimulus search). Pooling and LCN carry no learnable weights, so
//! only the encoding filters and the input receive gradients.

use super::config::StageConfig;
use super::forward::{encode, for_window, lcn_trace, pool_energy, window_mass, LcnTrace};
use super::params::{NetworkParams, StageParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct NetworkBackward {
    /// Top-layer output of the forward pass, `f64`.
    pub output: Vec<f64>,
    /// Gradient with respect to each stage's encoding filters.
    pub w1: Vec<Tensor>,
    /// Gradient with respect to the network input.
    pub input: Vec<f64>,
}

struct StageTrace {
    input: Vec<f32>,
    simple: Vec<f64>,
    pooled: Vec<f64>,
    lcn: LcnTrace,
}

fn stage_trace(input: Vec<f32>, cfg: &StageConfig, params: &StageParams) -> StageTrace {
    // Round between sublayers exactly as the tensor-level forward pass does.
    let round = |v: f64| f64::from(v as f32);
    let simple: Vec<f64> = encode(&input, cfg, params.w1_encode.data())
        .into_iter()
        .map(round)
        .collect();
    let pooled: Vec<f64> = pool_energy(&simple, cfg, params.h_pool.data())
        .into_iter()
        .map(|e| round(e.sqrt()))
        .collect();
    let lcn = lcn_trace(&pooled, cfg, params.g_window.data());
    StageTrace {
        input,
        simple,
        pooled,
        lcn,
    }
}

fn lcn_backward(trace: &LcnTrace, cfg: &StageConfig, g: &[f32], grad_out: &[f64]) -> Vec<f64> {
    let [h, w, k] = cfg.pooled_shape();
    let win = cfg.lcn_window;
    let floor = cfg.lcn_floor_c;
    let mass = window_mass(h, w, win, k, g);
    let c = &trace.centered;

    let mut gc = vec![0.0f64; h * w * k];
    for loc in 0..h * w {
        let d = trace.sigma[loc].max(floor);
        for m in 0..k {
            gc[loc * k + m] = grad_out[loc * k + m] / d;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let loc = y * w + x;
            let sigma = trace.sigma[loc];
            if sigma <= floor {
                continue;
            }
            let mut gd = 0.0;
            for m in 0..k {
                gd -= grad_out[loc * k + m] * c[loc * k + m] / (sigma * sigma);
            }
            let scale = gd / (sigma * mass[loc]);
            for_window(y, x, h, w, win, |wi, nloc| {
                for n in 0..k {
                    gc[nloc * k + n] += scale * f64::from(g[wi * k + n]) * c[nloc * k + n];
                }
            });
        }
    }

    let mut gh = gc.clone();
    for y in 0..h {
        for x in 0..w {
            let loc = y * w + x;
            let total: f64 = gc[loc * k..(loc + 1) * k].iter().sum();
            if total == 0.0 {
                continue;
            }
            let scale = total / mass[loc];
            for_window(y, x, h, w, win, |wi, nloc| {
                for n in 0..k {
                    gh[nloc * k + n] -= scale * f64::from(g[wi * k + n]);
                }
            });
        }
    }
    gh
}

fn pool_backward(trace: &StageTrace, cfg: &StageConfig, h: &[f32], grad_pooled: &[f64]) -> Vec<f64> {
    let [_, sw, k] = cfg.simple_shape();
    let [ph, pw, _] = cfg.pooled_shape();
    let p = cfg.pool_size;
    let mut gs = vec![0.0f64; cfg.simple_len()];
    for py in 0..ph {
        for px in 0..pw {
            for m in 0..k {
                let j = (py * pw + px) * k + m;
                let pooled = trace.pooled[j];
                if pooled == 0.0 {
                    continue;
                }
                let coef = grad_pooled[j] / pooled;
                for a in 0..p {
                    for b in 0..p {
                        let u = ((py + a) * sw + px + b) * k + m;
                        gs[u] += coef * f64::from(h[a * p + b]) * trace.simple[u];
                    }
                }
            }
        }
    }
    gs
}

fn filter_backward(trace: &StageTrace, cfg: &StageConfig, w1: &[f32], grad_simple: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let [sh, sw, k] = cfg.simple_shape();
    let (rf, ic, iw, flen) = (cfg.rf_size, cfg.input_maps, cfg.input_width, cfg.filter_len());
    let mut gw = vec![0.0f64; cfg.weight_len()];
    let mut gx = vec![0.0f64; cfg.input_len()];
    for oy in 0..sh {
        for ox in 0..sw {
            let (y0, x0) = (oy * cfg.stride, ox * cfg.stride);
            for m in 0..k {
                let u = (oy * sw + ox) * k + m;
                let gu = grad_simple[u];
                if gu == 0.0 {
                    continue;
                }
                for dy in 0..rf {
                    let row = ((y0 + dy) * iw + x0) * ic;
                    for j in 0..rf * ic {
                        let pi = u * flen + dy * rf * ic + j;
                        gw[pi] += gu * f64::from(trace.input[row + j]);
                        gx[row + j] += gu * f64::from(w1[pi]);
                    }
                }
            }
        }
    }
    (gw, gx)
}

/// Forward pass followed by backpropagation of `grad_top`, the gradient of
/// some scalar loss with respect to the flattened top-layer output.
pub fn network_backward(input: &Tensor, net: &NetworkParams, grad_top: &[f64]) -> Result<NetworkBackward> {
    net.config.validate()?;
    input.ensure_shape(&net.config.input_shape(), "network input")?;
    if grad_top.len() != net.config.num_top_neurons() {
        return Err(Error::geometry(format!(
            "top gradient has {} entries, network has {} top neurons",
            grad_top.len(),
            net.config.num_top_neurons()
        )));
    }

    let mut traces = Vec::with_capacity(net.num_stages());
    let mut x = input.data().to_vec();
    for (cfg, params) in net.config.stages.iter().zip(&net.stages) {
        let t = stage_trace(x, cfg, params);
        // The next stage reads the f32-rounded output, as in the forward pass.
        x = t.lcn.output.iter().map(|&v| v as f32).collect();
        traces.push(t);
    }
    let output = traces.last().expect("one stage").lcn.output.clone();

    let mut grad = grad_top.to_vec();
    let mut w1 = vec![None; net.num_stages()];
    for s in (0..net.num_stages()).rev() {
        let (cfg, params, trace) = (&net.config.stages[s], &net.stages[s], &traces[s]);
        let g_pooled = lcn_backward(&trace.lcn, cfg, params.g_window.data(), &grad);
        let g_simple = pool_backward(trace, cfg, params.h_pool.data(), &g_pooled);
        let (gw, gx) = filter_backward(trace, cfg, params.w1_encode.data(), &g_simple);
        w1[s] = Some(Tensor::from_f64(&cfg.weight_shape(), &gw)?);
        grad = gx;
    }
    Ok(NetworkBackward {
        output,
        w1: w1.into_iter().map(|t| t.expect("filled")).collect(),
        input: grad,
    })
}
