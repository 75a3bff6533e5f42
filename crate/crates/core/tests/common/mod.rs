//! Independent reference implementations used as test oracles.
//!
//! Everything here is written with explicit loops in `f64` and shares no
//! code with the library's kernels.

#![allow(dead_code)]

use cortexforge::netcore::{StageConfig, StageSpec};
use cortexforge::rng::substream;
use cortexforge::Tensor;
use rand::Rng;

pub fn random_tensor(shape: &[usize], seed: u64, purpose: &str) -> Tensor {
    let mut rng = substream(seed, purpose);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

pub fn f64s(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Random valid single-stage geometry with input at most `max_side` and
/// at most `max_maps` maps.
pub fn random_stage(seed: u64, max_side: usize, max_maps: usize) -> StageConfig {
    let mut rng = substream(seed, "random-stage");
    loop {
        let side = rng.gen_range(3..=max_side);
        let rf = rng.gen_range(1..=side.min(5));
        let stride = rng.gen_range(1..=3);
        if (side - rf) % stride != 0 {
            continue;
        }
        let simple = (side - rf) / stride + 1;
        let pool = rng.gen_range(1..=simple.min(3));
        let cfg = StageSpec {
            rf_size: rf,
            stride,
            num_maps: rng.gen_range(1..=max_maps),
            pool_size: pool,
            lcn_window: [1, 3, 5][rng.gen_range(0..3)],
            lcn_floor_c: 0.01,
            sparsity_lambda: 0.1,
            sparsity_epsilon: 1e-3,
        }
        .at_input(side, side, rng.gen_range(1..=max_maps));
        if cfg.validate().is_ok() {
            return cfg;
        }
    }
}

/// Explicit patch dot products, one output unit at a time.
pub fn oracle_filter(input: &[f64], cfg: &StageConfig, w1: &[f64]) -> Vec<f64> {
    let sh = (cfg.input_height - cfg.rf_size) / cfg.stride + 1;
    let sw = (cfg.input_width - cfg.rf_size) / cfg.stride + 1;
    let mut out = Vec::new();
    for oy in 0..sh {
        for ox in 0..sw {
            for k in 0..cfg.num_maps {
                let unit = (oy * sw + ox) * cfg.num_maps + k;
                let mut sum = 0.0;
                for dy in 0..cfg.rf_size {
                    for dx in 0..cfg.rf_size {
                        for c in 0..cfg.input_maps {
                            let y = oy * cfg.stride + dy;
                            let x = ox * cfg.stride + dx;
                            let pixel = input[(y * cfg.input_width + x) * cfg.input_maps + c];
                            let widx = ((unit * cfg.rf_size + dy) * cfg.rf_size + dx) * cfg.input_maps + c;
                            sum += w1[widx] * pixel;
                        }
                    }
                }
                out.push(sum);
            }
        }
    }
    out
}

pub fn oracle_pool(simple: &[f64], cfg: &StageConfig, h: &[f64]) -> Vec<f64> {
    let sh = (cfg.input_height - cfg.rf_size) / cfg.stride + 1;
    let sw = (cfg.input_width - cfg.rf_size) / cfg.stride + 1;
    let p = cfg.pool_size;
    let k = cfg.num_maps;
    let mut out = Vec::new();
    for py in 0..=(sh - p) {
        for px in 0..=(sw - p) {
            for m in 0..k {
                let mut sum = 0.0;
                for a in 0..p {
                    for b in 0..p {
                        let s = simple[((py + a) * sw + (px + b)) * k + m];
                        sum += h[a * p + b] * s * s;
                    }
                }
                out.push(sum.sqrt());
            }
        }
    }
    out
}

/// Two-pass LCN: weighted mean over the clipped window (renormalized),
/// then division by the clipped-window weighted energy floored at `c`.
pub fn oracle_lcn(pooled: &[f64], height: usize, width: usize, maps: usize, win: usize, c: f64, g: &[f64]) -> Vec<f64> {
    let r = (win / 2) as isize;
    let at = |y: usize, x: usize, m: usize| (y * width + x) * maps + m;
    let window = |y: usize, x: usize| {
        let mut cells = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                    continue;
                }
                for m in 0..maps {
                    let gi = (((dy + r) as usize) * win + (dx + r) as usize) * maps + m;
                    cells.push((ny as usize, nx as usize, m, g[gi]));
                }
            }
        }
        cells
    };
    let mut centered = vec![0.0; pooled.len()];
    for y in 0..height {
        for x in 0..width {
            let cells = window(y, x);
            let total: f64 = cells.iter().map(|c| c.3).sum();
            let mean: f64 = cells.iter().map(|&(ny, nx, m, w)| w * pooled[at(ny, nx, m)]).sum::<f64>() / total;
            for m in 0..maps {
                centered[at(y, x, m)] = pooled[at(y, x, m)] - mean;
            }
        }
    }
    let mut out = vec![0.0; pooled.len()];
    for y in 0..height {
        for x in 0..width {
            let cells = window(y, x);
            let total: f64 = cells.iter().map(|c| c.3).sum();
            let energy: f64 = cells
                .iter()
                .map(|&(ny, nx, m, w)| w * centered[at(ny, nx, m)].powi(2))
                .sum::<f64>()
                / total;
            let d = energy.sqrt().max(c);
            for m in 0..maps {
                out[at(y, x, m)] = centered[at(y, x, m)] / d;
            }
        }
    }
    out
}

/// `(simple, pooled, normalized)` through the three oracles.
pub fn oracle_stage(input: &[f64], cfg: &StageConfig, w1: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let simple = oracle_filter(input, cfg, w1);
    let pooled = oracle_pool(&simple, cfg, h);
    let [ph, pw, k] = cfg.pooled_shape();
    let norm = oracle_lcn(&pooled, ph, pw, k, cfg.lcn_window, cfg.lcn_floor_c, g);
    (simple, pooled, norm)
}

/// Builds the dense encoder matrix (units × pixels) from local filters.
pub fn dense_encoder(cfg: &StageConfig, w: &[f64]) -> Vec<Vec<f64>> {
    let sw = (cfg.input_width - cfg.rf_size) / cfg.stride + 1;
    let units = cfg.simple_len();
    let pixels = cfg.input_len();
    let mut m = vec![vec![0.0; pixels]; units];
    for (u, row) in m.iter_mut().enumerate() {
        let loc = u / cfg.num_maps;
        let (oy, ox) = (loc / sw, loc % sw);
        for dy in 0..cfg.rf_size {
            for dx in 0..cfg.rf_size {
                for c in 0..cfg.input_maps {
                    let pix = ((oy * cfg.stride + dy) * cfg.input_width + ox * cfg.stride + dx) * cfg.input_maps + c;
                    row[pix] = w[((u * cfg.rf_size + dy) * cfg.rf_size + dx) * cfg.input_maps + c];
                }
            }
        }
    }
    m
}

/// The stage objective evaluated with dense matrices:
/// `Σ_i ‖D E x − x‖² + λ Σ_j sqrt(ε + H_j (E x)²)`.
pub fn oracle_objective(batch: &[Vec<f64>], cfg: &StageConfig, w1: &[f64], w2: &[f64], h: &[f64]) -> f64 {
    let enc = dense_encoder(cfg, w1);
    let dec = dense_encoder(cfg, w2);
    let mut total = 0.0;
    for x in batch {
        let z: Vec<f64> = enc.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
        let mut recon = vec![0.0; x.len()];
        for (u, row) in dec.iter().enumerate() {
            for (pix, w) in row.iter().enumerate() {
                recon[pix] += w * z[u];
            }
        }
        let err: f64 = recon.iter().zip(x).map(|(r, v)| (r - v).powi(2)).sum();
        let sparse: f64 = oracle_pool(&z, cfg, h)
            .iter()
            .map(|p| (cfg.sparsity_epsilon + p * p).sqrt())
            .sum();
        total += err + cfg.sparsity_lambda * sparse;
    }
    total
}

/// Central differences of `f` at `x` for the listed coordinates.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], coords: &[usize], step: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            p[i] = x[i] + step;
            let hi = f(&p);
            p[i] = x[i] - step;
            let lo = f(&p);
            p[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Up to `max` distinct coordinates out of `0..len`, seeded.
pub fn sample_coords(len: usize, max: usize, seed: u64) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut rng = substream(seed, "coords");
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < max {
        picked.insert(rng.gen_range(0..len));
    }
    picked.into_iter().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, &y)| (x - y as f64).abs()).fold(0.0, f64::max)
}

/// A random well-formed wire message drawn from `seed`.
pub fn random_message(seed: u64) -> cortexforge::distrib::wire::WireMessage {
    use cortexforge::distrib::wire::{NamedTensor, WireMessage};
    let mut rng = substream(seed, "wire");
    let name = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
        let len = rng.gen_range(0..12);
        (0..len).map(|_| char::from_u32(rng.gen_range(0x20..0x3000)).unwrap_or('x')).collect()
    };
    let table = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<NamedTensor> {
        (0..rng.gen_range(0..4))
            .map(|_| {
                let rank = rng.gen_range(1..4);
                let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..4)).collect();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-1e6f32..1e6)).collect();
                NamedTensor::new(name(rng), Tensor::new(shape, data).unwrap())
            })
            .collect()
    };
    match rng.gen_range(0..4) {
        0 => WireMessage::FetchParams {
            shard_id: rng.gen(),
            keys: (0..rng.gen_range(0..5)).map(|_| name(&mut rng)).collect(),
        },
        1 => WireMessage::ParamsResponse { version: rng.gen(), tensors: table(&mut rng) },
        2 => WireMessage::PushGrads { replica_id: rng.gen(), step: rng.gen(), tensors: table(&mut rng) },
        _ => WireMessage::Ack { version: rng.gen() },
    }
}
