//! Forward passes: locally-connected filtering, L2 pooling, and local
//! contrast normalization.
//!
//! Every reduction accumulates in `f64`; activations are stored as `f32`.

use super::config::StageConfig;
use super::params::{NetworkParams, StageParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The three sublayer outputs of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageActivations {
    pub simple: Tensor,
    pub pooled: Tensor,
    pub normalized: Tensor,
}

/// Filter responses in `f64`, one per simple unit.
pub(crate) fn encode(input: &[f32], cfg: &StageConfig, w1: &[f32]) -> Vec<f64> {
    let [sh, sw, k] = cfg.simple_shape();
    let (iw, ic, rf) = (cfg.input_width, cfg.input_maps, cfg.rf_size);
    let flen = cfg.filter_len();
    let mut out = vec![0.0f64; sh * sw * k];
    for oy in 0..sh {
        for ox in 0..sw {
            let (y0, x0) = (oy * cfg.stride, ox * cfg.stride);
            for m in 0..k {
                let u = (oy * sw + ox) * k + m;
                let filt = &w1[u * flen..(u + 1) * flen];
                let mut acc = 0.0f64;
                for dy in 0..rf {
                    let row = ((y0 + dy) * iw + x0) * ic;
                    let patch = &input[row..row + rf * ic];
                    let frow = &filt[dy * rf * ic..(dy + 1) * rf * ic];
                    for (&a, &b) in patch.iter().zip(frow) {
                        acc += f64::from(a) * f64::from(b);
                    }
                }
                out[u] = acc;
            }
        }
    }
    out
}

/// Simple-layer responses: each unit dots its own (unshared) filter with its
/// `rf × rf × input_maps` patch.
pub fn lc_filter_forward(input: &Tensor, cfg: &StageConfig, w1: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    input.ensure_shape(&cfg.input_shape(), "filter input")?;
    w1.ensure_shape(&cfg.weight_shape(), "encoding weights")?;
    let z = encode(input.data(), cfg, w1.data());
    Tensor::from_f64(&cfg.simple_shape(), &z)
}

/// Pooled energies `Σ H·s²` (before the square root).
pub(crate) fn pool_energy(simple: &[f64], cfg: &StageConfig, h: &[f32]) -> Vec<f64> {
    let [_, sw, k] = cfg.simple_shape();
    let [ph, pw, _] = cfg.pooled_shape();
    let p = cfg.pool_size;
    let mut out = vec![0.0f64; ph * pw * k];
    for py in 0..ph {
        for px in 0..pw {
            for m in 0..k {
                let mut acc = 0.0f64;
                for a in 0..p {
                    for b in 0..p {
                        let s = simple[((py + a) * sw + px + b) * k + m];
                        acc += f64::from(h[a * p + b]) * s * s;
                    }
                }
                out[(py * pw + px) * k + m] = acc;
            }
        }
    }
    out
}

fn check_pool_geometry(cfg: &StageConfig, h_pool: &Tensor) -> Result<()> {
    let [sh, sw, _] = cfg.simple_shape();
    if cfg.pool_size == 0 || cfg.pool_size > sh.min(sw) {
        return Err(Error::geometry(format!(
            "pool_size {} exceeds simple-layer extent {sh}x{sw}",
            cfg.pool_size
        )));
    }
    h_pool.ensure_shape(&[cfg.pool_size, cfg.pool_size], "pooling weights")
}

/// L2 pooling within each map over overlapping `pool × pool` neighborhoods.
pub fn l2_pool_forward(simple: &Tensor, cfg: &StageConfig, h_pool: &Tensor) -> Result<Tensor> {
    check_pool_geometry(cfg, h_pool)?;
    simple.ensure_shape(&cfg.simple_shape(), "pooling input")?;
    let energy = pool_energy(&simple.to_f64(), cfg, h_pool.data());
    let pooled: Vec<f64> = energy.iter().map(|e| e.sqrt()).collect();
    Tensor::from_f64(&cfg.pooled_shape(), &pooled)
}

/// Intermediate LCN quantities, reused by the backward pass.
pub(crate) struct LcnTrace {
    /// Subtractively normalized values, pooled layout.
    pub centered: Vec<f64>,
    /// Local energy per spatial location.
    pub sigma: Vec<f64>,
    pub output: Vec<f64>,
}

/// Visits every in-bounds window offset around `(y, x)`, passing the window
/// weight row (one weight per map) and the neighbor's spatial index.
#[inline]
pub(crate) fn for_window(
    y: usize,
    x: usize,
    height: usize,
    width: usize,
    win: usize,
    mut f: impl FnMut(usize, usize),
) {
    let r = win / 2;
    let ylo = y.saturating_sub(r);
    let yhi = (y + r).min(height - 1);
    let xlo = x.saturating_sub(r);
    let xhi = (x + r).min(width - 1);
    for ny in ylo..=yhi {
        for nx in xlo..=xhi {
            let wy = ny + r - y;
            let wx = nx + r - x;
            f(wy * win + wx, ny * width + nx);
        }
    }
}

/// Window mass that falls inside the layer at each location.
pub(crate) fn window_mass(height: usize, width: usize, win: usize, maps: usize, g: &[f32]) -> Vec<f64> {
    let mut mass = vec![0.0f64; height * width];
    for y in 0..height {
        for x in 0..width {
            let mut z = 0.0;
            for_window(y, x, height, width, win, |w, _| {
                for m in 0..maps {
                    z += f64::from(g[w * maps + m]);
                }
            });
            mass[y * width + x] = z;
        }
    }
    mass
}

pub(crate) fn lcn_trace(pooled: &[f64], cfg: &StageConfig, g: &[f32]) -> LcnTrace {
    let [h, w, k] = cfg.pooled_shape();
    let win = cfg.lcn_window;
    let mass = window_mass(h, w, win, k, g);

    // Written as a weighted sum of differences so that a constant input
    // maps to exactly zero, border windows included.
    let mut centered = vec![0.0f64; h * w * k];
    for y in 0..h {
        for x in 0..w {
            let loc = y * w + x;
            for m in 0..k {
                let here = pooled[loc * k + m];
                let mut acc = 0.0;
                for_window(y, x, h, w, win, |wi, nloc| {
                    for n in 0..k {
                        acc += f64::from(g[wi * k + n]) * (here - pooled[nloc * k + n]);
                    }
                });
                centered[loc * k + m] = acc / mass[loc];
            }
        }
    }

    let mut sigma = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let loc = y * w + x;
            let mut acc = 0.0;
            for_window(y, x, h, w, win, |wi, nloc| {
                for n in 0..k {
                    let v = centered[nloc * k + n];
                    acc += f64::from(g[wi * k + n]) * v * v;
                }
            });
            sigma[loc] = (acc / mass[loc]).sqrt();
        }
    }

    let floor = cfg.lcn_floor_c;
    let output = centered
        .iter()
        .enumerate()
        .map(|(i, &v)| v / sigma[i / k].max(floor))
        .collect();
    LcnTrace {
        centered,
        sigma,
        output,
    }
}

fn check_lcn_geometry(cfg: &StageConfig, g_window: &Tensor) -> Result<()> {
    if cfg.lcn_window.is_multiple_of(2) {
        return Err(Error::config(format!(
            "lcn_window must be odd, got {}",
            cfg.lcn_window
        )));
    }
    g_window.ensure_shape(&[cfg.lcn_window, cfg.lcn_window, cfg.num_maps], "LCN window")?;
    if (g_window.sum() - 1.0).abs() > 1e-6 {
        return Err(Error::argument(format!(
            "LCN window sums to {}, expected 1",
            g_window.sum()
        )));
    }
    Ok(())
}

/// Subtractive then divisive normalization over a Gaussian window spanning
/// all maps. Truncated windows at the borders are renormalized to sum one.
pub fn lcn_forward(pooled: &Tensor, cfg: &StageConfig, g_window: &Tensor) -> Result<Tensor> {
    check_lcn_geometry(cfg, g_window)?;
    pooled.ensure_shape(&cfg.pooled_shape(), "LCN input")?;
    let trace = lcn_trace(&pooled.to_f64(), cfg, g_window.data());
    Tensor::from_f64(&cfg.output_shape(), &trace.output)
}

pub fn stage_forward(input: &Tensor, cfg: &StageConfig, params: &StageParams) -> Result<StageActivations> {
    params.validate(cfg)?;
    let simple = lc_filter_forward(input, cfg, &params.w1_encode)?;
    let pooled = l2_pool_forward(&simple, cfg, &params.h_pool)?;
    let normalized = lcn_forward(&pooled, cfg, &params.g_window)?;
    Ok(StageActivations {
        simple,
        pooled,
        normalized,
    })
}

/// Runs every stage, feeding each stage's normalized output to the next.
pub fn network_forward(input: &Tensor, net: &NetworkParams) -> Result<Vec<StageActivations>> {
    net.config.validate()?;
    let mut acts: Vec<StageActivations> = Vec::with_capacity(net.num_stages());
    for (cfg, params) in net.config.stages.iter().zip(&net.stages) {
        let x = acts.last().map_or(input, |a| &a.normalized);
        let a = stage_forward(x, cfg, params)?;
        acts.push(a);
    }
    Ok(acts)
}

/// Top-layer feature vector (last stage's LCN output, flattened).
pub fn top_features(input: &Tensor, net: &NetworkParams) -> Result<Vec<f32>> {
    let acts = network_forward(input, net)?;
    Ok(acts
        .into_iter()
        .last()
        .expect("at least one stage")
        .normalized
        .into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::config::{NetworkConfig, StageSpec};
    use crate::netcore::params::{gaussian_window, uniform_pool_weights};
    use crate::rng::substream;
    use rand::Rng;

    fn stage(h: usize, c: usize, rf: usize, stride: usize, maps: usize, pool: usize, win: usize) -> StageConfig {
        StageSpec {
            rf_size: rf,
            stride,
            num_maps: maps,
            pool_size: pool,
            lcn_window: win,
            ..StageSpec::default()
        }
        .at_input(h, h, c)
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = substream(seed, "test");
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_filter_picks_one_pixel() {
        let cfg = stage(8, 2, 4, 4, 1, 1, 1);
        let input = random(&cfg.input_shape(), 1);
        let mut w1 = Tensor::zeros(&cfg.weight_shape());
        // Every unit selects pixel (1, 2) of its patch, channel 1.
        let flen = cfg.filter_len();
        for u in 0..cfg.simple_len() {
            w1.data_mut()[u * flen + (4 + 2) * 2 + 1] = 1.0;
        }
        let out = lc_filter_forward(&input, &cfg, &w1).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let (y, x) = (oy * 4 + 1, ox * 4 + 2);
                let expected = input.data()[(y * 8 + x) * 2 + 1];
                assert_eq!(out.data()[oy * 2 + ox], expected);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_responses() {
        let cfg = stage(8, 1, 4, 2, 3, 2, 3);
        let params = StageParams::init(&cfg, &mut substream(2, "w"));
        let acts = stage_forward(&Tensor::zeros(&cfg.input_shape()), &cfg, &params).unwrap();
        for t in [&acts.simple, &acts.pooled, &acts.normalized] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn filter_rejects_wrong_input_shape() {
        let cfg = stage(8, 1, 4, 4, 2, 1, 1);
        let w1 = Tensor::zeros(&cfg.weight_shape());
        let err = lc_filter_forward(&Tensor::zeros(&[7, 8, 1]), &cfg, &w1).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn pool_three_four_five() {
        let cfg = stage(2, 1, 1, 1, 1, 2, 1);
        let simple = Tensor::new(vec![2, 2, 1], vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let h = Tensor::full(&[2, 2], 1.0);
        let out = l2_pool_forward(&simple, &cfg, &h).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn pool_rejects_oversized_neighborhood() {
        let mut cfg = stage(4, 1, 2, 2, 1, 1, 1);
        cfg.pool_size = 3;
        let simple = Tensor::zeros(&[2, 2, 1]);
        let err = l2_pool_forward(&simple, &cfg, &uniform_pool_weights(3)).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn pool_is_sign_invariant_and_homogeneous() {
        let cfg = stage(10, 1, 2, 2, 3, 3, 1);
        let s = random(&cfg.simple_shape(), 5);
        let h = uniform_pool_weights(3);
        let a = l2_pool_forward(&s, &cfg, &h).unwrap();
        let b = l2_pool_forward(&s.map(|v| -v), &cfg, &h).unwrap();
        assert_eq!(a, b);
        let c = l2_pool_forward(&s.map(|v| 2.5 * v), &cfg, &h).unwrap();
        for (x, y) in a.data().iter().zip(c.data()) {
            assert!((2.5 * x - y).abs() <= 1e-5 * y.abs().max(1e-6));
        }
    }

    #[test]
    fn lcn_of_constant_is_exactly_zero() {
        let cfg = stage(12, 1, 2, 2, 3, 2, 5);
        let pooled = Tensor::full(&cfg.pooled_shape(), 0.731);
        let out = lcn_forward(&pooled, &cfg, &gaussian_window(5, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lcn_uses_the_floor_for_low_energy_inputs() {
        let cfg = stage(12, 1, 2, 2, 1, 2, 3);
        let mut pooled = Tensor::zeros(&cfg.pooled_shape());
        pooled.data_mut()[7] = 1e-4;
        let g = gaussian_window(3, 1);
        let out = lcn_forward(&pooled, &cfg, &g).unwrap();
        let trace = lcn_trace(&pooled.to_f64(), &cfg, g.data());
        assert!(trace.sigma.iter().all(|&s| s < 0.01));
        for (o, c) in out.data().iter().zip(&trace.centered) {
            assert_eq!(*o, (c / 0.01) as f32);
        }
    }

    #[test]
    fn lcn_rejects_even_window() {
        let mut cfg = stage(12, 1, 2, 2, 1, 2, 3);
        cfg.lcn_window = 4;
        let pooled = Tensor::zeros(&cfg.pooled_shape());
        let err = lcn_forward(&pooled, &cfg, &gaussian_window(4, 1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn network_forward_shapes_follow_config() {
        let spec = |rf, stride, maps, pool| StageSpec {
            rf_size: rf,
            stride,
            num_maps: maps,
            pool_size: pool,
            lcn_window: 3,
            ..StageSpec::default()
        };
        let cfg = NetworkConfig::chain(
            [20, 20, 1],
            &[spec(4, 2, 3, 2), spec(4, 2, 3, 1), spec(2, 1, 2, 1)],
        )
        .unwrap();
        let net = NetworkParams::init(cfg.clone(), 9).unwrap();
        let acts = network_forward(&random(&[20, 20, 1], 3), &net).unwrap();
        assert_eq!(acts.len(), 3);
        for (a, s) in acts.iter().zip(&cfg.stages) {
            assert_eq!(a.simple.shape(), &s.simple_shape());
            assert_eq!(a.pooled.shape(), &s.pooled_shape());
            assert_eq!(a.normalized.shape(), &s.output_shape());
        }
    }
}
