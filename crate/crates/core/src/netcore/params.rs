use rand::Rng;
use sha2::{Digest, Sha256};

use super::config::{NetworkConfig, StageConfig};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Tensor;

/// Learnable and fixed weights of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    /// Encoding filters, `StageConfig::weight_shape`.
    pub w1_encode: Tensor,
    /// Decoding filters; same geometry as `w1_encode`, never tied to it.
    pub w2_decode: Tensor,
    /// Fixed uniform pooling weights over a `pool × pool` neighborhood.
    pub h_pool: Tensor,
    /// Gaussian LCN window, `lcn × lcn × maps`, summing to one.
    pub g_window: Tensor,
}

impl StageParams {
    /// Seeded uniform initialization on `[-r, r]` with `r = 1/sqrt(fan_in)`.
    pub fn init(cfg: &StageConfig, rng: &mut impl Rng) -> Self {
        let shape = cfg.weight_shape();
        let r = 1.0 / (cfg.filter_len() as f32).sqrt();
        let mut draw = || {
            let data = (0..cfg.weight_len()).map(|_| rng.gen_range(-r..=r)).collect();
            Tensor::new(shape.to_vec(), data).expect("weight shape")
        };
        let w1_encode = draw();
        let w2_decode = draw();
        Self {
            w1_encode,
            w2_decode,
            h_pool: uniform_pool_weights(cfg.pool_size),
            g_window: gaussian_window(cfg.lcn_window, cfg.num_maps),
        }
    }

    /// All-zero filters with the standard fixed pooling and LCN windows.
    pub fn zeros(cfg: &StageConfig) -> Self {
        Self {
            w1_encode: Tensor::zeros(&cfg.weight_shape()),
            w2_decode: Tensor::zeros(&cfg.weight_shape()),
            h_pool: uniform_pool_weights(cfg.pool_size),
            g_window: gaussian_window(cfg.lcn_window, cfg.num_maps),
        }
    }

    pub fn validate(&self, cfg: &StageConfig) -> Result<()> {
        self.w1_encode.ensure_shape(&cfg.weight_shape(), "w1_encode")?;
        self.w2_decode.ensure_shape(&cfg.weight_shape(), "w2_decode")?;
        self.h_pool
            .ensure_shape(&[cfg.pool_size, cfg.pool_size], "h_pool")?;
        self.g_window
            .ensure_shape(&[cfg.lcn_window, cfg.lcn_window, cfg.num_maps], "g_window")?;
        if self.h_pool.data().iter().any(|&v| v < 0.0) {
            return Err(Error::argument("pooling weights must be nonnegative"));
        }
        if (self.g_window.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::argument(format!(
                "LCN window sums to {} instead of 1",
                self.g_window.sum()
            )));
        }
        Ok(())
    }
}

/// `1/pool²` everywhere.
pub fn uniform_pool_weights(pool_size: usize) -> Tensor {
    Tensor::full(&[pool_size, pool_size], 1.0 / (pool_size * pool_size) as f32)
}

/// Gaussian window with `sigma = size / 4`, replicated over `maps` and
/// normalized so that all entries sum to one.
pub fn gaussian_window(size: usize, maps: usize) -> Tensor {
    let sigma = size as f64 / 4.0;
    let half = (size / 2) as f64;
    let mut spatial = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            spatial.push((-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = spatial.iter().sum::<f64>() * maps as f64;
    let mut data = Vec::with_capacity(size * size * maps);
    for w in &spatial {
        for _ in 0..maps {
            data.push(w / total);
        }
    }
    Tensor::from_f64(&[size, size, maps], &data).expect("window shape")
}

/// Gradients for the learnable weights of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGrads {
    pub w1: Tensor,
    pub w2: Tensor,
}

impl StageGrads {
    pub fn zeros(cfg: &StageConfig) -> Self {
        Self {
            w1: Tensor::zeros(&cfg.weight_shape()),
            w2: Tensor::zeros(&cfg.weight_shape()),
        }
    }
}

/// Parameters of the full stack together with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub stages: Vec<StageParams>,
}

impl NetworkParams {
    pub fn new(config: NetworkConfig, stages: Vec<StageParams>) -> Result<Self> {
        config.validate()?;
        if stages.len() != config.stages.len() {
            return Err(Error::geometry(format!(
                "{} stage configs but {} stage parameter sets",
                config.stages.len(),
                stages.len()
            )));
        }
        for (cfg, p) in config.stages.iter().zip(&stages) {
            p.validate(cfg)?;
        }
        Ok(Self { config, stages })
    }

    /// Seeded initialization; stage `n` draws from its own substream.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let stages = config
            .stages
            .iter()
            .enumerate()
            .map(|(i, cfg)| {
                let mut rng = substream(seed, &format!("init.s{}", i + 1));
                StageParams::init(cfg, &mut rng)
            })
            .collect();
        Ok(Self { config, stages })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let stages = config.stages.iter().map(StageParams::zeros).collect();
        Ok(Self { config, stages })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Learnable tensors keyed `s{n}.w1` / `s{n}.w2`.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(2 * self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("s{}.w1", i + 1), &s.w1_encode));
            out.push((format!("s{}.w2", i + 1), &s.w2_decode));
        }
        out
    }

    pub fn learnable_mut(&mut self, key: &str) -> Option<&mut Tensor> {
        let (stage, which) = parse_learnable_key(key)?;
        let s = self.stages.get_mut(stage)?;
        Some(match which {
            1 => &mut s.w1_encode,
            _ => &mut s.w2_decode,
        })
    }

    pub fn learnable_ref(&self, key: &str) -> Option<&Tensor> {
        let (stage, which) = parse_learnable_key(key)?;
        let s = self.stages.get(stage)?;
        Some(match which {
            1 => &s.w1_encode,
            _ => &s.w2_decode,
        })
    }

    /// SHA-256 over every tensor's raw bytes, in stage order.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.stages {
            for t in [&s.w1_encode, &s.w2_decode, &s.h_pool, &s.g_window] {
                for v in t.data() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `"s2.w1"` → `(1, 1)`.
pub fn parse_learnable_key(key: &str) -> Option<(usize, u8)> {
    let rest = key.strip_prefix('s')?;
    let (stage, which) = rest.split_once('.')?;
    let stage: usize = stage.parse().ok()?;
    let which = match which {
        "w1" => 1,
        "w2" => 2,
        _ => return None,
    };
    if stage == 0 {
        return None;
    }
    Some((stage - 1, which))
}
