//! Stage and network geometry.

use crate::error::{Error, Result};

pub const DEFAULT_RF_SIZE: usize = 18;
pub const DEFAULT_POOL_SIZE: usize = 5;
pub const DEFAULT_STRIDE: usize = 9;
pub const DEFAULT_LCN_FLOOR: f64 = 0.01;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const MAX_STAGES: usize = 3;

/// Geometry and hyper-parameters of one filtering/pooling/normalization stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_maps: usize,
    pub rf_size: usize,
    pub stride: usize,
    pub num_maps: usize,
    pub pool_size: usize,
    pub lcn_window: usize,
    pub lcn_floor_c: f64,
    pub sparsity_lambda: f64,
    pub sparsity_epsilon: f64,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_height", self.input_height),
            ("input_width", self.input_width),
            ("input_maps", self.input_maps),
            ("rf_size", self.rf_size),
            ("stride", self.stride),
            ("num_maps", self.num_maps),
            ("pool_size", self.pool_size),
            ("lcn_window", self.lcn_window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.lcn_window.is_multiple_of(2) {
            return Err(Error::config(format!(
                "lcn_window must be odd, got {}",
                self.lcn_window
            )));
        }
        if !(self.lcn_floor_c > 0.0 && self.lcn_floor_c.is_finite()) {
            return Err(Error::config("lcn_floor_c must be a positive real"));
        }
        if !(self.sparsity_lambda >= 0.0 && self.sparsity_lambda.is_finite()) {
            return Err(Error::config("sparsity_lambda must be nonnegative"));
        }
        // Zero is accepted for objective evaluation; the gradient rejects it.
        if !(self.sparsity_epsilon >= 0.0 && self.sparsity_epsilon.is_finite()) {
            return Err(Error::config("sparsity_epsilon must be nonnegative"));
        }
        if self.rf_size > self.input_height.min(self.input_width) {
            return Err(Error::geometry(format!(
                "rf_size {} exceeds input extent {}x{}",
                self.rf_size, self.input_height, self.input_width
            )));
        }
        for (name, extent) in [("height", self.input_height), ("width", self.input_width)] {
            if !(extent - self.rf_size).is_multiple_of(self.stride) {
                return Err(Error::geometry(format!(
                    "input {name} {extent} minus rf_size {} is not divisible by stride {}",
                    self.rf_size, self.stride
                )));
            }
        }
        let (sh, sw) = (self.simple_height(), self.simple_width());
        if self.pool_size > sh.min(sw) {
            return Err(Error::geometry(format!(
                "pool_size {} exceeds simple-layer extent {sh}x{sw}",
                self.pool_size
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_height, self.input_width, self.input_maps]
    }

    pub fn input_len(&self) -> usize {
        self.input_height * self.input_width * self.input_maps
    }

    pub fn simple_height(&self) -> usize {
        (self.input_height - self.rf_size) / self.stride + 1
    }

    pub fn simple_width(&self) -> usize {
        (self.input_width - self.rf_size) / self.stride + 1
    }

    pub fn simple_shape(&self) -> [usize; 3] {
        [self.simple_height(), self.simple_width(), self.num_maps]
    }

    pub fn simple_len(&self) -> usize {
        self.simple_height() * self.simple_width() * self.num_maps
    }

    /// Pooling uses overlapping neighborhoods at stride 1.
    pub fn pooled_shape(&self) -> [usize; 3] {
        [
            self.simple_height() - self.pool_size + 1,
            self.simple_width() - self.pool_size + 1,
            self.num_maps,
        ]
    }

    /// Number of pooling units (k in the sparsity penalty).
    pub fn pooled_len(&self) -> usize {
        self.pooled_shape().iter().product()
    }

    /// LCN preserves the pooled shape.
    pub fn output_shape(&self) -> [usize; 3] {
        self.pooled_shape()
    }

    pub fn filter_len(&self) -> usize {
        self.rf_size * self.rf_size * self.input_maps
    }

    /// `[simple_h, simple_w, maps, rf, rf, input_maps]`: one filter per simple unit.
    pub fn weight_shape(&self) -> [usize; 6] {
        [
            self.simple_height(),
            self.simple_width(),
            self.num_maps,
            self.rf_size,
            self.rf_size,
            self.input_maps,
        ]
    }

    pub fn weight_len(&self) -> usize {
        self.simple_len() * self.filter_len()
    }
}

/// Per-stage settings that do not depend on the stage's input geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSpec {
    pub rf_size: usize,
    pub stride: usize,
    pub num_maps: usize,
    pub pool_size: usize,
    pub lcn_window: usize,
    pub lcn_floor_c: f64,
    pub sparsity_lambda: f64,
    pub sparsity_epsilon: f64,
}

impl Default for StageSpec {
    fn default() -> Self {
        Self {
            rf_size: DEFAULT_RF_SIZE,
            stride: DEFAULT_STRIDE,
            num_maps: 8,
            pool_size: DEFAULT_POOL_SIZE,
            lcn_window: 5,
            lcn_floor_c: DEFAULT_LCN_FLOOR,
            sparsity_lambda: DEFAULT_LAMBDA,
            sparsity_epsilon: DEFAULT_EPSILON,
        }
    }
}

impl StageSpec {
    pub fn at_input(&self, input_height: usize, input_width: usize, input_maps: usize) -> StageConfig {
        StageConfig {
            input_height,
            input_width,
            input_maps,
            rf_size: self.rf_size,
            stride: self.stride,
            num_maps: self.num_maps,
            pool_size: self.pool_size,
            lcn_window: self.lcn_window,
            lcn_floor_c: self.lcn_floor_c,
            sparsity_lambda: self.sparsity_lambda,
            sparsity_epsilon: self.sparsity_epsilon,
        }
    }
}

/// Geometry of the whole stack. Stage `n + 1` consumes stage `n`'s LCN output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub stages: Vec<StageConfig>,
}

impl NetworkConfig {
    pub fn new(stages: Vec<StageConfig>) -> Result<Self> {
        let cfg = Self { stages };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Chains `specs` starting from an `height × width × channels` input.
    pub fn chain(input: [usize; 3], specs: &[StageSpec]) -> Result<Self> {
        let [mut h, mut w, mut c] = input;
        let mut stages = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let stage = spec.at_input(h, w, c);
            stage
                .validate()
                .map_err(|e| Error::geometry(format!("stage {}: {e}", i + 1)))?;
            [h, w, c] = stage.output_shape();
            stages.push(stage);
        }
        Self::new(stages)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.len() > MAX_STAGES {
            return Err(Error::config(format!(
                "a network has 1 to {MAX_STAGES} stages, got {}",
                self.stages.len()
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::geometry(format!("stage {}: {e}", i + 1)))?;
        }
        for (i, pair) in self.stages.windows(2).enumerate() {
            if pair[0].output_shape() != pair[1].input_shape() {
                return Err(Error::geometry(format!(
                    "stage {} outputs {:?} but stage {} expects {:?}",
                    i + 1,
                    pair[0].output_shape(),
                    i + 2,
                    pair[1].input_shape()
                )));
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.stages[0].input_shape()
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.stages[self.stages.len() - 1].output_shape()
    }

    /// Number of top-layer neurons (LCN outputs of the last stage).
    pub fn num_top_neurons(&self) -> usize {
        self.output_shape().iter().product()
    }
}
