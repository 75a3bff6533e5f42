//! Strict `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cortexforge::distrib::{AsyncConfig, SimOptions, TcpOptions};
use cortexforge::eval::SweepAxis;
use cortexforge::netcore::{NetworkConfig, StageSpec};
use cortexforge::optim::{LineSearchConfig, SgdConfig};
use cortexforge::suphead::{FineTuneConfig, HeadConfig};

use crate::fail::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Real,
    Bool,
    Text,
    IntList,
    RealList,
    Choice(&'static [&'static str]),
}

/// Every accepted key, its type and its default, in the order the resolved
/// config is written.
const KEYS: &[(&str, Kind, &str)] = &[
    ("run.seed", Kind::Int, "0"),
    ("run.out", Kind::Text, "out"),
    ("net.input_height", Kind::Int, "16"),
    ("net.input_width", Kind::Int, "16"),
    ("net.input_maps", Kind::Int, "1"),
    ("net.stages", Kind::Int, "1"),
    ("net.rf_size", Kind::Int, "6"),
    ("net.stride", Kind::Int, "5"),
    ("net.num_maps", Kind::Int, "4"),
    ("net.pool_size", Kind::Int, "1"),
    ("net.lcn_window", Kind::Int, "3"),
    ("net.lcn_floor_c", Kind::Real, "0.01"),
    ("net.sparsity_lambda", Kind::Real, "0.1"),
    ("net.sparsity_epsilon", Kind::Real, "0.001"),
    ("sgd.learning_rate", Kind::Real, "0.0001"),
    ("sgd.minibatch_size", Kind::Int, "100"),
    ("sgd.max_steps", Kind::Int, "2000"),
    ("data.train_dir", Kind::Text, ""),
    ("data.train_index", Kind::Text, ""),
    ("data.whiten", Kind::Bool, "false"),
    (
        "async.mode",
        Kind::Choice(&["sim", "tcp", "process"]),
        "sim",
    ),
    ("async.n_replicas", Kind::Int, "1"),
    ("async.n_shards", Kind::Int, "1"),
    ("async.fetch_period", Kind::Int, "1"),
    ("async.push_period", Kind::Int, "1"),
    ("async.latency", Kind::Int, "1"),
    ("async.jitter", Kind::Int, "3"),
    ("async.compute_cost", Kind::Int, "10"),
    ("async.fetch_timeout", Kind::Int, "1000"),
    ("async.tcp_fetch_timeout_ms", Kind::Int, "5000"),
    ("async.tcp_ack_timeout_ms", Kind::Int, "10000"),
    ("async.connect_attempts", Kind::Int, "6"),
    ("async.backoff_ms", Kind::Int, "50"),
    ("eval.pos_dir", Kind::Text, ""),
    ("eval.neg_dir", Kind::Text, ""),
    ("eval.ratio", Kind::Real, "0.35205405405405404"),
    ("eval.total", Kind::Int, "0"),
    ("eval.n_bins", Kind::Int, "50"),
    ("eval.n_hist", Kind::Int, "1"),
    ("eval.baseline_filters", Kind::Int, "1000"),
    ("eval.invariance_stimuli", Kind::Int, "10"),
    ("eval.scales", Kind::RealList, ""),
    ("eval.shifts", Kind::RealList, ""),
    ("eval.rotation_dir", Kind::Text, ""),
    (
        "visualize.mode",
        Kind::Choice(&["top-stimuli", "optimal"]),
        "top-stimuli",
    ),
    ("visualize.neuron", Kind::Int, "0"),
    ("visualize.k", Kind::Int, "48"),
    ("sphere.initial_step", Kind::Real, "1.0"),
    ("sphere.shrink_factor", Kind::Real, "0.5"),
    ("sphere.max_iters", Kind::Int, "500"),
    ("sphere.convergence_tol", Kind::Real, "0.000001"),
    ("sphere.max_backtracks", Kind::Int, "40"),
    (
        "sweep.axis",
        Kind::Choice(&["rf_size", "num_maps"]),
        "rf_size",
    ),
    ("sweep.values", Kind::IntList, ""),
    ("suphead.data_dir", Kind::Text, ""),
    ("suphead.n_classes", Kind::Int, "0"),
    ("suphead.pretrain_steps", Kind::Int, "200"),
    ("suphead.head_lr", Kind::Real, "0.05"),
    ("suphead.head_steps", Kind::Int, "500"),
    ("suphead.head_minibatch", Kind::Int, "16"),
    ("suphead.ft_lr", Kind::Real, "0.001"),
    ("suphead.ft_steps", Kind::Int, "100"),
    ("suphead.ft_minibatch", Kind::Int, "16"),
];

pub const RESOLVED_NAME: &str = "resolved_config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, _, v)| (k, v.to_string())).collect(),
        }
    }
}

fn lookup(key: &str) -> Option<(&'static str, Kind)> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|&(k, kind, _)| (k, kind))
}

fn check(key: &str, kind: Kind, value: &str) -> CliResult<()> {
    let bad = |what: &str| CliError::usage(format!("{key}: expected {what}, got {value:?}"));
    match kind {
        Kind::Int => value
            .parse::<u64>()
            .map(|_| ())
            .map_err(|_| bad("a nonnegative integer")),
        Kind::Real => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => Err(bad("a finite number")),
        },
        Kind::Bool => value
            .parse::<bool>()
            .map(|_| ())
            .map_err(|_| bad("true or false")),
        Kind::Text => Ok(()),
        Kind::IntList => split_list(value)
            .try_for_each(|v| v.parse::<u64>().map(|_| ()).map_err(|_| bad("integers"))),
        Kind::RealList => split_list(value).try_for_each(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(()),
            _ => Err(bad("numbers")),
        }),
        Kind::Choice(opts) if opts.contains(&value) => Ok(()),
        Kind::Choice(opts) => Err(bad(&format!("one of {}", opts.join("|")))),
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    /// Parses config text on top of the defaults. Unknown keys, malformed
    /// lines, repeated keys and ill-typed values are errors naming the key.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "config line {}: expected `section.key = value`",
                    n + 1
                ))
            })?;
            let key = key.trim();
            if key.matches('.').count() != 1 {
                return Err(CliError::usage(format!(
                    "config line {}: key {key:?} must be `section.key`",
                    n + 1
                )));
            }
            if let Some(prev) = seen.insert(key.to_string(), n + 1) {
                return Err(CliError::usage(format!(
                    "config key {key} repeated on lines {prev} and {}",
                    n + 1
                )));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Loads `path` when given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let (k, kind) =
            lookup(key).ok_or_else(|| CliError::usage(format!("unknown config key: {key}")))?;
        check(k, kind, value)?;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    /// Every key with its effective value.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for &(k, _, _) in KEYS {
            let s = k.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            let _ = writeln!(out, "{k} = {}", self.values[k]);
        }
        out
    }

    /// Writes the resolved config into `dir` and returns its path.
    pub fn write_resolved(&self, dir: &Path) -> CliResult<PathBuf> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        let path = dir.join(RESOLVED_NAME);
        std::fs::write(&path, self.render())
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn int(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn real(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    /// A path value, `None` when empty.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        Some(self.raw(key))
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
    }

    pub fn ints(&self, key: &str) -> Vec<usize> {
        split_list(self.raw(key))
            .map(|v| v.parse().expect("validated on set"))
            .collect()
    }

    pub fn reals(&self, key: &str) -> Vec<f64> {
        split_list(self.raw(key))
            .map(|v| v.parse().expect("validated on set"))
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.u64("run.seed")
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [
            self.int("net.input_height"),
            self.int("net.input_width"),
            self.int("net.input_maps"),
        ]
    }

    pub fn stage_spec(&self) -> StageSpec {
        StageSpec {
            rf_size: self.int("net.rf_size"),
            stride: self.int("net.stride"),
            num_maps: self.int("net.num_maps"),
            pool_size: self.int("net.pool_size"),
            lcn_window: self.int("net.lcn_window"),
            lcn_floor_c: self.real("net.lcn_floor_c"),
            sparsity_lambda: self.real("net.sparsity_lambda"),
            sparsity_epsilon: self.real("net.sparsity_epsilon"),
        }
    }

    /// `net.stages` copies of the stage spec chained from the input shape.
    pub fn network(&self) -> CliResult<NetworkConfig> {
        let specs = vec![self.stage_spec(); self.int("net.stages")];
        Ok(NetworkConfig::chain(self.input_shape(), &specs)?)
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.real("sgd.learning_rate") as f32,
            minibatch_size: self.int("sgd.minibatch_size"),
            max_steps: self.int("sgd.max_steps"),
            seed: self.seed(),
        }
    }

    pub fn async_config(&self) -> AsyncConfig {
        AsyncConfig {
            n_replicas: self.int("async.n_replicas"),
            n_shards: self.int("async.n_shards"),
            fetch_period: self.int("async.fetch_period"),
            push_period: self.int("async.push_period"),
            sgd: self.sgd(),
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            latency: self.u64("async.latency"),
            jitter: self.u64("async.jitter"),
            compute_cost: self.u64("async.compute_cost"),
            fetch_timeout: self.u64("async.fetch_timeout"),
            slow_shard: None,
            kill: None,
            seed: self.seed(),
        }
    }

    pub fn tcp_options(&self) -> TcpOptions {
        TcpOptions {
            fetch_timeout: Duration::from_millis(self.u64("async.tcp_fetch_timeout_ms")),
            ack_timeout: Duration::from_millis(self.u64("async.tcp_ack_timeout_ms")),
            connect_attempts: self.int("async.connect_attempts") as u32,
            backoff: Duration::from_millis(self.u64("async.backoff_ms")),
        }
    }

    pub fn line_search(&self) -> LineSearchConfig {
        LineSearchConfig {
            initial_step: self.real("sphere.initial_step"),
            shrink_factor: self.real("sphere.shrink_factor"),
            max_iters: self.int("sphere.max_iters"),
            convergence_tol: self.real("sphere.convergence_tol"),
            max_backtracks: self.int("sphere.max_backtracks"),
        }
    }

    pub fn sweep_axis(&self) -> SweepAxis {
        match self.text("sweep.axis") {
            "num_maps" => SweepAxis::NumMaps,
            _ => SweepAxis::RfSize,
        }
    }

    pub fn head(&self) -> HeadConfig {
        HeadConfig {
            learning_rate: self.real("suphead.head_lr"),
            steps: self.int("suphead.head_steps"),
            minibatch_size: self.int("suphead.head_minibatch"),
            seed: self.seed(),
        }
    }

    pub fn finetune(&self) -> FineTuneConfig {
        FineTuneConfig {
            learning_rate: self.real("suphead.ft_lr"),
            steps: self.int("suphead.ft_steps"),
            minibatch_size: self.int("suphead.ft_minibatch"),
            seed: self.seed(),
        }
    }
}
