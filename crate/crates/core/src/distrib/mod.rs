//! Model-parallel parameter shards and data-parallel replicas running
//! asynchronous SGD, over a deterministic in-process scheduler or TCP.

pub mod partition;
pub mod replica;
pub mod shard;
pub mod sim;
pub mod tcp;
pub mod wire;

use std::sync::Arc;

pub use partition::{partition_parameters, PartitionPlan};
pub use replica::ReplicaCore;
pub use shard::ShardState;
pub use sim::{run_simulated, SimOptions, SimReport};
pub use tcp::{fetch_all, run_tcp_replica, run_tcp_training, serve_shard, TcpOptions, TcpReplicaReport, TcpRun};

use crate::error::{Error, Result};
use crate::netcore::{NetworkConfig, NetworkParams};
use crate::optim::SgdConfig;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncConfig {
    pub n_replicas: usize,
    pub n_shards: usize,
    pub fetch_period: usize,
    pub push_period: usize,
    /// `max_steps` is the per-replica budget.
    pub sgd: SgdConfig,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        Self {
            n_replicas: 2,
            n_shards: 2,
            fetch_period: 1,
            push_period: 1,
            sgd: SgdConfig::default(),
        }
    }
}

impl AsyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicas == 0 || self.n_shards == 0 {
            return Err(Error::config("n_replicas and n_shards must be positive"));
        }
        if self.fetch_period == 0 || self.push_period == 0 {
            return Err(Error::config("fetch and push periods must be at least 1"));
        }
        Ok(())
    }
}

/// One row of a replica's metrics trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaRow {
    pub replica: usize,
    pub step: usize,
    pub objective: f64,
    /// Virtual ticks in simulation mode, milliseconds over sockets.
    pub time: u64,
}

/// Round-robin split: example `i` goes to replica `i mod n`.
pub fn split_round_robin(data: &[Tensor], n: usize) -> Result<Vec<Vec<Tensor>>> {
    if n == 0 || data.len() < n {
        return Err(Error::data(format!(
            "{} examples cannot be split into {n} nonempty portions",
            data.len()
        )));
    }
    let mut parts = vec![Vec::new(); n];
    for (i, t) in data.iter().enumerate() {
        parts[i % n].push(t.clone());
    }
    Ok(parts)
}

/// Initial shard states: shard `p` holds partition `p` of the seeded
/// initialization.
pub fn initial_shards(net_cfg: &NetworkConfig, cfg: &AsyncConfig, plan: &PartitionPlan) -> Result<Vec<ShardState>> {
    let init = NetworkParams::init(net_cfg.clone(), cfg.sgd.seed)?;
    (0..cfg.n_shards)
        .map(|p| Ok(ShardState::new(p, plan.gather(&init, p)?, cfg.sgd.learning_rate)))
        .collect()
}

/// Reassembles full parameters from shard fragments.
pub fn assemble(net_cfg: &NetworkConfig, seed: u64, plan: &PartitionPlan, shards: &[ShardState]) -> Result<NetworkParams> {
    let mut params = NetworkParams::init(net_cfg.clone(), seed)?;
    for s in shards {
        plan.scatter(&mut params, s.shard_id, &s.snapshot(&[])?)?;
    }
    Ok(params)
}

#[derive(Debug, Clone)]
pub struct AsyncRun {
    pub params: NetworkParams,
    pub trace: Vec<ReplicaRow>,
    pub shard_versions: Vec<u64>,
}

/// Asynchronous training under the deterministic scheduler.
pub fn run_async_training(dataset: &[Tensor], net_cfg: &NetworkConfig, cfg: &AsyncConfig, opts: &SimOptions) -> Result<AsyncRun> {
    let report = run_simulated(dataset, net_cfg, cfg, opts)?;
    Ok(AsyncRun {
        params: report.params,
        trace: report.trace,
        shard_versions: report.shard_versions,
    })
}

pub fn build_replicas(dataset: &[Tensor], net_cfg: &NetworkConfig, cfg: &AsyncConfig) -> Result<(Arc<PartitionPlan>, Vec<ReplicaCore>)> {
    cfg.validate()?;
    let plan = Arc::new(partition_parameters(net_cfg, cfg.n_shards)?);
    let replicas = split_round_robin(dataset, cfg.n_replicas)?
        .into_iter()
        .enumerate()
        .map(|(r, part)| ReplicaCore::new(r, part, net_cfg, cfg, plan.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((plan, replicas))
}
