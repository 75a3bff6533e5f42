//! Transport-independent replica logic: when to fetch, how to accumulate,
//! when to push.

use std::sync::Arc;

use crate::distrib::partition::PartitionPlan;
use crate::distrib::wire::{NamedTensor, WireMessage};
use crate::distrib::AsyncConfig;
use crate::error::{Error, Result};
use crate::netcore::{joint_objective_and_gradient, NetworkConfig, NetworkParams, StageGrads};
use crate::optim::sgd::gather;
use crate::optim::MinibatchSampler;
use crate::tensor::Tensor;

/// One replica's view of training. The parameters it holds are the most
/// recent fragments received from each shard, possibly of mixed versions.
pub struct ReplicaCore {
    pub id: usize,
    data: Vec<Tensor>,
    sampler: MinibatchSampler,
    cfg: AsyncConfig,
    plan: Arc<PartitionPlan>,
    params: NetworkParams,
    known_versions: Vec<Option<u64>>,
    acc: Vec<StageGrads>,
    step: usize,
    pushes: usize,
}

impl ReplicaCore {
    /// Starts from the seeded initialization, which is also what every
    /// shard holds at version 0.
    pub fn new(id: usize, data: Vec<Tensor>, net_cfg: &NetworkConfig, cfg: &AsyncConfig, plan: Arc<PartitionPlan>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::data(format!("replica {id} has no data")));
        }
        cfg.validate()?;
        cfg.sgd.validate(data.len())?;
        let params = NetworkParams::init(net_cfg.clone(), cfg.sgd.seed)?;
        let acc = net_cfg.stages.iter().map(StageGrads::zeros).collect();
        Ok(Self {
            id,
            sampler: MinibatchSampler::new(data.len(), cfg.sgd.minibatch_size, cfg.sgd.seed, id),
            data,
            cfg: *cfg,
            known_versions: vec![None; plan.n_partitions],
            plan,
            params,
            acc,
            step: 0,
            pushes: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn done(&self) -> bool {
        self.step >= self.cfg.sgd.max_steps
    }

    pub fn pushes(&self) -> usize {
        self.pushes
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn n_shards(&self) -> usize {
        self.plan.n_partitions
    }

    pub fn fetch_due(&self) -> bool {
        !self.done() && self.step.is_multiple_of(self.cfg.fetch_period)
    }

    pub fn fetch_request(&self, shard: usize) -> WireMessage {
        WireMessage::FetchParams {
            shard_id: shard as u32,
            keys: self.plan.keys(shard),
        }
    }

    /// Installs fragments from `shard` unless they are older than what is
    /// already held.
    pub fn absorb(&mut self, shard: usize, version: u64, tensors: &[NamedTensor]) -> Result<()> {
        if matches!(self.known_versions[shard], Some(v) if v > version) {
            return Ok(());
        }
        self.plan.scatter(&mut self.params, shard, tensors)?;
        self.known_versions[shard] = Some(version);
        Ok(())
    }

    /// Runs one minibatch step. Returns the minibatch objective and the
    /// pushes due after it, addressed by shard.
    pub fn compute(&mut self) -> Result<(f64, Vec<(usize, WireMessage)>)> {
        if self.done() {
            return Err(Error::argument(format!("replica {} has no steps left", self.id)));
        }
        let batch = gather(&self.data, &self.sampler.next_batch());
        let eval = joint_objective_and_gradient(&batch, &self.params)?;
        for (a, g) in self.acc.iter_mut().zip(&eval.grads) {
            a.w1.add_scaled(&g.w1, 1.0)?;
            a.w2.add_scaled(&g.w2, 1.0)?;
        }
        let step = self.step;
        self.step += 1;
        let mut out = Vec::new();
        if self.step.is_multiple_of(self.cfg.push_period) || self.done() {
            for shard in 0..self.plan.n_partitions {
                out.push((
                    shard,
                    WireMessage::PushGrads {
                        replica_id: self.id as u32,
                        step: step as u64,
                        tensors: self.plan.gather_grads(&self.acc, shard)?,
                    },
                ));
            }
            for a in &mut self.acc {
                a.w1 = Tensor::zeros(a.w1.shape());
                a.w2 = Tensor::zeros(a.w2.shape());
            }
            self.pushes += 1;
        }
        Ok((eval.total, out))
    }
}
