//! Parameter shard: owns a set of 1-D fragments and applies pushed
//! gradients one update at a time.

use std::collections::BTreeMap;

use crate::distrib::wire::{NamedTensor, WireMessage};
use crate::error::{Error, Result};
use crate::optim::sgd::apply_update;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ShardState {
    pub shard_id: usize,
    pub values: BTreeMap<String, Tensor>,
    pub version: u64,
    pub learning_rate: f32,
}

impl ShardState {
    pub fn new(shard_id: usize, fragments: Vec<NamedTensor>, learning_rate: f32) -> Self {
        Self {
            shard_id,
            values: fragments.into_iter().map(|nt| (nt.name, nt.tensor)).collect(),
            version: 0,
            learning_rate,
        }
    }

    /// `value ← value − lr·gradient` for every key in `update`. An unknown
    /// key or a shape mismatch rejects the whole update and leaves the
    /// version unchanged.
    pub fn apply(&mut self, update: &[NamedTensor], lr: f32) -> Result<u64> {
        for nt in update {
            let cur = self
                .values
                .get(&nt.name)
                .ok_or_else(|| Error::Network(format!("shard {}: unknown key {}", self.shard_id, nt.name)))?;
            nt.tensor.ensure_shape(cur.shape(), &nt.name)?;
            nt.tensor.ensure_finite(&nt.name)?;
        }
        for nt in update {
            let cur = self.values.get_mut(&nt.name).expect("checked above");
            apply_update(cur, &nt.tensor, lr);
        }
        self.version += 1;
        Ok(self.version)
    }

    /// Current values for `keys`, or for every key when `keys` is empty.
    pub fn snapshot(&self, keys: &[String]) -> Result<Vec<NamedTensor>> {
        if keys.is_empty() {
            return Ok(self
                .values
                .iter()
                .map(|(k, v)| NamedTensor::new(k.clone(), v.clone()))
                .collect());
        }
        keys.iter()
            .map(|k| {
                self.values
                    .get(k)
                    .map(|v| NamedTensor::new(k.clone(), v.clone()))
                    .ok_or_else(|| Error::Network(format!("shard {}: unknown key {k}", self.shard_id)))
            })
            .collect()
    }

    /// Serves one request. Fetches get a `ParamsResponse`, pushes an `Ack`
    /// carrying the resulting version.
    pub fn handle(&mut self, msg: WireMessage) -> Result<WireMessage> {
        match msg {
            WireMessage::FetchParams { keys, .. } => Ok(WireMessage::ParamsResponse {
                version: self.version,
                tensors: self.snapshot(&keys)?,
            }),
            WireMessage::PushGrads { tensors, .. } => {
                let lr = self.learning_rate;
                let version = self.apply(&tensors, lr)?;
                Ok(WireMessage::Ack { version })
            }
            other => Err(Error::Network(format!(
                "shard {} cannot serve message tag 0x{:02x}",
                self.shard_id,
                other.tag()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shard() -> ShardState {
        ShardState::new(0, vec![NamedTensor::new("s1.w1", Tensor::full(&[3], 1.0))], 0.5)
    }

    #[test]
    fn zero_update_bumps_version_only() {
        let mut s = shard();
        let before = s.values.clone();
        s.apply(&[NamedTensor::new("s1.w1", Tensor::zeros(&[3]))], 0.5).unwrap();
        assert_eq!(s.values, before);
        assert_eq!(s.version, 1);
    }

    #[test]
    fn unknown_key_rejects_whole_update() {
        let mut s = shard();
        let before = s.clone();
        let upd = [
            NamedTensor::new("s1.w1", Tensor::full(&[3], 1.0)),
            NamedTensor::new("s9.w1", Tensor::full(&[3], 1.0)),
        ];
        assert!(s.apply(&upd, 0.5).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn fetch_then_push() {
        let mut s = shard();
        let r = s.handle(WireMessage::FetchParams { shard_id: 0, keys: vec![] }).unwrap();
        assert!(matches!(r, WireMessage::ParamsResponse { version: 0, .. }));
        let r = s
            .handle(WireMessage::PushGrads {
                replica_id: 0,
                step: 0,
                tensors: vec![NamedTensor::new("s1.w1", Tensor::full(&[3], 2.0))],
            })
            .unwrap();
        assert_eq!(r, WireMessage::Ack { version: 1 });
        assert_eq!(s.values["s1.w1"].data(), &[0.0, 0.0, 0.0]);
    }
}
