//! Locality-based split of the learnable weights into vertical image strips.

use std::collections::BTreeMap;

use crate::distrib::wire::NamedTensor;
use crate::error::{Error, Result};
use crate::netcore::{NetworkConfig, NetworkParams, StageGrads};
use crate::tensor::Tensor;

/// A contiguous run of flat indices inside one learnable tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRange {
    pub key: String,
    pub start: usize,
    pub end: usize,
    pub partition: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub n_partitions: usize,
    /// Ranges in key order then index order; together they tile every
    /// learnable tensor exactly once.
    pub ranges: Vec<ParamRange>,
    /// Flat indices owned by each partition, per key.
    owned: Vec<BTreeMap<String, Vec<usize>>>,
}

/// Column `ox` of a stage with `width` receptive-field columns belongs to
/// strip `floor(ox · n / width)`.
pub fn column_partition(ox: usize, width: usize, n: usize) -> usize {
    ox * n / width
}

pub fn partition_parameters(cfg: &NetworkConfig, n_partitions: usize) -> Result<PartitionPlan> {
    cfg.validate()?;
    let columns = cfg.stages[0].simple_width();
    if n_partitions == 0 || n_partitions > columns {
        return Err(Error::config(format!(
            "{n_partitions} partitions requested for {columns} receptive-field columns"
        )));
    }
    let mut ranges: Vec<ParamRange> = Vec::new();
    let mut owned = vec![BTreeMap::<String, Vec<usize>>::new(); n_partitions];
    for (i, stage) in cfg.stages.iter().enumerate() {
        let block = stage.num_maps * stage.filter_len();
        let (sh, sw) = (stage.simple_height(), stage.simple_width());
        for which in ["w1", "w2"] {
            let key = format!("s{}.{which}", i + 1);
            for oy in 0..sh {
                for ox in 0..sw {
                    let p = column_partition(ox, sw, n_partitions);
                    let start = (oy * sw + ox) * block;
                    let end = start + block;
                    match ranges.last_mut() {
                        Some(r) if r.key == key && r.partition == p && r.end == start => r.end = end,
                        _ => ranges.push(ParamRange { key: key.clone(), start, end, partition: p }),
                    }
                    owned[p].entry(key.clone()).or_default().extend(start..end);
                }
            }
        }
    }
    Ok(PartitionPlan { n_partitions, ranges, owned })
}

fn grad_ref<'a>(grads: &'a [StageGrads], key: &str) -> Option<&'a Tensor> {
    let (stage, which) = crate::netcore::parse_learnable_key(key)?;
    let g = grads.get(stage)?;
    Some(if which == 1 { &g.w1 } else { &g.w2 })
}

impl PartitionPlan {
    pub fn partition_of(&self, key: &str, index: usize) -> Option<usize> {
        self.ranges
            .iter()
            .find(|r| r.key == key && (r.start..r.end).contains(&index))
            .map(|r| r.partition)
    }

    /// Keys with at least one entry in `partition`.
    pub fn keys(&self, partition: usize) -> Vec<String> {
        self.owned[partition].keys().cloned().collect()
    }

    pub fn indices(&self, key: &str, partition: usize) -> &[usize] {
        self.owned[partition].get(key).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn gather_from<'t>(&self, partition: usize, lookup: impl Fn(&str) -> Option<&'t Tensor>) -> Result<Vec<NamedTensor>> {
        self.owned[partition]
            .iter()
            .map(|(key, idx)| {
                let src = lookup(key).ok_or_else(|| Error::geometry(format!("no tensor for {key}")))?;
                let data = idx.iter().map(|&i| src.data()[i]).collect();
                Ok(NamedTensor::new(key.clone(), Tensor::new(vec![idx.len()], data)?))
            })
            .collect()
    }

    /// The 1-D fragments of `params` owned by `partition`.
    pub fn gather(&self, params: &NetworkParams, partition: usize) -> Result<Vec<NamedTensor>> {
        self.gather_from(partition, |k| params.learnable_ref(k))
    }

    pub fn gather_grads(&self, grads: &[StageGrads], partition: usize) -> Result<Vec<NamedTensor>> {
        self.gather_from(partition, |k| grad_ref(grads, k))
    }

    /// Writes fragments received from `partition` back into `params`.
    pub fn scatter(&self, params: &mut NetworkParams, partition: usize, fragments: &[NamedTensor]) -> Result<()> {
        for nt in fragments {
            let idx = self.owned[partition]
                .get(&nt.name)
                .ok_or_else(|| Error::Network(format!("partition {partition} does not own {}", nt.name)))?;
            if nt.tensor.len() != idx.len() {
                return Err(Error::Network(format!(
                    "fragment {} has {} values, expected {}",
                    nt.name,
                    nt.tensor.len(),
                    idx.len()
                )));
            }
            let dst = params
                .learnable_mut(&nt.name)
                .ok_or_else(|| Error::Network(format!("unknown key {}", nt.name)))?;
            let out = dst.data_mut();
            for (&i, &v) in idx.iter().zip(nt.tensor.data()) {
                out[i] = v;
            }
        }
        Ok(())
    }
}
