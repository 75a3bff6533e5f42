use super::classify::scan_all_neurons;
use super::probe::{top_activations, Probe};
use crate::error::Result;
use crate::netcore::{NetworkConfig, NetworkParams, StageSpec};
use crate::optim::{train_local, SgdConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    RfSize,
    NumMaps,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::RfSize => "rf_size",
            SweepAxis::NumMaps => "num_maps",
        }
    }
}

/// Everything a sweep point shares. Images are already preprocessed.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub input: [usize; 3],
    pub specs: Vec<StageSpec>,
    pub sgd: SgdConfig,
    pub seed: u64,
    pub train: Vec<Tensor>,
    pub eval: Vec<Tensor>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    /// `None` when the value gives an invalid geometry.
    pub accuracy: Option<f64>,
}

impl SweepSetup {
    /// Trains from the seeded initialization and returns the best top
    /// neuron's accuracy.
    pub fn train_and_score(&self, specs: &[StageSpec]) -> Result<f64> {
        let cfg = NetworkConfig::chain(self.input, specs)?;
        let net = NetworkParams::init(cfg, self.seed)?;
        let (net, _) = train_local(&self.train, net, &self.sgd)?;
        let acts = top_activations(&Probe::new(&net), &self.eval)?;
        Ok(scan_all_neurons(&acts, &self.labels)?.best().accuracy)
    }
}

/// Retrains a fresh network for each value of `axis` (applied to every
/// stage) under an identical budget.
pub fn sensitivity_sweep(setup: &SweepSetup, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let specs: Vec<StageSpec> = setup
            .specs
            .iter()
            .map(|s| match axis {
                SweepAxis::RfSize => StageSpec { rf_size: value, ..*s },
                SweepAxis::NumMaps => StageSpec { num_maps: value, ..*s },
            })
            .collect();
        if let Err(e) = NetworkConfig::chain(setup.input, &specs) {
            log::warn!("sweep {} = {value} skipped: {e}", axis.name());
            rows.push(SweepRow { value, accuracy: None });
            continue;
        }
        let acc = setup.train_and_score(&specs)?;
        log::info!("sweep {} = {value}: best accuracy {acc:.4}", axis.name());
        rows.push(SweepRow { value, accuracy: Some(acc) });
    }
    Ok(rows)
}
