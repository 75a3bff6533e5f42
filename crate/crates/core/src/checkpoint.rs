//! Binary checkpoint: magic `LSAE`, format version, seed, network
//! configuration and a named tensor table.

use std::fs;
use std::path::Path;

use crate::data::Whitening;
use crate::distrib::wire::{put_table, NamedTensor, Reader, WireError};
use crate::error::{Error, Result};
use crate::netcore::{NetworkConfig, NetworkParams, StageConfig, StageParams};

pub const MAGIC: &[u8; 4] = b"LSAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub params: NetworkParams,
    pub whitening: Option<Whitening>,
}

fn put_stage(out: &mut Vec<u8>, s: &StageConfig) {
    for v in [
        s.input_height,
        s.input_width,
        s.input_maps,
        s.rf_size,
        s.stride,
        s.num_maps,
        s.pool_size,
        s.lcn_window,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in [s.lcn_floor_c, s.sparsity_lambda, s.sparsity_epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_stage(r: &mut Reader) -> Result<StageConfig, WireError> {
    let mut ints = [0usize; 8];
    for v in &mut ints {
        *v = r.u64("stage field")? as usize;
    }
    Ok(StageConfig {
        input_height: ints[0],
        input_width: ints[1],
        input_maps: ints[2],
        rf_size: ints[3],
        stride: ints[4],
        num_maps: ints[5],
        pool_size: ints[6],
        lcn_window: ints[7],
        lcn_floor_c: r.f64("lcn floor")?,
        sparsity_lambda: r.f64("lambda")?,
        sparsity_epsilon: r.f64("epsilon")?,
    })
}

impl Checkpoint {
    pub fn new(seed: u64, params: NetworkParams) -> Self {
        Self {
            seed,
            params,
            whitening: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let stages = &self.params.config.stages;
        out.extend_from_slice(&(stages.len() as u32).to_le_bytes());
        for s in stages {
            put_stage(&mut out, s);
        }
        let mut table = Vec::new();
        for (i, p) in self.params.stages.iter().enumerate() {
            let n = i + 1;
            table.push(NamedTensor::new(format!("s{n}.w1"), p.w1_encode.clone()));
            table.push(NamedTensor::new(format!("s{n}.w2"), p.w2_decode.clone()));
            table.push(NamedTensor::new(format!("s{n}.h"), p.h_pool.clone()));
            table.push(NamedTensor::new(format!("s{n}.g"), p.g_window.clone()));
        }
        if let Some(w) = &self.whitening {
            table.push(NamedTensor::new("whiten.mean", w.mean.clone()));
            table.push(NamedTensor::new("whiten.map", w.map.clone()));
        }
        put_table(&mut out, &table);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |e: WireError| Error::Checkpoint(e.to_string());
        let mut r = Reader::new(bytes);
        if r.take(4, "magic").map_err(bad)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32("version").map_err(bad)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let seed = r.u64("seed").map_err(bad)?;
        let n = r.u32("stage count").map_err(bad)? as usize;
        if n == 0 || n > crate::netcore::MAX_STAGES {
            return Err(Error::Checkpoint(format!("stage count {n} out of range")));
        }
        let stages = (0..n).map(|_| read_stage(&mut r)).collect::<Result<Vec<_>, _>>().map_err(bad)?;
        let config = NetworkConfig::new(stages)?;
        let mut table = r.table().map_err(bad)?;
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        let mut take = |name: &str| {
            table
                .iter()
                .position(|t| t.name == name)
                .map(|i| table.swap_remove(i).tensor)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let mut params = Vec::with_capacity(n);
        for i in 1..=n {
            params.push(StageParams {
                w1_encode: take(&format!("s{i}.w1"))?,
                w2_decode: take(&format!("s{i}.w2"))?,
                h_pool: take(&format!("s{i}.h"))?,
                g_window: take(&format!("s{i}.g"))?,
            });
        }
        let whitening = match (take("whiten.mean"), take("whiten.map")) {
            (Ok(mean), Ok(map)) => Some(Whitening::new(mean, map)?),
            (Err(_), Err(_)) => None,
            _ => return Err(Error::Checkpoint("incomplete whitening transform".into())),
        };
        if let Some(extra) = table.first() {
            return Err(Error::Checkpoint(format!("unexpected tensor {}", extra.name)));
        }
        let params = NetworkParams::new(config, params)?;
        if let Some(w) = &whitening {
            let [h, ww, c] = params.config.input_shape();
            if w.dim() != h * ww * c {
                return Err(Error::Checkpoint("whitening size does not match network input".into()));
            }
        }
        Ok(Self {
            seed,
            params,
            whitening,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::StageSpec;
    use crate::tensor::Tensor;

    fn net() -> NetworkParams {
        let spec = StageSpec { rf_size: 3, stride: 2, num_maps: 2, pool_size: 2, lcn_window: 3, ..StageSpec::default() };
        NetworkParams::init(NetworkConfig::chain([7, 7, 1], &[spec, StageSpec { rf_size: 1, stride: 1, num_maps: 2, pool_size: 1, lcn_window: 1, ..spec }]).unwrap(), 3).unwrap()
    }

    #[test]
    fn round_trip_with_and_without_whitening() {
        let mut ck = Checkpoint::new(42, net());
        assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
        ck.whitening = Some(Whitening::new(Tensor::zeros(&[49]), Tensor::full(&[49, 49], 0.5)).unwrap());
        assert_eq!(Checkpoint::decode(&ck.encode()).unwrap(), ck);
    }

    #[test]
    fn header_layout() {
        let bytes = Checkpoint::new(7, net()).encode();
        assert_eq!(&bytes[..4], b"LSAE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        // two stages of 8 u64 and 3 f64 fields
        assert_eq!(u32::from_le_bytes(bytes[20 + 2 * 88..24 + 2 * 88].try_into().unwrap()), 8);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = Checkpoint::new(7, net()).encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::decode(&long).is_err());
    }
}
