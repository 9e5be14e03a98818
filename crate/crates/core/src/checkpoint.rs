//! Versioned checkpoint files: model spec, training metadata, parameters
//! and optional Adam state.
//!
//! Layout: `V4DC`, u32 version, u32-length-prefixed TOML header, u32 count of
//! `(u32-length name, tensor record)` parameter entries, then a u8 flag
//! followed (if set) by the optimizer step, its four hyperparameters and
//! `(name, first moment, second moment)` entries.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::Normalization;
use crate::model::{build_model, ModelSpec, Network, ParameterStore};
use crate::optim::{AdamConfig, AdamState, TrainConfig};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"V4DC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_val_mae_um: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    input_shape: Vec<usize>,
    model: ModelSpec,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: CheckpointMeta,
    pub optimizer: Option<AdamState>,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    write_u32(w, bytes.len() as u32)?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R, limit: usize) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > limit {
        return Err(Error::Format(format!("string of {n} bytes exceeds {limit}")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

fn write_store<W: Write>(w: &mut W, store: &ParameterStore) -> Result<()> {
    write_u32(w, store.len() as u32)?;
    for (name, t) in store {
        write_bytes(w, name.as_bytes())?;
        t.write_record(&mut *w)?;
    }
    Ok(())
}

fn read_store<R: Read>(r: &mut R) -> Result<ParameterStore> {
    let n = read_u32(r)?;
    let mut store = ParameterStore::new();
    for _ in 0..n {
        let name = read_string(r, 1 << 12)?;
        let t = Tensor::read_record(&mut *r)?;
        if store.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate entry {name}")));
        }
    }
    Ok(store)
}

impl Checkpoint {
    pub fn new(network: Network, meta: CheckpointMeta) -> Self {
        Self { network, meta, optimizer: None }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.network.spec().ok_or_else(|| invalid!("only networks built from a model spec can be checkpointed"))?;
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            input_shape: self.network.input_shape().to_vec(),
            model: spec.clone(),
            meta: self.meta.clone(),
        };
        let text = toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        write_u32(&mut w, CHECKPOINT_VERSION)?;
        write_bytes(&mut w, text.as_bytes())?;
        write_store(&mut w, self.network.params())?;
        match &self.optimizer {
            None => w.write_all(&[0])?,
            Some(state) => {
                w.write_all(&[1])?;
                w.write_all(&state.step.to_le_bytes())?;
                let c = state.config;
                for v in [c.lr, c.beta1, c.beta2, c.eps] {
                    w.write_all(&v.to_le_bytes())?;
                }
                write_store(&mut w, &state.first)?;
                write_store(&mut w, &state.second)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version == 0 || version > CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: CHECKPOINT_VERSION });
        }
        let text = read_string(&mut r, 1 << 20)?;
        let header: Header = toml::from_str(&text).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Format(format!("header version {} disagrees with file version {version}", header.format_version)));
        }
        let mut network = build_model(&header.model, &header.input_shape)?;
        network.load_params(read_store(&mut r)?)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let optimizer = match flag[0] {
            0 => None,
            1 => {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                let step = u64::from_le_bytes(b);
                let mut v = [0.0; 4];
                for x in &mut v {
                    r.read_exact(&mut b)?;
                    *x = f64::from_le_bytes(b);
                }
                let config = AdamConfig { lr: v[0], beta1: v[1], beta2: v[2], eps: v[3] };
                let first = read_store(&mut r)?;
                let second = read_store(&mut r)?;
                for store in [&first, &second] {
                    let mut probe = network.clone();
                    probe.load_params(store.clone()).map_err(|e| Error::Format(format!("optimizer state: {e}")))?;
                }
                Some(AdamState { config, step, first, second })
            }
            f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
        };
        Ok(Self { network, meta: header.meta, optimizer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| invalid!("cannot open checkpoint {}: {e}", path.display()))?;
        Self::read(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use crate::ops::ConvMode;

    fn small() -> Network {
        let mut spec = ModelSpec::new(Family::ResNet, ConvMode::ModeF4D).with_seed(3);
        spec.stem_channels = 2;
        spec.module_channel_multipliers = vec![1];
        spec.blocks_per_module = vec![1];
        build_model(&spec, &[3, 4, 4, 4, 1]).unwrap()
    }

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            normalization: Normalization { mean: [1.0, 2.0, 3.0], scale: [0.5, 0.25, 0.75] },
            train: Some(TrainConfig { epochs: 350, batch_size: 18, ..TrainConfig::default() }),
            best_epoch: Some(4),
            best_val_mae_um: Some(12.5),
        }
    }

    #[test]
    fn round_trip_with_optimizer() {
        let net = small();
        let mut ck = Checkpoint::new(net.clone(), meta());
        let mut st = AdamState::new(net.params(), AdamConfig::default()).unwrap();
        st.step = 7;
        ck.optimizer = Some(st);
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back.network.params(), net.params());
        assert_eq!(back.meta, ck.meta);
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!(back.meta.train.unwrap().epochs, 350);
    }

    #[test]
    fn newer_version_and_garbage_rejected() {
        let mut buf = Vec::new();
        Checkpoint::new(small(), meta()).write(&mut buf).unwrap();
        let mut newer = buf.clone();
        newer[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Checkpoint::read(newer.as_slice()), Err(Error::UnsupportedVersion { found: 2, .. })));
        assert!(Checkpoint::read(&b"V4DT...."[..]).is_err());
        buf.truncate(buf.len() - 10);
        assert!(Checkpoint::read(buf.as_slice()).is_err());
    }

    #[test]
    fn specless_network_refused() {
        let ck = Checkpoint::new(Network::linear(3, 3, 0).unwrap(), meta());
        assert!(ck.write(Vec::new()).is_err());
    }
}
