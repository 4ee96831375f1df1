//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes  "FXTF"
//! version          u32      currently 1
//! config length    u32
//! config           UTF-8 JSON (model config + optimizer config)
//! tensor count     u32
//! per tensor:
//!   name length    u32
//!   name           UTF-8
//!   rank           u32
//!   dims           u64 x rank
//!   data           f32 x product(dims), little-endian
//! ```
//!
//! Model parameters come first in store order; optimizer state follows in
//! the same framing under names prefixed `adam.` (`adam.m.*`, `adam.v.*`
//! and the scalar `adam.step`).

use crate::model::{Model, ModelConfig, ModelError};
use crate::optim::{Adam, AdamConfig};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FXTF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, not a checkpoint file")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {got} (this build reads {supported})")]
    Version { got: u32, supported: u32 },
    #[error("config block: {0}")]
    Config(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    optimizer: Option<AdamConfig>,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_tensor<W: Write>(
    w: &mut W,
    name: &str,
    shape: &[usize],
    data: &[f32],
) -> Result<(), CheckpointError> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, shape.len() as u32)?;
    for &d in shape {
        write_u64(w, d as u64)?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Vec<usize>, Vec<f32>), CheckpointError> {
    let name_len = read_u32(r)? as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|e| CheckpointError::Malformed(format!("tensor name not UTF-8: {e}")))?;
    let rank = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut buf = [0u8; 4];
    for _ in 0..numel {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf));
    }
    Ok((name, shape, data))
}

pub fn save_to_writer<W: Write>(
    w: &mut W,
    model: &Model<f32>,
    optimizer: Option<&Adam<f32>>,
) -> Result<(), CheckpointError> {
    w.write_all(&MAGIC)?;
    write_u32(w, VERSION)?;
    let meta = CheckpointMeta {
        model: model.config.clone(),
        optimizer: optimizer.map(|o| o.config),
    };
    let json = serde_json::to_vec(&meta)?;
    write_u32(w, json.len() as u32)?;
    w.write_all(&json)?;

    let n_model = model.params.tensors.len() as u32;
    let n_opt = optimizer.map_or(0, |_| 2 * model.params.tensors.len() as u32 + 1);
    write_u32(w, n_model + n_opt)?;
    for t in &model.params.tensors {
        write_tensor(w, &t.name, &t.shape, &t.data)?;
    }
    if let Some(opt) = optimizer {
        let (m, v) = opt.moments();
        for (t, buf) in model.params.tensors.iter().zip(m) {
            write_tensor(w, &format!("adam.m.{}", t.name), &t.shape, buf)?;
        }
        for (t, buf) in model.params.tensors.iter().zip(v) {
            write_tensor(w, &format!("adam.v.{}", t.name), &t.shape, buf)?;
        }
        write_tensor(w, "adam.step", &[1], &[opt.step_count() as f32])?;
    }
    Ok(())
}

pub struct LoadedCheckpoint {
    pub model: Model<f32>,
    pub optimizer: Option<Adam<f32>>,
}

pub fn load_from_reader<R: Read>(r: &mut R) -> Result<LoadedCheckpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            got: version,
            supported: VERSION,
        });
    }
    let json_len = read_u32(r)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json)?;

    let count = read_u32(r)? as usize;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let (name, shape, data) = read_tensor(r)?;
        if tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(CheckpointError::Malformed(format!(
                "duplicate tensor '{name}'"
            )));
        }
    }

    let model_tensors: HashMap<String, (Vec<usize>, Vec<f32>)> = tensors
        .iter()
        .filter(|(k, _)| !k.starts_with("adam."))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let model = Model::from_named_tensors(meta.model, model_tensors)?;

    let optimizer = match meta.optimizer {
        None => None,
        Some(cfg) => {
            let mut m = Vec::with_capacity(model.params.tensors.len());
            let mut v = Vec::with_capacity(model.params.tensors.len());
            for t in &model.params.tensors {
                let grab = |prefix: &str| -> Result<Vec<f32>, CheckpointError> {
                    let key = format!("{prefix}{}", t.name);
                    let (shape, data) = tensors
                        .get(&key)
                        .ok_or_else(|| CheckpointError::Malformed(format!("missing '{key}'")))?;
                    if *shape != t.shape {
                        return Err(CheckpointError::Malformed(format!(
                            "'{key}' shape {shape:?} does not match parameter shape {:?}",
                            t.shape
                        )));
                    }
                    Ok(data.clone())
                };
                m.push(grab("adam.m.")?);
                v.push(grab("adam.v.")?);
            }
            let step = tensors
                .get("adam.step")
                .ok_or_else(|| CheckpointError::Malformed("missing 'adam.step'".into()))?
                .1
                .first()
                .copied()
                .unwrap_or(0.0) as u64;
            Some(Adam::from_state(cfg, step, m, v))
        }
    };

    Ok(LoadedCheckpoint { model, optimizer })
}

pub fn save(
    path: &Path,
    model: &Model<f32>,
    optimizer: Option<&Adam<f32>>,
) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_to_writer(&mut w, model, optimizer)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<LoadedCheckpoint, CheckpointError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    load_from_reader(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};
    use crate::optim::AdamConfig;

    fn model() -> Model<f32> {
        Model::new(ModelConfig::tiny(Variant::Relational, true))
    }

    #[test]
    fn round_trip_preserves_everything_bit_exactly() {
        let m = model();
        let mut adam: Adam<f32> = Adam::new(AdamConfig::default(), &m.params.sizes());
        // drive the optimizer so moments are nonzero
        let mut params: Vec<Vec<f32>> = m.params.tensors.iter().map(|t| t.data.clone()).collect();
        let grads: Vec<Vec<f32>> = m
            .params
            .tensors
            .iter()
            .map(|t| t.data.iter().map(|v| v * 0.5 + 0.01).collect())
            .collect();
        adam.step(&mut params, &grads).unwrap();
        let mut m = m;
        for (t, p) in m.params.tensors.iter_mut().zip(params) {
            t.data = p;
        }

        let mut buf = Vec::new();
        save_to_writer(&mut buf, &m, Some(&adam)).unwrap();
        let loaded = load_from_reader(&mut &buf[..]).unwrap();
        assert_eq!(loaded.model.params, m.params);
        assert_eq!(loaded.model.config, m.config);
        let opt = loaded.optimizer.unwrap();
        assert_eq!(opt.step_count(), 1);
        assert_eq!(opt.moments().0, adam.moments().0);
        assert_eq!(opt.moments().1, adam.moments().1);
    }

    #[test]
    fn format_is_byte_exact_per_spec() {
        let m = model();
        let mut buf = Vec::new();
        save_to_writer(&mut buf, &m, None).unwrap();

        assert_eq!(&buf[0..4], b"FXTF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        let json_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let json: serde_json::Value = serde_json::from_slice(&buf[12..12 + json_len]).unwrap();
        assert_eq!(json["model"]["d_model"], 8);
        let mut off = 12 + json_len;
        let count = u32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as usize;
        off += 4;
        assert_eq!(count, m.params.tensors.len());
        // walk each tensor record manually
        for t in &m.params.tensors {
            let name_len =
                u32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            assert_eq!(&buf[off..off + name_len], t.name.as_bytes());
            off += name_len;
            let rank = u32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            assert_eq!(rank, t.shape.len());
            for &d in &t.shape {
                let dim = u64::from_le_bytes(buf[off..off + 8].try_into().unwrap()) as usize;
                off += 8;
                assert_eq!(dim, d);
            }
            for &v in &t.data {
                let raw = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
                off += 4;
                assert_eq!(raw.to_bits(), v.to_bits());
            }
        }
        assert_eq!(off, buf.len(), "trailing bytes in checkpoint");
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let m = model();
        let mut buf = Vec::new();
        save_to_writer(&mut buf, &m, None).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            load_from_reader(&mut &bad[..]),
            Err(CheckpointError::BadMagic(_))
        ));
        let mut bad_ver = buf.clone();
        bad_ver[4] = 99;
        assert!(matches!(
            load_from_reader(&mut &bad_ver[..]),
            Err(CheckpointError::Version { .. })
        ));
    }

    #[test]
    fn truncated_file_is_malformed_not_panic() {
        let m = model();
        let mut buf = Vec::new();
        save_to_writer(&mut buf, &m, None).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(load_from_reader(&mut &buf[..]).is_err());
    }
}
