//! Self-describing little-endian checkpoint:
//!
//! ```text
//! "MDCN" | u32 version | u32 json_len | config JSON | u32 tensor_count
//! per tensor: u16 name_len | name | u8 rank | rank × u32 dims | f32 data
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::network::{bias_name, inventory, weight_name};
use super::params::{ParameterStore, Partition};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MDCN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ParameterStore<f32>, config: &ModelConfig) -> Result<Vec<u8>> {
    let json = config.to_json();
    let mut out = Vec::with_capacity(16 + json.len() + 4 * params.numel());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::contract("checkpoint", format!("parameter name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(p.dims.len() as u8);
        for &d in &p.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParameterStore<f32>, ModelConfig)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let json_len = r.u32()? as usize;
    let json_at = r.pos;
    let json = std::str::from_utf8(r.take(json_len)?).map_err(|e| Error::Format {
        offset: json_at,
        reason: format!("config is not UTF-8: {e}"),
    })?;
    let config = ModelConfig::from_json(json)?;

    let expected: HashMap<String, (Partition, Vec<usize>)> = inventory(&config)?
        .into_iter()
        .flat_map(|l| {
            let s = &l.spec;
            [
                (
                    weight_name(&s.name),
                    (l.partition, vec![s.out_c, s.in_c, s.kernel, s.kernel]),
                ),
                (bias_name(&s.name), (l.partition, vec![s.out_c])),
            ]
        })
        .collect();

    let count = r.u32()? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Format {
                offset: name_at,
                reason: format!("tensor name is not UTF-8: {e}"),
            })?
            .to_string();
        let rank = r.u8()? as usize;
        if rank > 4 {
            return Err(Error::Format {
                offset: r.pos - 1,
                reason: format!("rank {rank} exceeds 4"),
            });
        }
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let raw = r.take(4 * numel)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut shape = [1usize; 4];
        shape[..rank].copy_from_slice(&dims);
        let (partition, want) = expected.get(&name).ok_or_else(|| {
            Error::Data(format!(
                "checkpoint tensor {name} is not part of the configured network"
            ))
        })?;
        if *want != dims {
            return Err(Error::Data(format!(
                "checkpoint tensor {name} has dims {dims:?}, expected {want:?}"
            )));
        }
        let partition = *partition;
        store.insert(name, Tensor::from_vec(Shape::from(shape), data)?, dims, partition)?;
    }
    if store.len() != expected.len() {
        return Err(Error::Data(format!(
            "checkpoint holds {} tensors, configuration needs {}",
            store.len(),
            expected.len()
        )));
    }
    Ok((store, config))
}

pub fn save_checkpoint(params: &ParameterStore<f32>, config: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, config)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParameterStore<f32>, ModelConfig)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
