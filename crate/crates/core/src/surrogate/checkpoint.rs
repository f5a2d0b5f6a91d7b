//! Binary checkpoint: magic, version, a JSON header, then named tensors as
//! length-prefixed little-endian `f64` arrays.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Normalization, SurrogateModel, TensorSpec};
use crate::datagen::Family;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QSURMODL";
pub const VERSION: u32 = 1;
/// Guards against allocating absurd buffers from a corrupt length field.
const MAX_FIELD: u64 = 1 << 28;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    family: Family,
    normalization: Normalization,
    tensors: Vec<TensorSpec>,
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = get_u64(r)?;
    if n > MAX_FIELD {
        return Err(Error::Format(format!("length field {n} is implausible")));
    }
    Ok(n as usize)
}

pub(super) fn write<W: Write>(model: &SurrogateModel, w: &mut W) -> Result<()> {
    let header = Header {
        config: model.config.clone(),
        family: model.family,
        normalization: model.normalization.clone(),
        tensors: model.net.specs.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u64(w, json.len() as u64)?;
    w.write_all(&json)?;
    for (spec, data) in model.tensors() {
        put_u64(w, spec.name.len() as u64)?;
        w.write_all(spec.name.as_bytes())?;
        put_u64(w, data.len() as u64)?;
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(super) fn read<R: Read>(r: &mut R) -> Result<SurrogateModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a surrogate checkpoint".into()));
    }
    let mut vb = [0u8; 4];
    r.read_exact(&mut vb)?;
    let version = u32::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let hlen = get_len(r)?;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let expected = super::Network::new(&header.config)?;
    if header.tensors.len() != expected.specs.len()
        || header.tensors.iter().zip(&expected.specs).any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(Error::Format("tensor table does not match the config".into()));
    }
    let mut weights = Vec::with_capacity(expected.n_params);
    for spec in &expected.specs {
        let nlen = get_len(r)?;
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name)?;
        if name != spec.name.as_bytes() {
            return Err(Error::Format(format!("expected tensor `{}`", spec.name)));
        }
        let count = get_len(r)?;
        if count != spec.len() {
            return Err(Error::Format(format!("tensor `{}` has {count} values, expected {}", spec.name, spec.len())));
        }
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        weights.extend(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))));
    }
    SurrogateModel::from_parts(header.config, header.family, header.normalization, weights)
}
