// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary model container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, a JSON
//! header holding the [`ModelSpec`], then the parameters as little-endian
//! `f64` values. Analytic networks store no parameters.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Model, ModelSpec, ScalarNetwork, Transformer};

const MAGIC: &[u8; 8] = b"GCMODEL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    num_params: usize,
}

/// Write `model` to `w`.
pub fn write_model<S: Scalar, W: Write>(model: &Model<S>, mut w: W) -> Result<()> {
    let params: &[S] = match model {
        Model::Scalar(_) => &[],
        Model::Transformer(t) => t.params(),
    };
    let header = serde_json::to_vec(&Header { spec: model.spec(), num_params: params.len() })?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for p in params {
        w.write_all(&p.as_f64().to_le_bytes())?;
    }
    Ok(())
}

/// Read a model written by [`write_model`].
pub fn read_model<S: Scalar, R: Read>(mut r: R) -> Result<Model<S>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Serialization("not a model container".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Serialization(format!("unsupported container version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut params = Vec::with_capacity(header.num_params);
    let mut buf = [0u8; 8];
    for _ in 0..header.num_params {
        r.read_exact(&mut buf)?;
        params.push(S::lit(f64::from_le_bytes(buf)));
    }
    match header.spec {
        ModelSpec::TrainedTransformer(t) => Ok(Model::Transformer(Transformer::from_params(t, params)?)),
        spec => {
            if !params.is_empty() {
                return Err(Error::Serialization("analytic models carry no parameters".into()));
            }
            Ok(Model::Scalar(ScalarNetwork::from_spec(&spec)?))
        }
    }
}
