//! Single-file parameter container: magic, header length (u64 LE), JSON
//! header with the config and array directory, then little-endian `f64`
//! payloads in directory order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderParams};
use crate::ad::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NVENC01\n";

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    arrays: Vec<ArrayEntry>,
}

pub fn save_params(params: &EncoderParams, path: &Path) -> Result<()> {
    let header = Header {
        config: params.config.clone(),
        arrays: EncoderParams::NAMES
            .iter()
            .zip(params.tensors())
            .map(|(n, t)| ArrayEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(16 + json.len() + params.num_scalars() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not an encoder parameter file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::format(path, format!("bad header: {e}")))?;
    if header.arrays.len() != EncoderParams::NAMES.len() {
        return Err(Error::format(path, "unexpected array directory"));
    }
    let mut offset = 16 + hlen;
    let mut tensors = Vec::with_capacity(6);
    for (entry, name) in header.arrays.iter().zip(EncoderParams::NAMES) {
        if entry.name != name {
            return Err(Error::format(
                path,
                format!("expected array `{name}`, found `{}`", entry.name),
            ));
        }
        let n: usize = entry.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 8 * n)
            .ok_or_else(|| Error::format(path, format!("payload of `{name}` is truncated")))?;
        offset += 8 * n;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor::new(entry.shape.clone(), data).map_err(|e| Error::format(path, e.to_string()))?);
    }
    if offset != bytes.len() {
        return Err(Error::format(path, "trailing bytes after payload"));
    }
    EncoderParams::from_tensors(header.config, tensors.try_into().expect("six arrays"))
        .map_err(|e| match e {
            Error::Dimension(msg) => Error::format(path, msg),
            other => other,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    #[test]
    fn round_trip_is_exact() {
        let cfg = EncoderConfig {
            conv_channels: 2,
            gat_dim: 4,
            seed: 3,
            ..EncoderConfig::new(3)
        };
        let p = init_params(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_params(&p, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format { .. })));
    }
}
