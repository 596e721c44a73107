//! Versioned binary checkpoints.
//!
//! Layout: magic `XLPINNCK`, `u32` version, `u64` header length, a JSON
//! header (model configuration and parameter entries), the parameter vector
//! as little-endian `f64`, and a trailing SHA-256 of everything before it.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, NetworkParams};
use crate::autodiff::{ParamEntry, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"XLPINNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    entries: Vec<ParamEntry>,
}

pub fn write_checkpoint<W: Write>(mut out: W, net: &NetworkParams) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: net.config().clone(),
        entries: net.store().entries().to_vec(),
    })?;
    let mut buf = Vec::with_capacity(header.len() + 8 * net.param_count() + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in net.store().values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest[..]);
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<NetworkParams> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < MAGIC.len() + 12 + 32 {
        return Err(Error::Format("checkpoint truncated".into()));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if &Sha256::digest(body)[..] != digest {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    if &body[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let rest = &body[20..];
    if rest.len() < header_len {
        return Err(Error::Format("checkpoint header truncated".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..header_len])?;
    let payload = &rest[header_len..];
    if payload.len() % 8 != 0 {
        return Err(Error::Format("checkpoint payload is not a whole number of f64".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let store = ParamStore::from_parts(header.entries, values)
        .ok_or_else(|| Error::Format("parameter entries do not tile the payload".into()))?;
    NetworkParams::from_store(&header.config, store)
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &NetworkParams) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), net)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::xlstm(2, 2, 5, 2);
        let net = NetworkParams::init(&cfg, 11).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back.config(), net.config());
        assert_eq!(back.store(), net.store());
    }

    #[test]
    fn corruption_is_detected() {
        let net = NetworkParams::init(&ModelConfig::baseline(1, 1, 4), 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_checkpoint(bytes.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(&b"short"[..]), Err(Error::Format(_))));
    }
}
