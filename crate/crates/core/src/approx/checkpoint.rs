//! Parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `MDCKPT01`                          |
//! | 32    | SHA-256 digest of the [`NetSpec`]         |
//! | 8     | `u64` count of parameters that follow     |
//! | 8·n   | `f64` values: encoder, actor, critic 1, critic 2 |

use std::io::{Read, Write};
use std::path::Path;

use super::net::{NetSpec, ParamVector, Part};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MDCKPT01";

/// Network parameters needed to act and to evaluate the critics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub encoder: ParamVector,
    pub actor: ParamVector,
    pub critic1: ParamVector,
    pub critic2: ParamVector,
}

impl NetParams {
    pub fn init(spec: &NetSpec, rng: &mut impl rand::Rng) -> Self {
        Self {
            encoder: ParamVector::init(spec.layout(Part::Encoder), rng),
            actor: ParamVector::init(spec.layout(Part::Actor), rng),
            critic1: ParamVector::init(spec.layout(Part::Critic), rng),
            critic2: ParamVector::init(spec.layout(Part::Critic), rng),
        }
    }

    fn parts(&self) -> [&ParamVector; 4] {
        [&self.encoder, &self.actor, &self.critic1, &self.critic2]
    }

    pub fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.is_finite())
    }
}

pub fn encode_checkpoint(spec: &NetSpec, params: &NetParams) -> Vec<u8> {
    let n: usize = params.parts().iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(48 + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&spec.digest());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for p in params.parts() {
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(spec: &NetSpec, bytes: &[u8]) -> Result<NetParams> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 48 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    if bytes[8..40] != spec.digest() {
        return Err(bad("architecture digest differs from the configured network"));
    }
    let n = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
    if bytes.len() != 48 + 8 * n {
        return Err(bad("truncated parameter array"));
    }
    let mut values = bytes[48..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |part| {
        let layout = spec.layout(part);
        let data: Vec<f64> = values.by_ref().take(layout.len()).collect();
        ParamVector { data, layout }
    };
    let params = NetParams {
        encoder: take(Part::Encoder),
        actor: take(Part::Actor),
        critic1: take(Part::Critic),
        critic2: take(Part::Critic),
    };
    let expected: usize = params.parts().iter().map(|p| p.layout.len()).sum();
    if expected != n || params.parts().iter().any(|p| p.data.len() != p.layout.len()) {
        return Err(bad("parameter count does not match the network"));
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, spec: &NetSpec, params: &NetParams) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_checkpoint(spec, params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, spec: &NetSpec) -> Result<NetParams> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(spec, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_digest_guard() {
        let spec = NetSpec::mlp(3, 1, vec![4]);
        let params = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(1));
        let bytes = encode_checkpoint(&spec, &params);
        assert_eq!(decode_checkpoint(&spec, &bytes).unwrap(), params);
        let other = NetSpec::mlp(3, 1, vec![5]);
        assert!(decode_checkpoint(&other, &bytes).is_err());
        assert!(decode_checkpoint(&spec, &bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&path, &spec, &params).unwrap();
        assert_eq!(load_checkpoint(&path, &spec).unwrap(), params);
    }
}
