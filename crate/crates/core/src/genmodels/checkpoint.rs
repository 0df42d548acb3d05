//! Checkpoint container.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "GBLENDCK"
//! 8       4     format version, u32 LE
//! 12      4     header length H, u32 LE
//! 16      H     header, UTF-8 TOML (config, vocabulary, label layout,
//!               network shapes, config hash, seed)
//! ..      4     array count N, u32 LE
//! ..            N arrays, each: length L as u64 LE, then L f64 LE values
//! ..      8     FNV-1a 64 checksum of every preceding byte, u64 LE
//! ```
//!
//! Arrays hold each network's flat parameters in `Networks::nets` order,
//! then the component means and variances (GM families, `k·z` each,
//! row-major), then the per-epoch training losses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ComponentSet, ModelCheckpoint, ModelConfig, ModelError, Networks, PriorNet};
use crate::corpus::{TileVocab, VocabConfig};
use crate::numerics::{DenseNet, LayerShape};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GBLENDCK";

#[derive(Serialize, Deserialize)]
struct Header {
    config_hash: String,
    seed: u64,
    label_layout: LabelLayout,
    config: ModelConfig,
    nets: Vec<NetHeader>,
    has_components: bool,
    vocab: VocabConfig,
}

#[derive(Serialize, Deserialize)]
struct LabelLayout {
    game_bits: usize,
    dir_bits: usize,
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    name: String,
    layers: Vec<LayerShape>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn to_bytes(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let family = ckpt.family();
    let k = ckpt.config.k;
    let header = Header {
        config_hash: ckpt.config_hash(),
        seed: ckpt.config.seed,
        label_layout: LabelLayout {
            game_bits: if matches!(family, super::Family::Cvae | super::Family::Ccvae) {
                k
            } else {
                0
            },
            dir_bits: if family.is_directional() { 4 } else { 0 },
        },
        config: ckpt.config.clone(),
        nets: ckpt
            .nets
            .nets()
            .iter()
            .zip(Networks::NET_NAMES)
            .map(|(n, name)| NetHeader {
                name: name.to_string(),
                layers: n.layers().to_vec(),
            })
            .collect(),
        has_components: ckpt.components.is_some(),
        vocab: ckpt.vocab.to_config(),
    };
    let header = toml::to_string(&header).expect("checkpoint header serializes");

    let mut arrays: Vec<Vec<f64>> = ckpt
        .nets
        .nets()
        .iter()
        .map(|n| n.params().to_vec())
        .collect();
    if let Some(c) = &ckpt.components {
        arrays.push(c.means.iter().flatten().copied().collect());
        arrays.push(c.vars.iter().flatten().copied().collect());
    }
    arrays.push(ckpt.epoch_losses.clone());

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in &arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() - self.pos < n {
            return Err(ModelError::CorruptCheckpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint, ModelError> {
    let corrupt = |m: String| ModelError::CorruptCheckpoint(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 8 {
        return Err(corrupt("missing checksum".into()));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(corrupt(
            "checksum mismatch (truncated or modified file)".into(),
        ));
    }
    let hlen = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(hlen)?).map_err(|e| corrupt(e.to_string()))?;
    let header: Header = toml::from_str(header).map_err(|e| corrupt(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u64()? as usize;
        let raw = r.take(
            len.checked_mul(8)
                .ok_or_else(|| corrupt("array too long".into()))?,
        )?;
        arrays.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
        );
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes before checksum".into()));
    }

    let expected_arrays = header.nets.len() + if header.has_components { 2 } else { 0 } + 1;
    if arrays.len() != expected_arrays {
        return Err(corrupt(format!(
            "{} arrays, expected {expected_arrays}",
            arrays.len()
        )));
    }
    let mut arrays = arrays.into_iter();
    let mut nets = Vec::with_capacity(header.nets.len());
    for nh in &header.nets {
        let params = arrays.next().unwrap();
        nets.push(
            DenseNet::from_params(nh.layers.clone(), params)
                .map_err(|e| corrupt(format!("net {}: {e}", nh.name)))?,
        );
    }
    let mut nets = nets.into_iter();
    let (encoder, enc_mean, enc_var, decoder) =
        match (nets.next(), nets.next(), nets.next(), nets.next()) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(corrupt("fewer than four networks".into())),
        };
    let prior = match (nets.next(), nets.next()) {
        (Some(mean), Some(var)) => Some(PriorNet { mean, var }),
        (None, None) => None,
        _ => return Err(corrupt("incomplete prior network".into())),
    };
    let config = header.config;
    let components = if header.has_components {
        let (m, v) = (arrays.next().unwrap(), arrays.next().unwrap());
        if m.len() != config.k * config.z || v.len() != config.k * config.z {
            return Err(corrupt("component arrays have the wrong size".into()));
        }
        Some(ComponentSet {
            means: m.chunks(config.z).map(<[f64]>::to_vec).collect(),
            vars: v.chunks(config.z).map(<[f64]>::to_vec).collect(),
        })
    } else {
        None
    };
    let epoch_losses = arrays.next().unwrap();
    let vocab = TileVocab::from_config(&header.vocab)?;
    if config.config_hash() != header.config_hash {
        return Err(corrupt(
            "config hash does not match the stored config".into(),
        ));
    }
    Ok(ModelCheckpoint {
        config,
        vocab,
        nets: Networks {
            encoder,
            enc_mean,
            enc_var,
            decoder,
            prior,
        },
        components,
        epoch_losses,
    })
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint, ModelError> {
    from_bytes(&std::fs::read(path)?)
}
