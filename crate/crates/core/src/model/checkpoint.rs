//! Checkpoint container.
//!
//! ```text
//! magic "KMCK" | u32 version | u64 header length | JSON header | f32 LE parameters
//! ```
//!
//! The header echoes the classifier configuration, the vocabulary size and
//! hash, and the parameter group layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_net, Classifier, ClassifierConfig, ModelError, ParamGroup};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ClassifierConfig,
    vocab_size: usize,
    vocab_hash: String,
    groups: Vec<ParamGroup>,
    param_count: usize,
}

impl Classifier {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            vocab_hash: self.vocab_hash.clone(),
            groups: self.groups.clone(),
            param_count: self.params.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for &p in &self.params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Classifier, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        header.config.validate()?;
        let (net, groups, _) = build_net(&header.config, header.vocab_size);
        let expected: usize = groups.iter().map(|g| g.len).sum();
        if groups != header.groups || header.param_count != expected {
            return Err(ModelError::Dimension(format!(
                "header declares {} parameters but the configuration with a vocabulary of {} needs {expected}",
                header.param_count, header.vocab_size
            )));
        }
        let data = &body[hlen..];
        if data.len() != 4 * expected {
            return Err(ModelError::Dimension(format!(
                "expected {expected} parameters, file holds {} bytes of parameter data",
                data.len()
            )));
        }
        let params = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        Ok(Classifier {
            config: header.config,
            vocab_size: header.vocab_size,
            vocab_hash: header.vocab_hash,
            params,
            groups,
            net,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Classifier, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn cfg(kind: ModelKind) -> ClassifierConfig {
        ClassifierConfig { model_kind: kind, layers: 1, heads: 2, embed_dim: 8, ff_dim: 8, window: 16, ..Default::default() }
    }

    #[test]
    fn round_trip_is_exact() {
        for kind in [ModelKind::Transformer, ModelKind::FeatureBaseline] {
            let c = Classifier::init_sized(&cfg(kind), 30, "abc").unwrap();
            let back = Classifier::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(back.params(), c.params());
            assert_eq!(back.config(), c.config());
            assert_eq!(back.vocab_hash(), "abc");
        }
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = Classifier::init_sized(&cfg(ModelKind::Transformer), 30, "abc").unwrap().to_bytes();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(Classifier::from_bytes(&bytes), Err(ModelError::Version { found: 7, expected: 1 })));
        assert!(matches!(Classifier::from_bytes(b"nope"), Err(ModelError::Checkpoint(_))));
    }

    #[test]
    fn rejects_mismatched_vocab_size() {
        let c = Classifier::init_sized(&cfg(ModelKind::Transformer), 30, "abc").unwrap();
        let bytes = c.to_bytes();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + hlen]).unwrap().replace("\"vocab_size\":30", "\"vocab_size\":31");
        let mut edited = bytes[..8].to_vec();
        edited.extend_from_slice(&(header.len() as u64).to_le_bytes());
        edited.extend_from_slice(header.as_bytes());
        edited.extend_from_slice(&bytes[16 + hlen..]);
        assert!(matches!(Classifier::from_bytes(&edited), Err(ModelError::Dimension(_))));
    }
}
