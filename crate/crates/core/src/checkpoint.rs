//! Versioned model files.
//!
//! A checkpoint is a JSON document
//! `{"format", "version", "digest", "body"}` where `body` holds the model
//! kind, a config snapshot, every parameter tensor (shape plus base64 of the
//! little-endian f64 bytes) and named id orderings. `digest` is the SHA-256
//! of the compact serialization of `body`, so any edit or truncation is
//! caught on load. Serialization is deterministic: saving a loaded
//! checkpoint reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: &str = "kgctx-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub params: ParamStore,
    /// Id orderings (entities, relations, labels, vocabularies...).
    pub indexes: BTreeMap<String, Vec<String>>,
}

/// Pretty-printed envelope with a trailing newline.
impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = self.body();
        let env = Envelope {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            digest: digest_of(&body),
            body,
        };
        let s = serde_json::to_string_pretty(&env).map_err(|_| fmt::Error)?;
        writeln!(f, "{s}")
    }
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Body {
    kind: String,
    config: serde_json::Value,
    params: Vec<StoredTensor>,
    indexes: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    digest: String,
    body: Body,
}

fn digest_of(body: &Body) -> String {
    let bytes = serde_json::to_vec(body).expect("checkpoint body serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(t: &Tensor) -> String {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode(s: &StoredTensor) -> Result<Tensor> {
    let bytes = B64
        .decode(&s.data)
        .map_err(|e| Error::Checkpoint(format!("{}: bad payload: {e}", s.name)))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{}: payload is not a whole number of f64s", s.name)));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(s.shape.clone(), data).map_err(|e| Error::Checkpoint(format!("{}: {e}", s.name)))
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, config: &impl Serialize, params: ParamStore) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            kind: kind.into(),
            config,
            params,
            indexes: BTreeMap::new(),
        })
    }

    pub fn with_index(mut self, name: impl Into<String>, ids: &[String]) -> Self {
        self.indexes.insert(name.into(), ids.to_vec());
        self
    }

    pub fn index(&self, name: &str) -> Result<&[String]> {
        self.indexes
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Checkpoint(format!("missing index {name:?}")))
    }

    pub fn config_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.config.clone()).map_err(|e| Error::Checkpoint(format!("config: {e}")))
    }

    fn body(&self) -> Body {
        Body {
            kind: self.kind.clone(),
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(_, name, t)| StoredTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: encode(t),
                })
                .collect(),
            indexes: self.indexes.clone(),
        }
    }

    /// The content digest written to (and checked against) the file.
    pub fn digest(&self) -> String {
        digest_of(&self.body())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| {
            Error::Digest(format!("content does not parse as a checkpoint (truncated or corrupt): {e}"))
        })?;
        if env.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", env.format)));
        }
        if env.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: env.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let actual = digest_of(&env.body);
        if actual != env.digest {
            return Err(Error::Digest(format!("stored {}, computed {actual}", env.digest)));
        }
        let mut params = ParamStore::new();
        for s in &env.body.params {
            if params.contains(&s.name) {
                return Err(Error::Checkpoint(format!("duplicate parameter {}", s.name)));
            }
            params.insert(s.name.clone(), decode(s)?);
        }
        Ok(Self {
            kind: env.body.kind,
            config: env.body.config,
            params,
            indexes: env.body.indexes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fails unless the checkpoint holds a model of `kind`.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }
}
