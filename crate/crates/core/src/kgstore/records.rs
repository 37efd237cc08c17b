use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{KnowledgeGraph, TripleIdx};
use crate::error::{Error, Result};

/// Label used for "no relation".
pub const NA: &str = "NA";

/// Literal attributes of one entity. Missing attributes are empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityAttributeRecord {
    pub id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub instance_of: Vec<String>,
}

impl EntityAttributeRecord {
    pub fn empty(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..Self::default()
        }
    }

    /// Non-empty literals in the fixed stacking order: label, each alias,
    /// description, each instance-of value.
    pub fn literals(&self) -> Vec<&str> {
        std::iter::once(self.label.as_str())
            .chain(self.aliases.iter().map(String::as_str))
            .chain(std::iter::once(self.description.as_str()))
            .chain(self.instance_of.iter().map(String::as_str))
            .filter(|s| !s.trim().is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeStore {
    records: BTreeMap<String, EntityAttributeRecord>,
}

impl AttributeStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the replaced record, if any.
    pub fn insert(&mut self, record: EntityAttributeRecord) -> Option<EntityAttributeRecord> {
        self.records.insert(record.id.clone(), record)
    }

    pub fn get(&self, id: &str) -> Option<&EntityAttributeRecord> {
        self.records.get(id)
    }

    /// The entity's record, or an all-empty one.
    pub fn get_or_empty(&self, id: &str) -> EntityAttributeRecord {
        self.records
            .get(id)
            .cloned()
            .unwrap_or_else(|| EntityAttributeRecord::empty(id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityAttributeRecord> {
        self.records.values()
    }
}

#[derive(Deserialize)]
struct RawAttributeRecord {
    id: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    aliases: Option<Vec<String>>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    instance_of: Option<Vec<String>>,
}

pub fn load_attributes(path: impl AsRef<Path>) -> Result<AttributeStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attributes(&text, path)
}

pub fn parse_attributes(text: &str, path: &Path) -> Result<AttributeStore> {
    let mut store = AttributeStore::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawAttributeRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let id = raw
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(path, i + 1, "missing id field"))?;
        let rec = EntityAttributeRecord {
            id,
            label: raw.label.unwrap_or_default(),
            aliases: raw.aliases.unwrap_or_default(),
            description: raw.description.unwrap_or_default(),
            instance_of: raw.instance_of.unwrap_or_default(),
        };
        if let Some(old) = store.insert(rec) {
            log::warn!("{}:{}: duplicate attributes for {}, later record wins", path.display(), i + 1, old.id);
        }
    }
    Ok(store)
}

pub fn format_attributes(store: &AttributeStore) -> String {
    store
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Mention of a KG entity over tokens `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub start: usize,
    pub end: usize,
}

/// Ordered entity pair with its gold label (`"NA"` for none).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub head: usize,
    pub tail: usize,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
    #[serde(default)]
    pub pairs: Vec<LabeledPair>,
}

impl AnnotatedSentence {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (k, m) in self.mentions.iter().enumerate() {
            if m.id.is_empty() {
                return Err(format!("mention {k} has empty id"));
            }
            if m.start >= m.end || m.end > self.tokens.len() {
                return Err(format!(
                    "mention {k} span {}..{} out of bounds for {} tokens",
                    m.start,
                    m.end,
                    self.tokens.len()
                ));
            }
        }
        for (k, p) in self.pairs.iter().enumerate() {
            if p.head >= self.mentions.len() || p.tail >= self.mentions.len() {
                return Err(format!("pair {k} references a missing mention"));
            }
            if p.head == p.tail {
                return Err(format!("pair {k} has head == tail mention"));
            }
            if p.relation.is_empty() {
                return Err(format!("pair {k} has an empty relation"));
            }
        }
        Ok(())
    }
}

pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sentences(&text, path)
}

pub fn parse_sentences(text: &str, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: AnnotatedSentence =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        s.validate().map_err(|m| Error::parse(path, i + 1, m))?;
        out.push(s);
    }
    Ok(out)
}

pub fn format_sentences(sentences: &[AnnotatedSentence]) -> String {
    sentences
        .iter()
        .map(|s| serde_json::to_string(s).expect("sentence serializes") + "\n")
        .collect()
}

/// The context of an entity: its attribute record and the triples it heads.
pub fn retrieve_context(
    kg: &KnowledgeGraph,
    attributes: &AttributeStore,
    entity: &str,
) -> Result<(EntityAttributeRecord, Vec<TripleIdx>)> {
    let e = kg.entity(entity)?;
    Ok((attributes.get_or_empty(entity), kg.outgoing(e).collect()))
}
