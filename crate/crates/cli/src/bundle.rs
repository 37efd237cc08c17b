//! The prepared dataset bundle: id indexes, token vocabularies and the
//! neighborhood cache, written under `<output_dir>/prepared/`.
//!
//! | file                 | content                                        |
//! |----------------------|------------------------------------------------|
//! | `manifest.json`      | counts, neighborhood setting, input digests    |
//! | `triples.tsv`        | the deduplicated graph in id order             |
//! | `entities.txt`       | entity ids, one per line, index order          |
//! | `relations.txt`      | relation ids, one per line, index order        |
//! | `vocab.json`         | word and character vocabularies                |
//! | `neighborhoods.jsonl`| attention domain of every entity               |
//!
//! Nothing in the bundle depends on the clock or on hash order, so preparing
//! the same inputs twice gives byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kgctx::aggregator::build_token_table;
use kgctx::eac::TokenEmbeddingTable;
use kgctx::kgstore::{
    format_triples, load_attributes, load_sentences, parse_triples, AttributeStore, KnowledgeGraph, NeighborhoodTriple,
    TwoHopPaths,
};
use kgctx::tripler::Neighborhoods;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::{CmdResult, Context, Failure};

pub const BUNDLE_DIR: &str = "prepared";
pub const BUNDLE_VERSION: u32 = 1;

/// Word and character rows reserved for unknown and padding.
const RESERVED: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub attribute_records: usize,
    pub sentences: usize,
    /// Vocabulary sizes without the reserved rows.
    pub words: usize,
    pub chars: usize,
    pub two_hop: Option<TwoHopPaths>,
    /// SHA-256 of every input file, keyed by its config name.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Vocab {
    words: Vec<String>,
    chars: Vec<char>,
}

#[derive(Serialize, Deserialize)]
struct NeighborhoodLine {
    entity: String,
    neighbors: Vec<NeighborhoodTriple>,
}

pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub kg: KnowledgeGraph,
    pub neighborhoods: Neighborhoods,
    words: Vec<String>,
    chars: Vec<char>,
}

impl Bundle {
    /// Token table over the bundle vocabulary.
    pub fn token_table(&self, word_dim: usize, char_dim: usize) -> TokenEmbeddingTable {
        TokenEmbeddingTable::from_parts(self.words.clone(), self.chars.clone(), word_dim, char_dim)
    }
}

pub fn bundle_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(BUNDLE_DIR)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> CmdResult<()> {
    fs::write(path, content).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn input_digests(cfg: &RunConfig) -> CmdResult<BTreeMap<String, String>> {
    let d = &cfg.data;
    let mut out = BTreeMap::new();
    for (name, p) in [
        ("triples", &d.triples),
        ("attributes", &d.attributes),
        ("train_sentences", &d.train_sentences),
    ] {
        if let Some(p) = p {
            let bytes = fs::read(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            out.insert(name.to_string(), sha256_hex(&bytes));
        }
    }
    Ok(out)
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

/// Builds and writes the bundle. Returns the manifest and any warnings.
pub fn prepare(cfg: &RunConfig) -> CmdResult<(Manifest, Vec<String>)> {
    let mut warnings = Vec::new();
    let kg = match &cfg.data.triples {
        Some(p) => parse_triples(&read(p)?, p).ctx("reading triples")?,
        None => {
            warnings.push("data.triples is not set; the graph is empty".to_string());
            KnowledgeGraph::new()
        }
    };
    let attributes = match &cfg.data.attributes {
        Some(p) => load_attributes(p).ctx("reading attributes")?,
        None => AttributeStore::new(),
    };
    let sentences = match &cfg.data.train_sentences {
        Some(p) => load_sentences(p).ctx("reading training sentences")?,
        None => Vec::new(),
    };
    if sentences.is_empty() {
        warnings.push("no training sentences; the token vocabulary comes from attributes only".to_string());
    }
    let table = build_token_table(&sentences, &attributes, cfg.recon.word_dim, cfg.recon.char_dim);
    let two_hop = cfg.tripler.two_hop;
    let nb = Neighborhoods::build(&kg, two_hop).ctx("building neighborhoods")?;

    let dir = bundle_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    let manifest = Manifest {
        version: BUNDLE_VERSION,
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        triples: kg.len(),
        attribute_records: attributes.len(),
        sentences: sentences.len(),
        words: table.words().len() - RESERVED,
        chars: table.chars().len() - RESERVED,
        two_hop,
        inputs: input_digests(cfg)?,
    };
    let vocab = Vocab {
        words: table.words().to_vec(),
        chars: table.chars().to_vec(),
    };
    let mut nb_text = String::new();
    for e in 0..kg.num_entities() {
        let line = NeighborhoodLine {
            entity: kg.entity_name(e).to_string(),
            neighbors: nb.get(e).ctx("neighborhood cache")?.to_vec(),
        };
        nb_text.push_str(&serde_json::to_string(&line).expect("serializable"));
        nb_text.push('\n');
    }
    write(&dir.join("manifest.json"), &pretty(&manifest))?;
    write(&dir.join("triples.tsv"), &format_triples(&kg))?;
    write(&dir.join("entities.txt"), &lines(kg.entities()))?;
    write(&dir.join("relations.txt"), &lines(kg.relations()))?;
    write(&dir.join("vocab.json"), &pretty(&vocab))?;
    write(&dir.join("neighborhoods.jsonl"), &nb_text)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((manifest, warnings))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Loads the bundle and checks it still matches the configured inputs.
pub fn load_bundle(cfg: &RunConfig) -> CmdResult<Bundle> {
    let dir = bundle_dir(cfg);
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Failure::data(format!(
            "no prepared bundle at {}; run `kgctx prepare` first",
            dir.display()
        )));
    }
    let bad = |what: &str| Failure::data(format!("{}: {what}; rerun `kgctx prepare`", dir.display()));
    let manifest: Manifest =
        serde_json::from_str(&read(&manifest_path)?).map_err(|e| bad(&format!("unreadable manifest ({e})")))?;
    if manifest.version != BUNDLE_VERSION {
        return Err(bad(&format!("bundle version {} is not supported", manifest.version)));
    }
    if manifest.inputs != input_digests(cfg)? {
        return Err(bad("the configured inputs changed since the bundle was prepared"));
    }
    if manifest.two_hop != cfg.tripler.two_hop {
        return Err(bad("the bundle was prepared with a different two_hop setting"));
    }
    let triples_path = dir.join("triples.tsv");
    let kg = parse_triples(&read(&triples_path)?, &triples_path).ctx("reading the bundle graph")?;
    let entities: Vec<String> = read(&dir.join("entities.txt"))?.lines().map(str::to_string).collect();
    let relations: Vec<String> = read(&dir.join("relations.txt"))?.lines().map(str::to_string).collect();
    if entities != kg.entities() || relations != kg.relations() {
        return Err(bad("index files disagree with triples.tsv"));
    }
    let vocab: Vocab = serde_json::from_str(&read(&dir.join("vocab.json"))?).map_err(|e| bad(&format!("vocab.json: {e}")))?;
    let mut lists = Vec::with_capacity(entities.len());
    for (i, line) in read(&dir.join("neighborhoods.jsonl"))?.lines().enumerate() {
        let l: NeighborhoodLine =
            serde_json::from_str(line).map_err(|e| bad(&format!("neighborhoods.jsonl:{}: {e}", i + 1)))?;
        if entities.get(i) != Some(&l.entity) {
            return Err(bad(&format!("neighborhoods.jsonl:{}: out of order", i + 1)));
        }
        lists.push(l.neighbors);
    }
    if lists.len() != entities.len() {
        return Err(bad("neighborhood cache does not cover every entity"));
    }
    Ok(Bundle {
        dir,
        manifest,
        kg,
        neighborhoods: Neighborhoods::from_lists(lists),
        words: vocab.words,
        chars: vocab.chars,
    })
}
