//! Run configuration: one TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 1
//! output_dir = "out"
//!
//! [data]
//! triples = "kg.tsv"
//! attributes = "attributes.jsonl"
//! train_sentences = "train.jsonl"
//! test_sentences = "test.jsonl"
//!
//! [tripler]
//! init_dim = 50
//! final_dim = 200
//! ```
//!
//! Every field is optional; omitted ones take the defaults of the core
//! crate. Relative data paths are resolved against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use kgctx::aggregator::{ReconConfig, ReconTrainConfig, Variant};
use kgctx::tripler::{TrainConfig, TriplerConfig};
use serde::{Deserialize, Serialize};

use crate::failure::{CmdResult, Failure};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// `head \t relation \t tail` lines.
    pub triples: Option<PathBuf>,
    /// Entity attribute records, JSON lines.
    pub attributes: Option<PathBuf>,
    pub train_sentences: Option<PathBuf>,
    pub test_sentences: Option<PathBuf>,
    /// Optional pretrained word vectors (text format).
    pub word_vectors: Option<PathBuf>,
}

impl DataPaths {
    fn all(&self) -> [(&'static str, &Option<PathBuf>); 5] {
        [
            ("triples", &self.triples),
            ("attributes", &self.attributes),
            ("train_sentences", &self.train_sentences),
            ("test_sentences", &self.test_sentences),
            ("word_vectors", &self.word_vectors),
        ]
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.triples,
            &mut self.attributes,
            &mut self.train_sentences,
            &mut self.test_sentences,
            &mut self.word_vectors,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub tripler: TriplerConfig,
    pub tripler_train: TrainConfig,
    pub recon: ReconConfig,
    pub recon_train: ReconTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            data: DataPaths::default(),
            tripler: TriplerConfig::default(),
            tripler_train: TrainConfig::default(),
            recon: ReconConfig::default(),
            recon_train: ReconTrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CmdResult<Self> {
        toml::from_str(text).map_err(|e| Failure::usage(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|f| f.context(path.display().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.resolve(base);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Checks dimensions and hyperparameters (usage errors) and that every
    /// configured input exists (data errors).
    pub fn validate(&self) -> CmdResult<()> {
        self.tripler.validate().map_err(|e| Failure::usage(format!("[tripler] {e}")))?;
        // kg_relations and triple_dim are filled in from the triple model at
        // training time, so a placeholder stands in here
        let mut recon = self.recon;
        if recon.variant == Variant::EacKggatSeparate && recon.kg_relations == 0 {
            recon.kg_relations = 1;
        }
        recon.validate().map_err(|e| Failure::usage(format!("[recon] {e}")))?;
        let t = &self.tripler_train;
        if !(t.learning_rate > 0.0) || t.negatives == 0 {
            return Err(Failure::usage("[tripler_train] learning_rate must be positive and negatives at least 1"));
        }
        let r = &self.recon_train;
        if !(r.learning_rate > 0.0) || r.batch_sentences == 0 {
            return Err(Failure::usage("[recon_train] learning_rate and batch_sentences must be positive"));
        }
        for (name, p) in self.data.all() {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Failure::data(format!("data.{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, name: &str) -> CmdResult<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Failure::usage(format!("data.{name} is not set in the configuration")))
    }
}
