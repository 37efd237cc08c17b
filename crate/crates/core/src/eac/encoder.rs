use serde::{Deserialize, Serialize};

use super::lstm::BiLstm;
use super::table::{tokenize, TokenEmbeddingTable, PAD_WORD};
use crate::error::{Error, Result};
use crate::kgstore::EntityAttributeRecord;
use crate::numkit::{xavier_init, Graph, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EacConfig {
    /// BiLSTM hidden size per direction.
    pub hidden: usize,
    /// Output channels of the width-1 convolution.
    pub channels: usize,
    /// Literals longer than this are truncated.
    pub max_len: usize,
}

impl Default for EacConfig {
    fn default() -> Self {
        Self {
            hidden: 50,
            channels: 8,
            max_len: 32,
        }
    }
}

/// Entity attribute context encoder: each literal goes through a BiLSTM,
/// the final states are stacked, a width-1 convolution maps every row to
/// `channels`, and max-pooling over rows gives the entity vector.
#[derive(Debug, Clone, Copy)]
pub struct EacEncoder {
    lstm: BiLstm,
    conv_w: ParamId,
    conv_b: ParamId,
    pub config: EacConfig,
}

pub const EAC_PREFIX: &str = "eac";

impl EacEncoder {
    pub fn init(store: &mut ParamStore, table: &TokenEmbeddingTable, config: EacConfig, rng: &mut Rng) -> Self {
        BiLstm::init(store, &format!("{EAC_PREFIX}.lstm"), table.dim(), config.hidden, rng);
        store.insert(format!("{EAC_PREFIX}.conv.w"), xavier_init(rng, config.channels, 2 * config.hidden));
        store.insert(format!("{EAC_PREFIX}.conv.b"), Tensor::zeros(&[config.channels, 1]));
        Self::bind(store, config).expect("just inserted")
    }

    pub fn bind(store: &ParamStore, config: EacConfig) -> Result<Self> {
        let lstm = BiLstm::bind(store, &format!("{EAC_PREFIX}.lstm"))?;
        let get = |n: &str| {
            store
                .id(&format!("{EAC_PREFIX}.{n}"))
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {EAC_PREFIX}.{n}")))
        };
        let enc = Self {
            lstm,
            conv_w: get("conv.w")?,
            conv_b: get("conv.b")?,
            config,
        };
        if lstm.hidden != config.hidden || store.tensor(enc.conv_w).rows() != config.channels {
            return Err(Error::InvalidArgument("EAC parameters do not match configuration".into()));
        }
        Ok(enc)
    }

    /// BiLSTM final states for one literal (`2H x 1`). An empty literal is
    /// encoded as a single padding token.
    pub fn encode_attribute(&self, g: &mut Graph<'_>, table: &TokenEmbeddingTable, tokens: &[String]) -> Result<Var> {
        let toks: Vec<&str> = if tokens.is_empty() {
            vec![PAD_WORD]
        } else {
            tokens.iter().take(self.config.max_len).map(String::as_str).collect()
        };
        let inputs = toks
            .iter()
            .map(|t| table.embed(g, t))
            .collect::<Result<Vec<_>>>()?;
        self.lstm.final_states(g, &inputs)
    }

    /// Convolution output for one literal, before pooling (`C x 1`).
    pub fn literal_channels(&self, g: &mut Graph<'_>, table: &TokenEmbeddingTable, tokens: &[String]) -> Result<Var> {
        let row = self.encode_attribute(g, table, tokens)?;
        g.affine(self.conv_w, self.conv_b, row)
    }

    /// Pooled context vector over already-tokenized literals.
    pub fn context_from_literals(
        &self,
        g: &mut Graph<'_>,
        table: &TokenEmbeddingTable,
        literals: &[Vec<String>],
    ) -> Result<Var> {
        let pad = [Vec::new()];
        let literals = if literals.is_empty() { &pad[..] } else { literals };
        let rows = literals
            .iter()
            .map(|l| self.literal_channels(g, table, l))
            .collect::<Result<Vec<_>>>()?;
        g.max_of(&rows)
    }

    /// Context vector `h°` for an entity (`C x 1`).
    pub fn entity_context(
        &self,
        g: &mut Graph<'_>,
        table: &TokenEmbeddingTable,
        record: &EntityAttributeRecord,
    ) -> Result<Var> {
        self.context_from_literals(g, table, &record_literals(record))
    }
}

/// Tokenized literals of a record in stacking order.
pub fn record_literals(record: &EntityAttributeRecord) -> Vec<Vec<String>> {
    record
        .literals()
        .into_iter()
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Evaluates `h°` outside a training graph.
pub fn entity_context(
    encoder: &EacEncoder,
    params: &ParamStore,
    table: &TokenEmbeddingTable,
    record: &EntityAttributeRecord,
) -> Result<Vec<f64>> {
    let mut g = Graph::new(params);
    let v = encoder.entity_context(&mut g, table, record)?;
    Ok(g.to_vec(v))
}
