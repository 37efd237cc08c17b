use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::context::{EntityFeature, TripleContext};
use crate::eac::{BiLstm, EacConfig, EacEncoder, TokenEmbeddingTable};
use crate::error::{Error, Result};
use crate::kgstore::{AnnotatedSentence, AttributeStore, NA};
use crate::numkit::{uniform_init, xavier_init, Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::tripler::SpaceMode;

pub const RECON_PREFIX: &str = "recon";

/// Which context the aggregator sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Sentence only; initial entity states are all ones.
    #[serde(rename = "plain")]
    Plain,
    /// Initial entity states from the attribute encoder.
    #[serde(rename = "eac")]
    Eac,
    #[serde(rename = "eac+kggat-same")]
    EacKggatSame,
    #[default]
    #[serde(rename = "eac+kggat-separate")]
    EacKggatSeparate,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::Eac, Variant::EacKggatSame, Variant::EacKggatSeparate];

    pub fn uses_eac(self) -> bool {
        self != Variant::Plain
    }

    /// Space mode of the triple model this variant consumes, if any.
    pub fn triple_mode(self) -> Option<SpaceMode> {
        match self {
            Variant::EacKggatSame => Some(SpaceMode::Same),
            Variant::EacKggatSeparate => Some(SpaceMode::Separate),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Eac => "eac",
            Variant::EacKggatSame => "eac+kggat-same",
            Variant::EacKggatSeparate => "eac+kggat-separate",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub variant: Variant,
    pub word_dim: usize,
    pub char_dim: usize,
    /// Position embedding size `d_p`.
    pub pos_dim: usize,
    /// Sentence BiLSTM hidden size per direction.
    pub encoder_hidden: usize,
    /// Propagation layers `n`.
    pub prop_layers: usize,
    /// Entity state size `d_e`.
    pub state_dim: usize,
    pub classifier_hidden: usize,
    pub eac: EacConfig,
    /// Tokens past this are dropped before encoding.
    pub max_tokens: usize,
    /// Width of each tripler entity slot in the classifier input.
    pub triple_dim: usize,
    /// Number of KG relations (length of `t_ht`), separate-space head only.
    pub kg_relations: usize,
    pub entity_feature: EntityFeature,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            variant: Variant::default(),
            word_dim: 50,
            char_dim: 10,
            pos_dim: 50,
            encoder_hidden: 256,
            prop_layers: 3,
            state_dim: 8,
            classifier_hidden: 64,
            eac: EacConfig::default(),
            max_tokens: 128,
            triple_dim: 200,
            kg_relations: 0,
            entity_feature: EntityFeature::Final,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("pos_dim", self.pos_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("prop_layers", self.prop_layers),
            ("state_dim", self.state_dim),
            ("classifier_hidden", self.classifier_hidden),
            ("max_tokens", self.max_tokens),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.variant.uses_eac() && self.eac.channels != self.state_dim {
            return Err(Error::InvalidArgument(format!(
                "attribute encoder emits {} channels but entity states have {}",
                self.eac.channels, self.state_dim
            )));
        }
        if self.variant == Variant::EacKggatSeparate && self.kg_relations == 0 {
            return Err(Error::InvalidArgument("separate-space head needs kg_relations > 0".into()));
        }
        Ok(())
    }

    /// Length of the classifier input.
    pub fn classifier_input(&self) -> usize {
        let t = if self.variant == Variant::EacKggatSeparate { self.kg_relations } else { 0 };
        self.prop_layers * self.state_dim + 2 * self.triple_dim + t
    }
}

/// Class distribution for one entity pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub sentence: usize,
    pub pair: usize,
    pub head: String,
    pub tail: String,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub confidence: f64,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Position symbol per token: 1 inside mention `i`, 2 inside mention `j`,
/// 0 elsewhere.
pub fn position_symbols(sentence: &AnnotatedSentence, i: usize, j: usize) -> Result<Vec<usize>> {
    let (mi, mj) = match (sentence.mentions.get(i), sentence.mentions.get(j)) {
        (Some(a), Some(b)) if i != j => (a, b),
        _ => return Err(Error::InvalidArgument(format!("bad mention pair ({i}, {j})"))),
    };
    if mi.start < mj.end && mj.start < mi.end {
        return Err(Error::OverlappingMentions(i, j));
    }
    let mut sym = vec![0; sentence.tokens.len()];
    sym[mi.start..mi.end].fill(1);
    sym[mj.start..mj.end].fill(2);
    Ok(sym)
}

/// Generated-parameter GNN over the entities of a sentence.
#[derive(Debug, Clone)]
pub struct ReconModel {
    pub config: ReconConfig,
    /// Output classes; `NA` is always index 0.
    pub labels: Vec<String>,
    pub table: TokenEmbeddingTable,
    eac: Option<EacEncoder>,
    encoder: BiLstm,
    pos: ParamId,
    gen: Vec<(ParamId, ParamId)>,
    cls: [ParamId; 4],
}

fn pname(rest: &str) -> String {
    format!("{RECON_PREFIX}.{rest}")
}

/// `NA` first, then the other labels sorted.
pub fn label_order<'a>(labels: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut rest: Vec<String> = labels.into_iter().filter(|l| *l != NA).map(str::to_string).collect();
    rest.sort();
    rest.dedup();
    std::iter::once(NA.to_string()).chain(rest).collect()
}

impl ReconModel {
    /// Creates token tables, the attribute encoder (for EAC variants) and
    /// all aggregator parameters in `store`.
    pub fn init(
        store: &mut ParamStore,
        table: TokenEmbeddingTable,
        labels: Vec<String>,
        config: ReconConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        if table.word_dim != config.word_dim || table.char_dim != config.char_dim {
            return Err(Error::InvalidArgument("token table dimensions differ from the configuration".into()));
        }
        if !store.contains(crate::eac::WORD_PARAM) {
            table.init_params(store, rng, None)?;
        }
        if config.variant.uses_eac() {
            EacEncoder::init(store, &table, config.eac, rng);
        }
        store.insert(pname("pos"), uniform_init(rng, 3, config.pos_dim, 0.1));
        BiLstm::init(store, &pname("enc"), table.dim() + config.pos_dim, config.encoder_hidden, rng);
        let de2 = config.state_dim * config.state_dim;
        for l in 0..config.prop_layers {
            store.insert(pname(&format!("gen.{l}.w")), xavier_init(rng, de2, 2 * config.encoder_hidden));
            // bias starts at the flattened identity so messages neither vanish
            // nor explode before the generator has learned anything
            let mut b = Tensor::zeros(&[de2, 1]);
            for k in 0..config.state_dim {
                b.data_mut()[k * config.state_dim + k] = 1.0;
            }
            store.insert(pname(&format!("gen.{l}.b")), b);
        }
        let (din, hid) = (config.classifier_input(), config.classifier_hidden);
        store.insert(pname("cls.w1"), xavier_init(rng, hid, din));
        store.insert(pname("cls.b1"), Tensor::zeros(&[hid, 1]));
        store.insert(pname("cls.w2"), xavier_init(rng, labels.len(), hid));
        store.insert(pname("cls.b2"), Tensor::zeros(&[labels.len(), 1]));
        Self::bind(store, table, labels, config)
    }

    pub fn bind(store: &ParamStore, table: TokenEmbeddingTable, labels: Vec<String>, config: ReconConfig) -> Result<Self> {
        config.validate()?;
        if labels.first().map(String::as_str) != Some(NA) {
            return Err(Error::InvalidArgument("label set must start with NA".into()));
        }
        let get = |rest: &str, shape: [usize; 2]| -> Result<ParamId> {
            let name = pname(rest);
            let id = store
                .id(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))?;
            if store.tensor(id).shape() != shape {
                return Err(Error::shape(
                    "bind aggregator",
                    format!("{name} has shape {:?}, expected {shape:?}", store.tensor(id).shape()),
                ));
            }
            Ok(id)
        };
        let eac = if config.variant.uses_eac() {
            Some(EacEncoder::bind(store, config.eac)?)
        } else {
            None
        };
        let encoder = BiLstm::bind(store, &pname("enc"))?;
        if encoder.hidden != config.encoder_hidden || encoder.input != table.dim() + config.pos_dim {
            return Err(Error::InvalidArgument("sentence encoder does not match the configuration".into()));
        }
        let de2 = config.state_dim * config.state_dim;
        let gen = (0..config.prop_layers)
            .map(|l| {
                Ok((
                    get(&format!("gen.{l}.w"), [de2, 2 * config.encoder_hidden])?,
                    get(&format!("gen.{l}.b"), [de2, 1])?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (din, hid, k) = (config.classifier_input(), config.classifier_hidden, labels.len());
        let cls = [
            get("cls.w1", [hid, din])?,
            get("cls.b1", [hid, 1])?,
            get("cls.w2", [k, hid])?,
            get("cls.b2", [k, 1])?,
        ];
        let pos = get("pos", [3, config.pos_dim])?;
        Ok(Self {
            config,
            labels,
            table,
            eac,
            encoder,
            pos,
            gen,
            cls,
        })
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Parameter ids of the transition-matrix generator, `(W, b)` per layer.
    pub fn generator_params(&self) -> &[(ParamId, ParamId)] {
        &self.gen
    }

    pub fn classifier_params(&self) -> [ParamId; 4] {
        self.cls
    }

    pub fn position_param(&self) -> ParamId {
        self.pos
    }

    /// Token columns `[word ‖ chars ‖ position]` for the pair `(i, j)`.
    pub fn encode_tokens(&self, g: &mut Graph<'_>, sentence: &AnnotatedSentence, i: usize, j: usize) -> Result<Vec<Var>> {
        let sym = position_symbols(sentence, i, j)?;
        sentence
            .tokens
            .iter()
            .zip(&sym)
            .take(self.config.max_tokens)
            .map(|(tok, &s)| {
                let w = self.table.embed(g, tok)?;
                let p = g.embed_row(self.pos, s)?;
                g.vstack(&[w, p])
            })
            .collect()
    }

    /// One `d_e x d_e` matrix per propagation layer:
    /// `B⁽ˡ⁾ = reshape(W_l s + b_l)` (row-major) with `s` the BiLSTM final
    /// states.
    pub fn generate_transition_matrices(&self, g: &mut Graph<'_>, tokens: &[Var]) -> Result<Vec<Var>> {
        let s = self.encoder.final_states(g, tokens)?;
        let de = self.config.state_dim;
        self.gen
            .iter()
            .map(|&(w, b)| {
                let z = g.affine(w, b, s)?;
                g.reshape(z, de, de)
            })
            .collect()
    }

    /// `h⁰` for each mention: attribute context for EAC variants, all ones
    /// otherwise.
    pub fn initial_states(&self, g: &mut Graph<'_>, sentence: &AnnotatedSentence, attributes: &AttributeStore) -> Result<Vec<Var>> {
        sentence
            .mentions
            .iter()
            .map(|m| match &self.eac {
                Some(enc) => enc.entity_context(g, &self.table, &attributes.get_or_empty(&m.id)),
                None => Ok(g.column(vec![1.0; self.config.state_dim])),
            })
            .collect()
    }

    /// Classifier logits over `labels` for a feature column.
    pub fn classifier_logits(&self, g: &mut Graph<'_>, features: Var) -> Result<Var> {
        let [w1, b1, w2, b2] = self.cls;
        let h = g.affine(w1, b1, features)?;
        let h = g.relu(h);
        g.affine(w2, b2, h)
    }

    fn check_input(&self, g: &Graph<'_>, features: Var, op: &'static str) -> Result<()> {
        let want = self.config.classifier_input();
        let got = g.shape(features);
        if got != (want, 1) {
            return Err(Error::shape(op, format!("features {got:?}, classifier expects {want} x 1")));
        }
        Ok(())
    }

    /// `softmax(MLP([r ‖ e_h ‖ e_t]))`.
    pub fn classify_same_space(&self, g: &mut Graph<'_>, rep: Var, e_h: Var, e_t: Var) -> Result<Var> {
        if self.config.variant == Variant::EacKggatSeparate {
            return Err(Error::InvalidArgument("separate-space model needs the translation vector".into()));
        }
        let x = g.vstack(&[rep, e_h, e_t])?;
        self.check_input(g, x, "classify_same_space")?;
        let z = self.classifier_logits(g, x)?;
        Ok(g.softmax(z))
    }

    /// `softmax(MLP([r ‖ e_h ‖ e_t ‖ t_ht]))`.
    pub fn classify_separate_space(&self, g: &mut Graph<'_>, rep: Var, e_h: Var, e_t: Var, t_ht: Var) -> Result<Var> {
        if self.config.variant != Variant::EacKggatSeparate {
            return Err(Error::InvalidArgument(format!("variant {} has no translation-vector head", self.config.variant)));
        }
        let x = g.vstack(&[rep, e_h, e_t, t_ht])?;
        self.check_input(g, x, "classify_separate_space")?;
        let z = self.classifier_logits(g, x)?;
        Ok(g.softmax(z))
    }

    fn check_context(&self, ctx: Option<&TripleContext>) -> Result<()> {
        match (self.config.variant.triple_mode(), ctx) {
            (None, _) => Ok(()),
            (Some(_), None) => Err(Error::InvalidArgument(format!(
                "variant {} needs a trained triple model",
                self.config.variant
            ))),
            (Some(mode), Some(c)) => {
                if c.mode() != mode {
                    return Err(Error::InvalidArgument(format!(
                        "variant {} needs a {mode:?}-space triple model",
                        self.config.variant
                    )));
                }
                if c.feature_dim(self.config.entity_feature) != self.config.triple_dim {
                    return Err(Error::shape(
                        "triple context",
                        format!(
                            "entity features have {} dims, config says {}",
                            c.feature_dim(self.config.entity_feature),
                            self.config.triple_dim
                        ),
                    ));
                }
                if mode == SpaceMode::Separate && c.model.num_relations() != self.config.kg_relations {
                    return Err(Error::shape(
                        "triple context",
                        format!("{} KG relations, config says {}", c.model.num_relations(), self.config.kg_relations),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Classifier input for the labeled pair `(i, j)` given propagated states.
    fn pair_features(
        &self,
        g: &mut Graph<'_>,
        sentence: &AnnotatedSentence,
        states: &[Vec<Var>],
        i: usize,
        j: usize,
        ctx: Option<&TripleContext>,
    ) -> Result<Var> {
        let rep = pair_representation(g, states, i, j)?;
        let (hid, tid) = (&sentence.mentions[i].id, &sentence.mentions[j].id);
        let mut parts = vec![rep];
        match (self.config.variant.triple_mode(), ctx) {
            (Some(mode), Some(c)) => {
                let f = self.config.entity_feature;
                parts.push(g.column(c.entity_feature(hid, f)));
                parts.push(g.column(c.entity_feature(tid, f)));
                if mode == SpaceMode::Separate {
                    parts.push(g.column(c.translation(hid, tid)?));
                }
            }
            _ => {
                parts.push(g.column(vec![0.0; self.config.triple_dim]));
                parts.push(g.column(vec![0.0; self.config.triple_dim]));
            }
        }
        g.vstack(&parts)
    }

    /// Logits for every labeled pair of `sentence`, in pair order.
    pub fn sentence_logits(
        &self,
        g: &mut Graph<'_>,
        sentence: &AnnotatedSentence,
        attributes: &AttributeStore,
        ctx: Option<&TripleContext>,
    ) -> Result<Vec<Var>> {
        self.check_context(ctx)?;
        if sentence.pairs.is_empty() {
            return Ok(Vec::new());
        }
        let m = sentence.mentions.len();
        if m < 2 {
            return Err(Error::NoPairs(m));
        }
        let h0 = self.initial_states(g, sentence, attributes)?;
        let mut b = BTreeMap::new();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let toks = self.encode_tokens(g, sentence, i, j)?;
                    b.insert((i, j), self.generate_transition_matrices(g, &toks)?);
                }
            }
        }
        let states = propagate(g, &h0, &b, self.config.prop_layers)?;
        sentence
            .pairs
            .iter()
            .map(|p| {
                let x = self.pair_features(g, sentence, &states, p.head, p.tail, ctx)?;
                self.check_input(g, x, "pair features")?;
                self.classifier_logits(g, x)
            })
            .collect()
    }
}

/// Message passing over the fully connected entity graph:
/// `h_i⁽ˡ⁺¹⁾ = Σ_{j≠i} ReLU(B_{i,j}⁽ˡ⁾ h_j⁽ˡ⁾)`. Returns the states of
/// layers `1..=layers`.
pub fn propagate(
    g: &mut Graph<'_>,
    h0: &[Var],
    transitions: &BTreeMap<(usize, usize), Vec<Var>>,
    layers: usize,
) -> Result<Vec<Vec<Var>>> {
    let m = h0.len();
    if m < 2 {
        return Err(Error::NoPairs(m));
    }
    let mut out: Vec<Vec<Var>> = Vec::with_capacity(layers);
    let mut cur = h0.to_vec();
    for l in 0..layers {
        let mut next = Vec::with_capacity(m);
        for i in 0..m {
            let mut msgs = Vec::with_capacity(m - 1);
            for (j, &hj) in cur.iter().enumerate() {
                if i == j {
                    continue;
                }
                let b = transitions
                    .get(&(i, j))
                    .and_then(|v| v.get(l))
                    .ok_or_else(|| Error::InvalidArgument(format!("no transition matrix for ({i}, {j}) at layer {l}")))?;
                let z = g.matmul(*b, hj)?;
                msgs.push(g.relu(z));
            }
            next.push(g.add_all(&msgs)?);
        }
        out.push(next.clone());
        cur = next;
    }
    Ok(out)
}

/// `‖ₗ h_i⁽ˡ⁾ ⊙ h_j⁽ˡ⁾`.
pub fn pair_representation(g: &mut Graph<'_>, states: &[Vec<Var>], i: usize, j: usize) -> Result<Var> {
    if i == j {
        return Err(Error::InvalidArgument(format!("pair representation of mention {i} with itself")));
    }
    if states.is_empty() {
        return Err(Error::InvalidArgument("no propagation layers".into()));
    }
    let blocks = states
        .iter()
        .map(|layer| {
            let (hi, hj) = match (layer.get(i), layer.get(j)) {
                (Some(a), Some(b)) => (*a, *b),
                _ => return Err(Error::InvalidArgument(format!("pair ({i}, {j}) out of range"))),
            };
            g.mul(hi, hj)
        })
        .collect::<Result<Vec<_>>>()?;
    g.vstack(&blocks)
}

/// Vocabulary over sentence tokens and all attribute literals.
pub fn build_token_table(
    sentences: &[AnnotatedSentence],
    attributes: &AttributeStore,
    word_dim: usize,
    char_dim: usize,
) -> TokenEmbeddingTable {
    let literal_tokens: Vec<String> = attributes
        .iter()
        .flat_map(|r| r.literals().into_iter().flat_map(crate::eac::tokenize))
        .collect();
    let sentence_tokens = sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str));
    TokenEmbeddingTable::build(sentence_tokens.chain(literal_tokens.iter().map(String::as_str)), word_dim, char_dim)
}
