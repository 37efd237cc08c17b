use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgstore::{KnowledgeGraph, NeighborhoodTriple, TripleIdx, TwoHopPaths};
use crate::numkit::{
    l1_norm, uniform_init, xavier_init, Graph, ParamId, ParamStore, Rng, Tensor, Var, LEAKY_SLOPE,
};

pub const TRIPLER_PREFIX: &str = "tripler";

/// Whether the translation is enforced on `e″` directly or on the
/// per-relation transforms `tanh(W_r e″)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceMode {
    Same,
    #[default]
    Separate,
}

impl std::str::FromStr for SpaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" => Ok(Self::Same),
            "separate" => Ok(Self::Separate),
            other => Err(Error::InvalidArgument(format!("unknown space mode `{other}`"))),
        }
    }
}

/// `Standard` is `max(γ + d_pos − d_neg, 0)`; `AsPrinted` swaps the two
/// distances and exists only for auditing that variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossOrientation {
    #[default]
    Standard,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriplerConfig {
    pub init_dim: usize,
    pub final_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub margin: f64,
    pub mode: SpaceMode,
    /// `None` restricts neighborhoods to incident triples.
    pub two_hop: Option<TwoHopPaths>,
    pub orientation: LossOrientation,
}

impl Default for TriplerConfig {
    fn default() -> Self {
        Self {
            init_dim: 50,
            final_dim: 200,
            heads: 2,
            layers: 2,
            margin: 1.0,
            mode: SpaceMode::Separate,
            two_hop: Some(TwoHopPaths::Outgoing),
            orientation: LossOrientation::Standard,
        }
    }
}

impl TriplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.init_dim == 0 || self.final_dim == 0 {
            return bad("embedding dimensions must be positive".into());
        }
        if self.heads == 0 || self.layers == 0 {
            return bad("heads and layers must be at least 1".into());
        }
        if !self.final_dim.is_multiple_of(self.heads) {
            return bad(format!("final_dim {} not divisible by {} heads", self.final_dim, self.heads));
        }
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.final_dim / self.heads
    }

    /// Entity/relation input width of a GAT layer.
    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.init_dim
        } else {
            self.final_dim
        }
    }
}

/// Per-entity attention domains, with a self-loop (on the reserved self
/// relation) for entities that have no neighbors at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhoods {
    lists: Vec<Vec<NeighborhoodTriple>>,
}

impl Neighborhoods {
    pub fn build(kg: &KnowledgeGraph, two_hop: Option<TwoHopPaths>) -> Result<Self> {
        let self_rel = kg.num_relations();
        let lists = (0..kg.num_entities())
            .map(|e| {
                let mut n = kg.neighborhood(e, two_hop)?;
                if n.is_empty() {
                    n.push(NeighborhoodTriple {
                        head: e,
                        tail: e,
                        hop: 1,
                        relations: vec![self_rel],
                    });
                }
                Ok(n)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lists })
    }

    /// Wraps raw lists without injecting self-loops.
    pub fn from_lists(lists: Vec<Vec<NeighborhoodTriple>>) -> Self {
        Self { lists }
    }

    pub fn get(&self, e: usize) -> Result<&[NeighborhoodTriple]> {
        let list = self
            .lists
            .get(e)
            .ok_or_else(|| Error::UnknownEntity(format!("#{e}")))?;
        if list.is_empty() {
            return Err(Error::IsolatedEntity(format!("#{e}")));
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn total(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Ids {
    ent: ParamId,
    rel: ParamId,
    /// `gat[layer][head] = (W, w₂)`.
    gat: Vec<Vec<(ParamId, ParamId)>>,
    w_e: ParamId,
    w_r: ParamId,
    rel_tf: Vec<ParamId>,
}

/// Final embeddings `e″` and `r″`, one row per entity / KG relation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub entities: Tensor,
    pub relations: Tensor,
}

/// Output of a differentiable forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub entities: BTreeMap<usize, Var>,
    pub attention: Vec<AttentionRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    pub entity: usize,
    /// `1 x |neighborhood|` row of attention weights.
    pub weights: Var,
}

/// Graph-attention triple model bound to parameters in a [`ParamStore`].
/// Relation row `num_relations` is the reserved self-loop relation.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleModel {
    pub config: TriplerConfig,
    num_entities: usize,
    num_relations: usize,
    ids: Ids,
}

fn pname(rest: &str) -> String {
    format!("{TRIPLER_PREFIX}.{rest}")
}

impl TripleModel {
    pub fn init(
        store: &mut ParamStore,
        num_entities: usize,
        num_relations: usize,
        config: TriplerConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        if num_entities == 0 {
            return Err(Error::InvalidArgument("cannot build a triple model over zero entities".into()));
        }
        let (d0, df, dh) = (config.init_dim, config.final_dim, config.head_dim());
        store.insert(pname("ent"), uniform_init(rng, num_entities, d0, 0.1));
        store.insert(pname("rel"), uniform_init(rng, num_relations + 1, d0, 0.1));
        for l in 0..config.layers {
            let din = config.layer_input_dim(l);
            for x in 0..config.heads {
                store.insert(pname(&format!("gat.{l}.{x}.w")), xavier_init(rng, dh, 3 * din));
                store.insert(pname(&format!("gat.{l}.{x}.a")), xavier_init(rng, 1, dh));
            }
        }
        store.insert(pname("w_e"), xavier_init(rng, df, d0));
        store.insert(pname("w_r"), xavier_init(rng, df, d0));
        if config.mode == SpaceMode::Separate {
            for r in 0..num_relations {
                let mut w = xavier_init(rng, df, df);
                for (i, v) in w.data_mut().iter_mut().enumerate() {
                    *v = *v * 0.1 + if i / df == i % df { 1.0 } else { 0.0 };
                }
                store.insert(pname(&format!("rel_tf.{r}")), w);
            }
        }
        Self::bind(store, num_entities, num_relations, config)
    }

    pub fn bind(store: &ParamStore, num_entities: usize, num_relations: usize, config: TriplerConfig) -> Result<Self> {
        config.validate()?;
        let get = |rest: &str, shape: [usize; 2]| -> Result<ParamId> {
            let name = pname(rest);
            let id = store
                .id(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))?;
            if store.tensor(id).shape() != shape {
                return Err(Error::shape(
                    "bind tripler",
                    format!("{name} has shape {:?}, expected {shape:?}", store.tensor(id).shape()),
                ));
            }
            Ok(id)
        };
        let (d0, df, dh) = (config.init_dim, config.final_dim, config.head_dim());
        let gat = (0..config.layers)
            .map(|l| {
                let din = config.layer_input_dim(l);
                (0..config.heads)
                    .map(|x| {
                        Ok((
                            get(&format!("gat.{l}.{x}.w"), [dh, 3 * din])?,
                            get(&format!("gat.{l}.{x}.a"), [1, dh])?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let rel_tf = match config.mode {
            SpaceMode::Separate => (0..num_relations)
                .map(|r| get(&format!("rel_tf.{r}"), [df, df]))
                .collect::<Result<Vec<_>>>()?,
            SpaceMode::Same => Vec::new(),
        };
        Ok(Self {
            config,
            num_entities,
            num_relations,
            ids: Ids {
                ent: get("ent", [num_entities, d0])?,
                rel: get("rel", [num_relations + 1, d0])?,
                gat,
                w_e: get("w_e", [df, d0])?,
                w_r: get("w_r", [df, d0])?,
                rel_tf,
            },
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn self_relation(&self) -> usize {
        self.num_relations
    }

    pub fn entity_param(&self) -> ParamId {
        self.ids.ent
    }

    /// Parameter ids of the attention heads, `[layer][head] = (W, w₂)`.
    pub fn attention_params(&self, layer: usize, head: usize) -> Result<(ParamId, ParamId)> {
        self.ids
            .gat
            .get(layer)
            .and_then(|h| h.get(head))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no attention head {head} at layer {layer}")))
    }

    fn check_entity(&self, e: usize) -> Result<()> {
        if e >= self.num_entities {
            return Err(Error::UnknownEntity(format!("#{e}")));
        }
        Ok(())
    }

    fn check_relation(&self, r: usize) -> Result<()> {
        if r >= self.num_relations {
            return Err(Error::UnknownRelation(format!("#{r}")));
        }
        Ok(())
    }

    /// `τ = W [e_h ‖ e_t ‖ r]` for one attention head.
    pub fn triple_vector(
        &self,
        params: &ParamStore,
        e_h: &[f64],
        e_t: &[f64],
        r: &[f64],
        layer: usize,
        head: usize,
    ) -> Result<Vec<f64>> {
        let (w, _) = self.attention_params(layer, head)?;
        let din = self.config.layer_input_dim(layer);
        if e_h.len() != din || e_t.len() != din || r.len() != din {
            return Err(Error::shape(
                "triple_vector",
                format!("inputs {}/{}/{} at layer {layer} expecting {din}", e_h.len(), e_t.len(), r.len()),
            ));
        }
        let x = Tensor::vector([e_h, e_t, r].concat());
        Ok(params.tensor(w).matmul(&x)?.into_data())
    }

    fn relation_input(
        &self,
        g: &mut Graph<'_>,
        cache: &mut HashMap<Vec<usize>, Var>,
        layer: usize,
        rels: &[usize],
    ) -> Result<Var> {
        if let Some(v) = cache.get(rels) {
            return Ok(*v);
        }
        let parts = rels
            .iter()
            .map(|&r| {
                let raw = g.embed_row(self.ids.rel, r)?;
                if layer == 0 {
                    Ok(raw)
                } else {
                    g.linear(self.ids.w_r, raw)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let v = g.add_all(&parts)?;
        cache.insert(rels.to_vec(), v);
        Ok(v)
    }

    /// Differentiable forward pass computing `e″` for `targets`. Only the
    /// entities the targets transitively depend on are evaluated.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        nb: &Neighborhoods,
        targets: &BTreeSet<usize>,
        record_attention: bool,
    ) -> Result<ForwardPass> {
        let layers = self.config.layers;
        for &e in targets {
            self.check_entity(e)?;
        }
        let mut sets = vec![BTreeSet::new(); layers + 1];
        sets[layers] = targets.clone();
        for l in (0..layers).rev() {
            let mut s = sets[l + 1].clone();
            for &e in &sets[l + 1] {
                for n in nb.get(e)? {
                    s.insert(n.head);
                    s.insert(n.tail);
                }
            }
            sets[l] = s;
        }
        let mut cur = BTreeMap::new();
        for &e in &sets[0] {
            self.check_entity(e)?;
            cur.insert(e, g.embed_row(self.ids.ent, e)?);
        }
        let raw: BTreeMap<usize, Var> = targets.iter().map(|e| (*e, cur[e])).collect();
        let mut attention = Vec::new();
        for (l, set) in sets.iter().enumerate().skip(1) {
            let layer = l - 1;
            let mut rel_cache = HashMap::new();
            let mut next = BTreeMap::new();
            for &e in set {
                let mut cols = Vec::new();
                for n in nb.get(e)? {
                    let r = self.relation_input(g, &mut rel_cache, layer, &n.relations)?;
                    cols.push(g.vstack(&[cur[&n.head], cur[&n.tail], r])?);
                }
                let m = g.hstack(&cols)?;
                let mut heads = Vec::with_capacity(self.config.heads);
                for (x, &(w, a)) in self.ids.gat[layer].iter().enumerate() {
                    let wv = g.param(w);
                    let av = g.param(a);
                    let tau = g.matmul(wv, m)?;
                    let logits = g.matmul(av, tau)?;
                    let b = g.leaky_relu(logits, LEAKY_SLOPE);
                    let alpha = g.softmax(b);
                    if record_attention {
                        attention.push(AttentionRecord {
                            layer,
                            head: x,
                            entity: e,
                            weights: alpha,
                        });
                    }
                    let at = g.transpose(alpha);
                    heads.push(g.matmul(tau, at)?);
                }
                let cat = g.vstack(&heads)?;
                next.insert(e, g.elu(cat));
            }
            cur = next;
        }
        let mut entities = BTreeMap::new();
        for (&e, &r) in &raw {
            let res = g.linear(self.ids.w_e, r)?;
            entities.insert(e, g.add(cur[&e], res)?);
        }
        Ok(ForwardPass { entities, attention })
    }

    /// `r″ = W^R r` as a graph node.
    pub fn relation_final(&self, g: &mut Graph<'_>, r: usize) -> Result<Var> {
        if r > self.num_relations {
            return Err(Error::UnknownRelation(format!("#{r}")));
        }
        let raw = g.embed_row(self.ids.rel, r)?;
        g.linear(self.ids.w_r, raw)
    }

    /// Projection into relation `r`'s space (`tanh(W_r e″)`), or the vector
    /// itself in same-space mode.
    pub fn project(&self, g: &mut Graph<'_>, e: Var, r: usize) -> Result<Var> {
        match self.config.mode {
            SpaceMode::Same => Ok(e),
            SpaceMode::Separate => {
                self.check_relation(r)?;
                let lin = g.linear(self.ids.rel_tf[r], e)?;
                Ok(g.tanh(lin))
            }
        }
    }

    /// Differentiable L1 translation distance.
    pub fn distance(&self, g: &mut Graph<'_>, e_h: Var, e_t: Var, r: usize) -> Result<Var> {
        self.check_relation(r)?;
        let rr = self.relation_final(g, r)?;
        let h = self.project(g, e_h, r)?;
        let t = self.project(g, e_t, r)?;
        let s = g.add(h, rr)?;
        let d = g.sub(s, t)?;
        Ok(g.l1(d))
    }

    /// Margin ranking term of one (positive, negative) pair.
    pub fn hinge(&self, g: &mut Graph<'_>, d_pos: Var, d_neg: Var) -> Result<Var> {
        let diff = match self.config.orientation {
            LossOrientation::Standard => g.sub(d_pos, d_neg)?,
            LossOrientation::AsPrinted => g.sub(d_neg, d_pos)?,
        };
        let m = g.constant(Tensor::matrix(1, 1, vec![self.config.margin]));
        let s = g.add(diff, m)?;
        Ok(g.relu(s))
    }

    /// Margin loss over `(positive, negatives)` groups, as a graph node.
    /// Returns `None` when there is nothing to score.
    pub fn loss(
        &self,
        g: &mut Graph<'_>,
        nb: &Neighborhoods,
        groups: &[(TripleIdx, Vec<TripleIdx>)],
    ) -> Result<Option<Var>> {
        let mut targets = BTreeSet::new();
        for (p, negs) in groups {
            for t in std::iter::once(p).chain(negs) {
                targets.insert(t.head);
                targets.insert(t.tail);
            }
        }
        if targets.is_empty() {
            return Ok(None);
        }
        let fwd = self.forward(g, nb, &targets, false)?;
        let mut terms = Vec::new();
        for (p, negs) in groups {
            let dp = self.distance(g, fwd.entities[&p.head], fwd.entities[&p.tail], p.relation)?;
            for n in negs {
                let dn = self.distance(g, fwd.entities[&n.head], fwd.entities[&n.tail], n.relation)?;
                terms.push(self.hinge(g, dp, dn)?);
            }
        }
        if terms.is_empty() {
            return Ok(None);
        }
        Ok(Some(g.add_all(&terms)?))
    }

    /// Attention weights of `entity` at `layer`/`head` over its neighborhood.
    pub fn attention_weights(
        &self,
        params: &ParamStore,
        nb: &Neighborhoods,
        entity: usize,
        layer: usize,
        head: usize,
    ) -> Result<Vec<f64>> {
        self.attention_params(layer, head)?;
        let mut g = Graph::new(params);
        let fwd = self.forward(&mut g, nb, &BTreeSet::from([entity]), true)?;
        let rec = fwd
            .attention
            .iter()
            .find(|a| a.entity == entity && a.layer == layer && a.head == head)
            .expect("target entity is evaluated at every layer");
        Ok(g.to_vec(rec.weights))
    }

    /// Every attention distribution of a full forward pass, keyed by
    /// `(layer, head, entity)`.
    pub fn all_attention(&self, params: &ParamStore, nb: &Neighborhoods) -> Result<Vec<((usize, usize, usize), Vec<f64>)>> {
        let mut g = Graph::new(params);
        let all: BTreeSet<usize> = (0..self.num_entities).collect();
        let fwd = self.forward(&mut g, nb, &all, true)?;
        Ok(fwd
            .attention
            .iter()
            .map(|a| ((a.layer, a.head, a.entity), g.to_vec(a.weights)))
            .collect())
    }

    /// `e″` for every entity and `r″` for every KG relation.
    pub fn forward_embeddings(&self, params: &ParamStore, nb: &Neighborhoods) -> Result<EmbeddingSet> {
        let mut g = Graph::new(params);
        let all: BTreeSet<usize> = (0..self.num_entities).collect();
        let fwd = self.forward(&mut g, nb, &all, false)?;
        let df = self.config.final_dim;
        let mut ents = Vec::with_capacity(self.num_entities * df);
        for v in fwd.entities.values() {
            ents.extend_from_slice(g.value(*v).data());
        }
        let w_r = params.tensor(self.ids.w_r);
        let rel = params.tensor(self.ids.rel);
        let mut rels = Vec::with_capacity(self.num_relations * df);
        for r in 0..self.num_relations {
            rels.extend(w_r.matmul(&Tensor::vector(rel.row(r).to_vec()))?.into_data());
        }
        let set = EmbeddingSet {
            entities: Tensor::matrix(self.num_entities, df, ents),
            relations: Tensor::matrix(self.num_relations, df, rels),
        };
        if !set.entities.is_finite() || !set.relations.is_finite() {
            return Err(Error::NonFinite("forward embeddings".into()));
        }
        Ok(set)
    }

    /// `tanh(W_r e″)`.
    pub fn to_relation_space(&self, params: &ParamStore, e: &[f64], r: usize) -> Result<Vec<f64>> {
        if self.config.mode == SpaceMode::Same {
            return Err(Error::NoRelationTransform);
        }
        self.check_relation(r)?;
        let w = params.tensor(self.ids.rel_tf[r]);
        if e.len() != w.cols() {
            return Err(Error::shape("to_relation_space", format!("{} vs {}", e.len(), w.cols())));
        }
        Ok(w.matmul(&Tensor::vector(e.to_vec()))?.map(f64::tanh).into_data())
    }

    fn operand(&self, params: &ParamStore, e: &[f64], r: usize) -> Result<Vec<f64>> {
        match self.config.mode {
            SpaceMode::Same => Ok(e.to_vec()),
            SpaceMode::Separate => self.to_relation_space(params, e, r),
        }
    }

    /// L1 distance of a triple under precomputed embeddings.
    pub fn triple_distance(&self, params: &ParamStore, emb: &EmbeddingSet, t: TripleIdx) -> Result<f64> {
        self.check_entity(t.head)?;
        self.check_entity(t.tail)?;
        self.check_relation(t.relation)?;
        let h = self.operand(params, emb.entities.row(t.head), t.relation)?;
        let tl = self.operand(params, emb.entities.row(t.tail), t.relation)?;
        Ok(translation_distance(&h, emb.relations.row(t.relation), &tl))
    }

    /// Distances of `(head, r, tail)` for every KG relation `r`.
    pub fn relation_distances(&self, params: &ParamStore, emb: &EmbeddingSet, head: usize, tail: usize) -> Result<Vec<f64>> {
        (0..self.num_relations)
            .map(|r| {
                self.triple_distance(
                    params,
                    emb,
                    TripleIdx {
                        head,
                        relation: r,
                        tail,
                    },
                )
            })
            .collect()
    }
}

/// `‖h + r − t‖₁`.
pub fn translation_distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let residual: Vec<f64> = h.iter().zip(r).zip(t).map(|((a, b), c)| a + b - c).collect();
    l1_norm(&residual)
}

/// `Σ max(γ + d_pos − d_neg, 0)` over paired distances.
pub fn margin_loss(pos: &[f64], neg: &[f64], margin: f64) -> Result<f64> {
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("margin must be non-negative, got {margin}")));
    }
    if pos.len() != neg.len() {
        return Err(Error::shape("margin_loss", format!("{} positives vs {} negatives", pos.len(), neg.len())));
    }
    Ok(pos.iter().zip(neg).map(|(p, n)| (margin + p - n).max(0.0)).sum())
}
