use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{ParamStore, Tensor};
use crate::tripler::{translation_distance, EmbeddingSet, Neighborhoods, SpaceMode, TripleModel};

/// Which tripler vectors fill the classifier's head/tail entity slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityFeature {
    /// Final embeddings `e″` (after attention and residual).
    #[default]
    Final,
    /// The raw initial embedding rows.
    Initial,
}

/// A trained triple model with its embeddings precomputed. It is read-only
/// for the aggregator: nothing here receives gradients.
#[derive(Debug, Clone)]
pub struct TripleContext {
    pub model: TripleModel,
    pub params: ParamStore,
    pub embeddings: EmbeddingSet,
    entity_ids: HashMap<String, usize>,
}

impl TripleContext {
    pub fn new(model: TripleModel, params: ParamStore, nb: &Neighborhoods, entity_names: &[String]) -> Result<Self> {
        if entity_names.len() != model.num_entities() {
            return Err(Error::shape(
                "triple context",
                format!("{} names for {} entities", entity_names.len(), model.num_entities()),
            ));
        }
        let embeddings = model.forward_embeddings(&params, nb)?;
        let entity_ids = entity_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(Self {
            model,
            params,
            embeddings,
            entity_ids,
        })
    }

    pub fn mode(&self) -> SpaceMode {
        self.model.config.mode
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn feature_dim(&self, feature: EntityFeature) -> usize {
        match feature {
            EntityFeature::Final => self.model.config.final_dim,
            EntityFeature::Initial => self.model.config.init_dim,
        }
    }

    /// Entity slot vector; zeros for entities the KG does not know.
    pub fn entity_feature(&self, name: &str, feature: EntityFeature) -> Vec<f64> {
        match (self.entity_index(name), feature) {
            (Some(i), EntityFeature::Final) => self.embeddings.entities.row(i).to_vec(),
            (Some(i), EntityFeature::Initial) => self.params.tensor(self.model.entity_param()).row(i).to_vec(),
            (None, f) => vec![0.0; self.feature_dim(f)],
        }
    }

    pub fn translation(&self, head: &str, tail: &str) -> Result<Vec<f64>> {
        translation_vector(
            &self.model,
            &self.params,
            &self.embeddings,
            self.entity_index(head),
            self.entity_index(tail),
        )
    }
}

/// `t_ht`: for every KG relation `r`, `‖e_h^r + r″ − e_t^r‖₁`. Entities
/// missing from the KG contribute zero vectors.
pub fn translation_vector(
    model: &TripleModel,
    params: &ParamStore,
    emb: &EmbeddingSet,
    head: Option<usize>,
    tail: Option<usize>,
) -> Result<Vec<f64>> {
    if model.config.mode != SpaceMode::Separate {
        return Err(Error::NoRelationTransform);
    }
    let zero = vec![0.0; model.config.final_dim];
    let row = |e: Option<usize>| -> Result<&[f64]> {
        match e {
            Some(i) if i < emb.entities.rows() => Ok(emb.entities.row(i)),
            Some(i) => Err(Error::UnknownEntity(format!("#{i}"))),
            None => Ok(&zero),
        }
    };
    let (h, t) = (row(head)?, row(tail)?);
    (0..model.num_relations())
        .map(|r| {
            let hr = model.to_relation_space(params, h, r)?;
            let tr = model.to_relation_space(params, t, r)?;
            Ok(translation_distance(&hr, emb.relations.row(r), &tr))
        })
        .collect()
}

/// `v_htr = tanh(W [r ‖ e_h^r ‖ e_t^r])`.
pub fn triple_context_vector(w: &Tensor, r: &[f64], e_h: &[f64], e_t: &[f64]) -> Result<Vec<f64>> {
    let x: Vec<f64> = r.iter().chain(e_h).chain(e_t).copied().collect();
    if w.cols() != x.len() {
        return Err(Error::shape("triple_context_vector", format!("W has {} columns, input {}", w.cols(), x.len())));
    }
    Ok(w.matmul(&Tensor::vector(x))?.map(f64::tanh).into_data())
}

/// `σ(rᵀ v_htr)`: the binary triple score. Provided for auditing only; the
/// classifier heads never use it.
pub fn score_triple_sigmoid(v_htr: &[f64], relation: &[f64]) -> Result<f64> {
    if v_htr.len() != relation.len() {
        return Err(Error::shape("score_triple_sigmoid", format!("{} vs {}", v_htr.len(), relation.len())));
    }
    let logit: f64 = v_htr.iter().zip(relation).map(|(a, b)| a * b).sum();
    Ok(crate::numkit::sigmoid(logit))
}
