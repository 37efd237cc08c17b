use serde::{Deserialize, Serialize};

use super::model::{EmbeddingSet, TripleModel};
use crate::error::{Error, Result};
use crate::kgstore::KnowledgeGraph;
use crate::numkit::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub head: usize,
    pub tail: usize,
    pub gold: usize,
    /// Distance per relation index.
    pub scores: Vec<f64>,
    /// 1-based; ties go to the lower relation index.
    pub rank: usize,
}

/// Rank of `gold` among `scores` (lower is better). Candidates listed in
/// `skip` (other true relations, in filtered evaluation) are not counted.
pub fn rank_of(scores: &[f64], gold: usize, skip: &[usize]) -> usize {
    let g = scores[gold];
    1 + scores
        .iter()
        .enumerate()
        .filter(|(r, s)| *r != gold && !skip.contains(r) && (**s < g || (**s == g && *r < gold)))
        .count()
}

/// Scores every relation for `(head, ?, tail)` and ranks `gold`. With
/// `filter_kg`, the pair's other true relations are excluded.
pub fn rank_relations(
    model: &TripleModel,
    params: &ParamStore,
    emb: &EmbeddingSet,
    head: usize,
    tail: usize,
    gold: usize,
    filter_kg: Option<&KnowledgeGraph>,
) -> Result<RankResult> {
    if gold >= model.num_relations() {
        return Err(Error::UnknownRelation(format!("#{gold}")));
    }
    let scores = model.relation_distances(params, emb, head, tail)?;
    let skip: Vec<usize> = match filter_kg {
        Some(kg) => kg.relations_between(head, tail).into_iter().filter(|r| *r != gold).collect(),
        None => Vec::new(),
    };
    let rank = rank_of(&scores, gold, &skip);
    Ok(RankResult {
        head,
        tail,
        gold,
        scores,
        rank,
    })
}

/// Ranks every triple of `kg` (its own relation as gold).
pub fn rank_triples(
    model: &TripleModel,
    params: &ParamStore,
    emb: &EmbeddingSet,
    kg: &KnowledgeGraph,
    filtered: bool,
) -> Result<Vec<RankResult>> {
    kg.triples()
        .iter()
        .map(|t| rank_relations(model, params, emb, t.head, t.tail, t.relation, filtered.then_some(kg)))
        .collect()
}
