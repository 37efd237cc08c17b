use serde::{Deserialize, Serialize};

use super::graph::{KnowledgeGraph, TripleIdx};
use crate::error::{Error, Result};
use crate::numkit::Rng;

/// Which slot of a positive triple is replaced to build a negative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionMode {
    /// Keep the entity pair, swap in a relation that does not hold.
    #[default]
    Relation,
    Head,
    Tail,
}

/// Draws `k` triples not in the graph by corrupting one slot of `triple`.
/// Rejection sampling over the candidates that are actually invalid, so
/// the draw is uniform over the valid negatives and never loops forever.
pub fn sample_negatives(
    kg: &KnowledgeGraph,
    triple: TripleIdx,
    k: usize,
    mode: CorruptionMode,
    rng: &mut Rng,
) -> Result<Vec<TripleIdx>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let candidates = negative_candidates(kg, triple, mode);
    if candidates.is_empty() {
        let n = kg.to_named(triple);
        return Err(Error::ExhaustedNegatives {
            head: n.head,
            relation: n.relation,
            tail: n.tail,
        });
    }
    Ok((0..k).map(|_| candidates[rng.index(candidates.len())]).collect())
}

/// All corruptions of `triple` under `mode` that are absent from the graph.
pub fn negative_candidates(kg: &KnowledgeGraph, triple: TripleIdx, mode: CorruptionMode) -> Vec<TripleIdx> {
    let swap = |x: usize| match mode {
        CorruptionMode::Relation => TripleIdx { relation: x, ..triple },
        CorruptionMode::Head => TripleIdx { head: x, ..triple },
        CorruptionMode::Tail => TripleIdx { tail: x, ..triple },
    };
    let n = match mode {
        CorruptionMode::Relation => kg.num_relations(),
        _ => kg.num_entities(),
    };
    (0..n).map(swap).filter(|t| !kg.contains(*t)).collect()
}
