use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{Neighborhoods, TripleModel};
use crate::error::{Error, Result};
use crate::kgstore::{sample_negatives, CorruptionMode, KnowledgeGraph, TripleIdx};
use crate::numkit::{Adam, Graph, ParamStore, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Entities per batch; 0 means the whole entity set.
    pub batch_entities: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Negatives drawn per positive triple.
    pub negatives: usize,
    pub corruption: CorruptionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_entities: 0,
            epochs: 100,
            learning_rate: 1e-3,
            negatives: 2,
            corruption: CorruptionMode::Relation,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sum of batch losses per epoch, each taken before that batch's update.
    pub epoch_losses: Vec<f64>,
}

/// Positive triples of a batch (those whose head is in the batch) paired
/// with freshly drawn negatives. Positives with no valid negative are
/// dropped.
fn batch_groups(
    kg: &KnowledgeGraph,
    batch: &BTreeSet<usize>,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<(TripleIdx, Vec<TripleIdx>)>> {
    let mut groups = Vec::new();
    for &e in batch {
        for pos in kg.outgoing(e) {
            match sample_negatives(kg, pos, cfg.negatives, cfg.corruption, rng) {
                Ok(negs) => groups.push((pos, negs)),
                Err(Error::ExhaustedNegatives { .. }) => {
                    log::debug!("no negative for {:?}, skipping", kg.to_named(pos));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(groups)
}

/// Batch-wise margin-ranking training. Entities are reshuffled every epoch
/// and split into batches; each batch updates the shared weights plus the
/// initial embeddings of its own entities only.
pub fn train_batchwise(
    model: &TripleModel,
    params: &mut ParamStore,
    kg: &KnowledgeGraph,
    nb: &Neighborhoods,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    let n = kg.num_entities();
    if cfg.negatives == 0 {
        return Err(Error::InvalidArgument("negatives must be at least 1".into()));
    }
    if cfg.batch_entities > n {
        return Err(Error::InvalidArgument(format!(
            "batch of {} entities exceeds the {n} in the graph",
            cfg.batch_entities
        )));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let batch_size = if cfg.batch_entities == 0 { n } else { cfg.batch_entities };
    let mut opt = Adam::new(cfg.learning_rate);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: BTreeSet<usize> = chunk.iter().copied().collect();
            let groups = batch_groups(kg, &batch, cfg, rng)?;
            let (loss, mut grads) = {
                let mut g = Graph::new(params);
                let Some(l) = model.loss(&mut g, nb, &groups)? else {
                    continue;
                };
                (g.scalar(l), g.backward(l)?)
            };
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    hint: "non-finite loss; lower the learning rate".into(),
                });
            }
            grads.retain_rows(model.entity_param(), &batch);
            opt.step(params, &grads);
            epoch_loss += loss;
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        report.epoch_losses.push(epoch_loss);
    }
    if !params.all_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            hint: "parameters became non-finite".into(),
        });
    }
    Ok(report)
}

/// Total margin loss over every triple of `kg` with deterministic
/// negatives (all candidates), without updating anything.
pub fn full_loss(model: &TripleModel, params: &ParamStore, kg: &KnowledgeGraph, nb: &Neighborhoods, mode: CorruptionMode) -> Result<f64> {
    let groups: Vec<(TripleIdx, Vec<TripleIdx>)> = kg
        .triples()
        .iter()
        .map(|&t| (t, crate::kgstore::negative_candidates(kg, t, mode)))
        .filter(|(_, n)| !n.is_empty())
        .collect();
    let mut g = Graph::new(params);
    Ok(match model.loss(&mut g, nb, &groups)? {
        Some(l) => g.scalar(l),
        None => 0.0,
    })
}
