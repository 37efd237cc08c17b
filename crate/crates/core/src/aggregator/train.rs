use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::context::TripleContext;
use super::model::{argmax, PairPrediction, ReconModel};
use crate::error::{Error, Result};
use crate::evalstats::PredictionRecord;
use crate::kgstore::{AnnotatedSentence, AttributeStore};
use crate::numkit::{softmax, Adam, Graph, ParamStore, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sentences per optimizer step.
    pub batch_sentences: usize,
}

impl Default for ReconTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_sentences: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    /// Mean cross-entropy per labeled pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Summed cross-entropy of the gold labels of `batch` as a graph node,
/// plus the number of pairs it covers.
pub fn batch_loss<'p>(
    g: &mut Graph<'p>,
    model: &ReconModel,
    batch: &[&AnnotatedSentence],
    attributes: &AttributeStore,
    ctx: Option<&TripleContext>,
) -> Result<Option<(crate::numkit::Var, usize)>> {
    let mut terms = Vec::new();
    for s in batch {
        let logits = model.sentence_logits(g, s, attributes, ctx)?;
        for (z, p) in logits.into_iter().zip(&s.pairs) {
            let gold = model
                .label_index(&p.relation)
                .ok_or_else(|| Error::InvalidArgument(format!("label {:?} is not in the model's label set", p.relation)))?;
            let ls = g.log_softmax(z);
            let lp = g.pick(ls, gold)?;
            terms.push(g.scale(lp, -1.0));
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let n = terms.len();
    Ok(Some((g.add_all(&terms)?, n)))
}

/// Adam on mean cross-entropy over all labeled pairs. Sentence order is
/// reshuffled every epoch. Only `params` is updated, so an attached triple
/// model stays frozen.
pub fn train_recon(
    model: &ReconModel,
    params: &mut ParamStore,
    sentences: &[AnnotatedSentence],
    attributes: &AttributeStore,
    ctx: Option<&TripleContext>,
    cfg: &ReconTrainConfig,
    rng: &mut Rng,
) -> Result<ReconReport> {
    if cfg.batch_sentences == 0 {
        return Err(Error::InvalidArgument("batch_sentences must be positive".into()));
    }
    let mut opt = Adam::new(cfg.learning_rate);
    let mut report = ReconReport::default();
    let mut order: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].pairs.is_empty()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_sentences) {
            let batch: Vec<&AnnotatedSentence> = chunk.iter().map(|&i| &sentences[i]).collect();
            let grads = {
                let mut g = Graph::new(params);
                let Some((loss, n)) = batch_loss(&mut g, model, &batch, attributes, ctx)? else {
                    continue;
                };
                let value = g.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        hint: "cross-entropy became non-finite; lower the learning rate".into(),
                    });
                }
                total += value;
                count += n;
                let mut grads = g.backward(loss)?;
                grads.scale(1.0 / n as f64);
                grads
            };
            if !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    hint: "non-finite gradient".into(),
                });
            }
            opt.step(params, &grads);
        }
        let mean = if count == 0 { 0.0 } else { total / count as f64 };
        log::debug!("recon epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Predictions for every labeled pair.
pub fn predict(
    model: &ReconModel,
    params: &ParamStore,
    sentences: &[AnnotatedSentence],
    attributes: &AttributeStore,
    ctx: Option<&TripleContext>,
) -> Result<Vec<PairPrediction>> {
    let mut out = Vec::new();
    for (si, s) in sentences.iter().enumerate() {
        let mut g = Graph::new(params);
        let logits = model.sentence_logits(&mut g, s, attributes, ctx)?;
        for (pi, (z, p)) in logits.into_iter().zip(&s.pairs).enumerate() {
            let probabilities = softmax(&g.to_vec(z))?;
            let predicted = argmax(&probabilities);
            out.push(PairPrediction {
                sentence: si,
                pair: pi,
                head: s.mentions[p.head].id.clone(),
                tail: s.mentions[p.tail].id.clone(),
                confidence: probabilities[predicted],
                probabilities,
                predicted,
            });
        }
    }
    Ok(out)
}

/// Joins predictions with gold labels into export records.
pub fn prediction_records(
    model: &ReconModel,
    sentences: &[AnnotatedSentence],
    predictions: &[PairPrediction],
) -> Vec<PredictionRecord> {
    predictions
        .iter()
        .map(|p| PredictionRecord {
            sentence: p.sentence,
            head: p.head.clone(),
            tail: p.tail.clone(),
            gold: sentences[p.sentence].pairs[p.pair].relation.clone(),
            predicted: model.labels[p.predicted].clone(),
            confidence: p.confidence,
            distribution: model
                .labels
                .iter()
                .cloned()
                .zip(p.probabilities.iter().copied())
                .collect::<BTreeMap<_, _>>(),
        })
        .collect()
}

/// Fraction of pairs (NA included) whose prediction equals the gold label.
pub fn accuracy(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.gold == r.predicted).count() as f64 / records.len() as f64
}
