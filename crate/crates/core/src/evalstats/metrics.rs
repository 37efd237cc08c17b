use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgstore::NA;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub micro: Prf,
    pub macro_avg: Prf,
    pub per_label: BTreeMap<String, LabelScore>,
    /// Pairs left after dropping gold-NA.
    pub scored: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Precision/recall/F1 with the NA class ignored: pairs whose gold label is
/// NA are dropped, and predicting NA never counts as a false positive. A
/// wrong non-NA prediction is a false positive for the predicted label and
/// a false negative for the gold one. Macro scores average over labels that
/// occur in gold; macro F1 is the mean of per-label F1.
pub fn prf<S: AsRef<str>>(predictions: &[S], gold: &[S]) -> Result<PrfReport> {
    if predictions.len() != gold.len() {
        return Err(Error::shape("prf", format!("{} predictions vs {} gold", predictions.len(), gold.len())));
    }
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut scored = 0;
    for (p, g) in predictions.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if g == NA {
            continue;
        }
        scored += 1;
        *support.entry(g).or_default() += 1;
        if p == g {
            *tp.entry(g).or_default() += 1;
        } else if p != NA {
            *fp.entry(p).or_default() += 1;
        }
    }
    if support.is_empty() {
        return Err(Error::NoNonNaGold);
    }
    let total_tp: usize = tp.values().sum();
    let total_fp: usize = fp.values().sum();
    let micro = Prf::new(ratio(total_tp, total_tp + total_fp), ratio(total_tp, scored));
    let mut per_label = BTreeMap::new();
    for (&label, &n) in &support {
        let t = tp.get(label).copied().unwrap_or(0);
        let f = fp.get(label).copied().unwrap_or(0);
        let s = Prf::new(ratio(t, t + f), ratio(t, n));
        per_label.insert(
            label.to_string(),
            LabelScore {
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                support: n,
            },
        );
    }
    let k = per_label.len() as f64;
    let macro_avg = Prf {
        precision: per_label.values().map(|s| s.precision).sum::<f64>() / k,
        recall: per_label.values().map(|s| s.recall).sum::<f64>() / k,
        f1: per_label.values().map(|s| s.f1).sum::<f64>() / k,
    };
    Ok(PrfReport {
        micro,
        macro_avg,
        per_label,
        scored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub confidence: f64,
    pub correct: bool,
}

/// Precision among the `ceil(K% · n)` most confident predictions (stable
/// order on ties).
pub fn precision_at_percent(items: &[Scored], k_percent: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("no predictions to rank".into()));
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::InvalidArgument(format!("K must be in (0, 100], got {k_percent}")));
    }
    let mut order: Vec<&Scored> = items.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let take = ((k_percent / 100.0 * items.len() as f64).ceil() as usize).clamp(1, items.len());
    Ok(order[..take].iter().filter(|s| s.correct).count() as f64 / take as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// One (recall, precision) point per distinct confidence, highest first.
/// Every non-NA prediction is retrieved (a gold-NA pair predicted as a
/// relation is a false positive); NA predictions are never retrieved.
/// Recall is over the non-NA gold pairs.
pub fn pr_curve<S: AsRef<str>>(predictions: &[S], gold: &[S], confidences: &[f64]) -> Result<Vec<PrPoint>> {
    if predictions.len() != gold.len() || gold.len() != confidences.len() {
        return Err(Error::shape("pr_curve", "predictions, gold and confidences differ in length".to_string()));
    }
    let mut relevant = 0usize;
    let mut retrieved: Vec<(f64, bool)> = Vec::new();
    for ((p, g), &c) in predictions.iter().zip(gold).zip(confidences) {
        let (p, g) = (p.as_ref(), g.as_ref());
        relevant += (g != NA) as usize;
        if p != NA {
            retrieved.push((c, p == g));
        }
    }
    if relevant == 0 {
        return Err(Error::NoNonNaGold);
    }
    retrieved.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (i, &(c, ok)) in retrieved.iter().enumerate() {
        seen += 1;
        tp += ok as usize;
        let last_of_group = retrieved.get(i + 1).is_none_or(|n| n.0 != c);
        if last_of_group {
            points.push(PrPoint {
                recall: ratio(tp, relevant),
                precision: ratio(tp, seen),
            });
        }
    }
    Ok(points)
}

pub fn format_pr_csv(points: &[PrPoint]) -> String {
    let mut s = String::from("recall,precision\n");
    for p in points {
        let _ = writeln!(s, "{:.6},{:.6}", p.recall, p.precision);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    /// `(N, hits@N)` in the order requested.
    pub hits: Vec<(usize, f64)>,
    pub mean_rank: f64,
    pub mrr: f64,
    pub count: usize,
}

impl RankingMetrics {
    pub fn hits_at(&self, n: usize) -> Option<f64> {
        self.hits.iter().find(|(k, _)| *k == n).map(|(_, h)| *h)
    }
}

pub fn ranking_metrics(ranks: &[usize], ns: &[usize]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    Ok(RankingMetrics {
        hits: ns
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect(),
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        count: ranks.len(),
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence: usize,
    pub head: String,
    pub tail: String,
    pub gold: String,
    pub predicted: String,
    pub confidence: f64,
    /// Full label distribution, when the producer recorded it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub distribution: BTreeMap<String, f64>,
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn format_predictions(records: &[PredictionRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

pub fn save_predictions(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_predictions(records)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro: Prf,
    pub macro_avg: Prf,
    pub per_label: BTreeMap<String, LabelScore>,
    /// Over non-NA predictions; `None` if the model never predicted a relation.
    pub p_at_10: Option<f64>,
    pub p_at_30: Option<f64>,
    pub samples: usize,
}

/// Full report over a predictions file. P@K% ranks every non-NA
/// prediction; one whose gold label differs (NA included) counts as wrong.
pub fn evaluate(records: &[PredictionRecord]) -> Result<EvalReport> {
    let pred: Vec<&str> = records.iter().map(|r| r.predicted.as_str()).collect();
    let gold: Vec<&str> = records.iter().map(|r| r.gold.as_str()).collect();
    let base = prf(&pred, &gold)?;
    let scored: Vec<Scored> = records
        .iter()
        .filter(|r| r.predicted != NA)
        .map(|r| Scored {
            confidence: r.confidence,
            correct: r.predicted == r.gold,
        })
        .collect();
    let at = |k| precision_at_percent(&scored, k).ok();
    Ok(EvalReport {
        micro: base.micro,
        macro_avg: base.macro_avg,
        per_label: base.per_label,
        p_at_10: at(10.0),
        p_at_30: at(30.0),
        samples: records.len(),
    })
}

/// Labels occurring anywhere in `records`, for reporting.
pub fn label_set(records: &[PredictionRecord]) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|r| [r.gold.clone(), r.predicted.clone()])
        .collect()
}
