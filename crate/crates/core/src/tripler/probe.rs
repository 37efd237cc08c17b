//! Small translational models built on the counterexample graphs of the
//! expressiveness argument. No attention is involved: entity and relation
//! vectors are free parameters, so any failure to fit is due to the space
//! the translation lives in.
//!
//! Each probe runs two stages from the same seed:
//! * fit: only the counterexample positives, minimizing `Σ d_pos`. In same
//!   space an exact fit forces the collapse the lemma predicts.
//! * pinned: the fit stage again, but with the vectors the lemma would
//!   collapse frozen one unit apart (L1). A near-zero loss shows the
//!   distinct configuration is representable.
//! * contrast: the positives plus one witness triple that needs the
//!   collapsed vectors to differ, minimizing `Σ d_pos + Σ hinge`.
//!
//! For lemma 4, "same" means one linear transform shared by all relations
//! and "separate" means per-relation `tanh(W_r ·)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::SpaceMode;
use crate::error::{Error, Result};
use crate::numkit::{uniform_init, xavier_init, Adam, Graph, ParamId, ParamStore, Rng, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub dim: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            steps: 4000,
            learning_rate: 0.05,
            margin: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub lemma: u8,
    pub mode: SpaceMode,
    /// `Σ d_pos` after the fit stage.
    pub fit_loss: f64,
    /// Collapse metric after the fit stage.
    pub collapse_metric: f64,
    /// Fit-stage loss with the collapsing vectors held apart.
    pub pinned_loss: f64,
    /// Contrast-stage objective after training.
    pub final_loss: f64,
    /// Collapse metric after the contrast stage.
    pub final_collapse: f64,
}

type T3 = (usize, usize, usize);

enum Metric {
    RelDiff(usize, usize),
    EntDiff(usize, usize),
    RelNorm(usize),
}

struct Setup {
    entities: usize,
    relations: usize,
    positives: Vec<T3>,
    /// Extra positives of the contrast stage.
    witness_pos: Vec<T3>,
    /// `(positive, negative)` hinge pairs of the contrast stage.
    witness_neg: Vec<(T3, T3)>,
    metric: Metric,
}

fn setup(lemma: u8) -> Result<Setup> {
    Ok(match lemma {
        1 => Setup {
            entities: 4,
            relations: 2,
            positives: vec![(0, 0, 1), (0, 1, 1)],
            witness_pos: vec![(2, 0, 3)],
            witness_neg: vec![((2, 0, 3), (2, 1, 3))],
            metric: Metric::RelDiff(0, 1),
        },
        2 | 4 => Setup {
            entities: 4,
            relations: 2,
            positives: vec![(0, 0, 1), (0, 0, 2)],
            witness_pos: vec![(1, 1, 3)],
            witness_neg: vec![((1, 1, 3), (2, 1, 3))],
            metric: Metric::EntDiff(1, 2),
        },
        3 => Setup {
            entities: 4,
            relations: 3,
            positives: vec![(0, 0, 1), (1, 1, 0), (0, 1, 2), (1, 2, 3), (2, 2, 3)],
            witness_pos: vec![],
            witness_neg: vec![((0, 0, 1), (0, 0, 0))],
            metric: Metric::RelNorm(0),
        },
        other => return Err(Error::InvalidArgument(format!("no probe for lemma {other} (expected 1-4)"))),
    })
}

enum Transform {
    None,
    Shared(ParamId),
    PerRelation(Vec<ParamId>),
}

struct ProbeModel {
    ent: ParamId,
    rel: ParamId,
    transform: Transform,
}

impl ProbeModel {
    fn init(store: &mut ParamStore, setup: &Setup, lemma: u8, mode: SpaceMode, dim: usize, rng: &mut Rng) -> Self {
        let ent = store.insert("probe.ent", uniform_init(rng, setup.entities, dim, 0.5));
        let rel = store.insert("probe.rel", uniform_init(rng, setup.relations, dim, 0.5));
        let near_identity = |rng: &mut Rng| {
            let mut w = xavier_init(rng, dim, dim);
            for (i, v) in w.data_mut().iter_mut().enumerate() {
                *v = *v * 0.1 + if i / dim == i % dim { 1.0 } else { 0.0 };
            }
            w
        };
        let transform = match (mode, lemma) {
            (SpaceMode::Separate, _) => Transform::PerRelation(
                (0..setup.relations)
                    .map(|r| store.insert(format!("probe.rel_tf.{r}"), near_identity(rng)))
                    .collect(),
            ),
            (SpaceMode::Same, 4) => Transform::Shared(store.insert("probe.shared", near_identity(rng))),
            (SpaceMode::Same, _) => Transform::None,
        };
        Self { ent, rel, transform }
    }

    fn project(&self, g: &mut Graph<'_>, e: Var, r: usize) -> Result<Var> {
        match &self.transform {
            Transform::None => Ok(e),
            Transform::Shared(w) => g.linear(*w, e),
            Transform::PerRelation(ws) => {
                let lin = g.linear(ws[r], e)?;
                Ok(g.tanh(lin))
            }
        }
    }

    fn distance(&self, g: &mut Graph<'_>, (h, r, t): T3) -> Result<Var> {
        let eh = g.embed_row(self.ent, h)?;
        let et = g.embed_row(self.ent, t)?;
        let rv = g.embed_row(self.rel, r)?;
        let ph = self.project(g, eh, r)?;
        let pt = self.project(g, et, r)?;
        let s = g.add(ph, rv)?;
        let d = g.sub(s, pt)?;
        Ok(g.l1(d))
    }

    fn objective(&self, g: &mut Graph<'_>, positives: &[T3], pairs: &[(T3, T3)], margin: f64) -> Result<Var> {
        let mut terms = Vec::new();
        for &p in positives {
            terms.push(self.distance(g, p)?);
        }
        for &(p, n) in pairs {
            let dp = self.distance(g, p)?;
            let dn = self.distance(g, n)?;
            let diff = g.sub(dp, dn)?;
            let m = g.constant(Tensor::matrix(1, 1, vec![margin]));
            let s = g.add(diff, m)?;
            terms.push(g.relu(s));
        }
        g.add_all(&terms)
    }

    fn metric(&self, params: &ParamStore, metric: &Metric) -> f64 {
        let diff = |t: &Tensor, a: usize, b: usize| t.row(a).iter().zip(t.row(b)).map(|(x, y)| (x - y).abs()).sum();
        match *metric {
            Metric::RelDiff(a, b) => diff(params.tensor(self.rel), a, b),
            Metric::EntDiff(a, b) => diff(params.tensor(self.ent), a, b),
            Metric::RelNorm(a) => params.tensor(self.rel).row(a).iter().map(|x| x.abs()).sum(),
        }
    }

    /// Moves the metric's vectors exactly one L1 unit apart (or to norm 1)
    /// and returns the `(param, rows)` to freeze.
    fn pin(&self, params: &mut ParamStore, metric: &Metric) -> (ParamId, BTreeSet<usize>) {
        let (id, a, b) = match *metric {
            Metric::RelDiff(a, b) => (self.rel, a, Some(b)),
            Metric::EntDiff(a, b) => (self.ent, a, Some(b)),
            Metric::RelNorm(a) => (self.rel, a, None),
        };
        let t = params.tensor_mut(id);
        let dim = t.cols();
        let step = 1.0 / dim as f64;
        let mut frozen = BTreeSet::from([a]);
        match b {
            Some(b) => {
                let base = t.row(a).to_vec();
                for (x, v) in t.row_mut(b).iter_mut().zip(base) {
                    *x = v + step;
                }
                frozen.insert(b);
            }
            None => t.row_mut(a).fill(step),
        }
        let keep = (0..t.rows()).filter(|r| !frozen.contains(r)).collect();
        (id, keep)
    }
}

/// Full-batch Adam with the learning rate decayed linearly to zero, which
/// lets the L1 objective settle instead of oscillating around its kinks.
fn run_stage(
    lemma: u8,
    mode: SpaceMode,
    cfg: &ProbeConfig,
    setup: &Setup,
    positives: &[T3],
    pairs: &[(T3, T3)],
    pin: bool,
) -> Result<(f64, f64)> {
    let mut rng = Rng::new(cfg.seed);
    let mut params = ParamStore::new();
    let model = ProbeModel::init(&mut params, setup, lemma, mode, cfg.dim, &mut rng);
    let frozen = pin.then(|| model.pin(&mut params, &setup.metric));
    let mut opt = Adam::new(cfg.learning_rate);
    for step in 0..cfg.steps {
        opt.lr = cfg.learning_rate * (1.0 - step as f64 / cfg.steps as f64);
        let mut grads = {
            let mut g = Graph::new(&params);
            let l = model.objective(&mut g, positives, pairs, cfg.margin)?;
            g.backward(l)?
        };
        if let Some((id, keep)) = &frozen {
            grads.retain_rows(*id, keep);
        }
        opt.step(&mut params, &grads);
    }
    let mut g = Graph::new(&params);
    let l = model.objective(&mut g, positives, pairs, cfg.margin)?;
    let loss = g.scalar(l);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("lemma {lemma} probe loss")));
    }
    Ok((loss, model.metric(&params, &setup.metric)))
}

pub fn expressiveness_probe(lemma: u8, mode: SpaceMode, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let setup = setup(lemma)?;
    let (fit_loss, collapse_metric) = run_stage(lemma, mode, cfg, &setup, &setup.positives, &[], false)?;
    let (pinned_loss, _) = run_stage(lemma, mode, cfg, &setup, &setup.positives, &[], true)?;
    let contrast_pos: Vec<T3> = setup.positives.iter().chain(&setup.witness_pos).copied().collect();
    let (final_loss, final_collapse) = run_stage(lemma, mode, cfg, &setup, &contrast_pos, &setup.witness_neg, false)?;
    Ok(ProbeReport {
        lemma,
        mode,
        fit_loss,
        collapse_metric,
        pinned_loss,
        final_loss,
        final_collapse,
    })
}
