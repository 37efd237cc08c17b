//! Fixed-seed gradient checks over small fixtures of each trainable
//! component. Shared by the command line and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::aggregator::{batch_loss, build_token_table, label_order, EntityFeature, ReconConfig, ReconModel, TripleContext, Variant};
use crate::eac::{EacConfig, EacEncoder, TokenEmbeddingTable};
use crate::error::{Error, Result};
use crate::kgstore::{
    negative_candidates, AnnotatedSentence, AttributeStore, CorruptionMode, EntityAttributeRecord, KnowledgeGraph,
    LabeledPair, Mention, Triple, NA,
};
use crate::numkit::{finite_diff_check, GradReport, Graph, ParamStore, Rng, DEFAULT_FD_EPS};
use crate::tripler::{Neighborhoods, SpaceMode, TripleModel, TriplerConfig};

/// Relative-error bound every checked parameter must meet.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Seed of every gradient fixture. Chosen so no ReLU or max input sits
/// within the difference step of its kink.
pub const GRADCHECK_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradTarget {
    Eac,
    Tripler,
    Aggregator,
}

impl GradTarget {
    pub const ALL: [GradTarget; 3] = [GradTarget::Eac, GradTarget::Tripler, GradTarget::Aggregator];

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::Eac => "eac",
            GradTarget::Tripler => "tripler",
            GradTarget::Aggregator => "aggregator",
        }
    }
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gradcheck target `{s}`")))
    }
}

/// Runs the finite-difference check for `target`. Parameter names in the
/// reports are prefixed with the fixture variant, e.g. `separate/tripler.ent`.
pub fn gradcheck(target: GradTarget) -> Result<Vec<GradReport>> {
    match target {
        GradTarget::Eac => eac_reports(),
        GradTarget::Tripler => tripler_reports(),
        GradTarget::Aggregator => aggregator_reports(),
    }
}

fn prefixed(tag: &str, reports: Vec<GradReport>) -> Vec<GradReport> {
    reports
        .into_iter()
        .map(|mut r| {
            r.param = format!("{tag}/{}", r.param);
            r
        })
        .collect()
}

fn eac_reports() -> Result<Vec<GradReport>> {
    let words = "barack obama 44th president of the united states human politician".split(' ');
    let table = TokenEmbeddingTable::build(words, 5, 3);
    let mut p = ParamStore::new();
    let mut rng = Rng::new(GRADCHECK_SEED);
    table.init_params(&mut p, &mut rng, None)?;
    let enc = EacEncoder::init(&mut p, &table, EacConfig { hidden: 4, channels: 3, max_len: 32 }, &mut rng);
    let rec = EntityAttributeRecord {
        id: "Q76".into(),
        label: "Barack Obama".into(),
        aliases: vec!["Obama".into()],
        description: "44th president of the United States".into(),
        instance_of: vec!["human".into()],
    };
    let weights = [0.7, -1.3, 0.4];
    let eval = |q: &ParamStore, grads: bool| -> Result<(f64, Option<crate::numkit::Gradients>)> {
        let mut g = Graph::new(q);
        let h = enc.entity_context(&mut g, &table, &rec)?;
        let w = g.column(weights.to_vec());
        let prod = g.mul(h, w)?;
        let l = g.sum(prod);
        let v = g.scalar(l);
        Ok((v, if grads { Some(g.backward(l)?) } else { None }))
    };
    let grads = eval(&p, true)?.1.expect("requested");
    let reports = finite_diff_check(&p, &grads, DEFAULT_FD_EPS, |q| eval(q, false).map(|x| x.0))?;
    Ok(prefixed("eac", reports))
}

fn ring_kg() -> KnowledgeGraph {
    KnowledgeGraph::from_triples([
        Triple::new("e0", "r0", "e1"),
        Triple::new("e1", "r1", "e2"),
        Triple::new("e2", "r0", "e3"),
        Triple::new("e3", "r1", "e0"),
    ])
    .expect("static triples")
}

fn tripler_reports() -> Result<Vec<GradReport>> {
    let kg = ring_kg();
    let groups: Vec<_> = kg
        .triples()
        .iter()
        .map(|&t| (t, negative_candidates(&kg, t, CorruptionMode::Relation)))
        .collect();
    let mut out = Vec::new();
    for mode in [SpaceMode::Same, SpaceMode::Separate] {
        let cfg = TriplerConfig { init_dim: 3, final_dim: 4, heads: 2, layers: 2, mode, ..Default::default() };
        let mut p = ParamStore::new();
        let m = TripleModel::init(&mut p, kg.num_entities(), kg.num_relations(), cfg, &mut Rng::new(GRADCHECK_SEED))?;
        let nb = Neighborhoods::build(&kg, cfg.two_hop)?;
        let value = |q: &ParamStore| -> Result<f64> {
            let mut g = Graph::new(q);
            let l = m.loss(&mut g, &nb, &groups)?.ok_or(Error::NoPairs(0))?;
            Ok(g.scalar(l))
        };
        let grads = {
            let mut g = Graph::new(&p);
            let l = m.loss(&mut g, &nb, &groups)?.ok_or(Error::NoPairs(0))?;
            g.backward(l)?
        };
        let tag = match mode {
            SpaceMode::Same => "same",
            SpaceMode::Separate => "separate",
        };
        out.extend(prefixed(tag, finite_diff_check(&p, &grads, DEFAULT_FD_EPS, value)?));
    }
    Ok(out)
}

fn sentence_fixture() -> (AnnotatedSentence, AttributeStore) {
    let sentence = AnnotatedSentence {
        tokens: "barack obama visited paris in spring".split(' ').map(String::from).collect(),
        mentions: vec![
            Mention { id: "Q76".into(), start: 0, end: 2 },
            Mention { id: "Q90".into(), start: 3, end: 4 },
            Mention { id: "Q1".into(), start: 5, end: 6 },
        ],
        pairs: vec![
            LabeledPair { head: 0, tail: 1, relation: "visited".into() },
            LabeledPair { head: 1, tail: 0, relation: NA.into() },
            LabeledPair { head: 0, tail: 2, relation: NA.into() },
        ],
    };
    let mut attrs = AttributeStore::new();
    attrs.insert(EntityAttributeRecord {
        id: "Q76".into(),
        label: "Barack Obama".into(),
        aliases: vec!["Obama".into()],
        description: "president".into(),
        instance_of: vec!["human".into()],
    });
    attrs.insert(EntityAttributeRecord {
        id: "Q90".into(),
        label: "Paris".into(),
        instance_of: vec!["city".into()],
        ..Default::default()
    });
    (sentence, attrs)
}

fn fixture_context(mode: SpaceMode) -> Result<TripleContext> {
    let kg = KnowledgeGraph::from_triples([Triple::new("Q76", "visited", "Q90"), Triple::new("Q90", "capital_of", "Q142")])?;
    let cfg = TriplerConfig { init_dim: 3, final_dim: 4, heads: 2, layers: 1, mode, ..Default::default() };
    let mut p = ParamStore::new();
    let model = TripleModel::init(&mut p, kg.num_entities(), kg.num_relations(), cfg, &mut Rng::new(GRADCHECK_SEED))?;
    let nb = Neighborhoods::build(&kg, cfg.two_hop)?;
    TripleContext::new(model, p, &nb, kg.entities())
}

fn aggregator_reports() -> Result<Vec<GradReport>> {
    let (s, a) = sentence_fixture();
    let mut out = Vec::new();
    for variant in [Variant::Plain, Variant::Eac, Variant::EacKggatSeparate] {
        let cfg = ReconConfig {
            variant,
            word_dim: 5,
            char_dim: 3,
            pos_dim: 3,
            encoder_hidden: 4,
            prop_layers: 3,
            state_dim: 4,
            classifier_hidden: 6,
            eac: EacConfig { hidden: 3, channels: 4, max_len: 32 },
            max_tokens: 64,
            triple_dim: 4,
            kg_relations: if variant == Variant::EacKggatSeparate { 2 } else { 0 },
            entity_feature: EntityFeature::Final,
        };
        let table = build_token_table(std::slice::from_ref(&s), &a, cfg.word_dim, cfg.char_dim);
        let mut p = ParamStore::new();
        let m = ReconModel::init(&mut p, table, label_order(["visited"]), cfg, &mut Rng::new(GRADCHECK_SEED))?;
        let ctx = variant.triple_mode().map(fixture_context).transpose()?;
        let value = |q: &ParamStore| -> Result<f64> {
            let mut g = Graph::new(q);
            let (l, _) = batch_loss(&mut g, &m, &[&s], &a, ctx.as_ref())?.ok_or(Error::NoPairs(0))?;
            Ok(g.scalar(l))
        };
        let grads = {
            let mut g = Graph::new(&p);
            let (l, _) = batch_loss(&mut g, &m, &[&s], &a, ctx.as_ref())?.ok_or(Error::NoPairs(0))?;
            g.backward(l)?
        };
        out.extend(prefixed(variant.name(), finite_diff_check(&p, &grads, DEFAULT_FD_EPS, value)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_passes() {
        for t in GradTarget::ALL {
            let reports = gradcheck(t).unwrap();
            assert!(reports.iter().filter(|r| !r.skipped).count() >= 4, "{t:?}");
            for r in &reports {
                assert!(r.passes(GRADCHECK_TOLERANCE), "{t:?} {r:?}");
            }
        }
    }

    #[test]
    fn target_names_round_trip() {
        for t in GradTarget::ALL {
            assert_eq!(t.name().parse::<GradTarget>().unwrap(), t);
        }
        assert!("lstm".parse::<GradTarget>().is_err());
    }
}
