//! Seeded synthetic graphs and datasets used by the tests, the benches and
//! the CLI's built-in fixtures.

use std::collections::BTreeSet;

use crate::kgstore::{
    AnnotatedSentence, AttributeStore, EntityAttributeRecord, KnowledgeGraph, LabeledPair, Mention, Triple, NA,
};
use crate::numkit::Rng;

/// `e0 -r0-> e1 -r1-> e2 -r0-> e3`.
pub fn toy_chain_kg() -> KnowledgeGraph {
    KnowledgeGraph::from_triples([
        Triple::new("e0", "r0", "e1"),
        Triple::new("e1", "r1", "e2"),
        Triple::new("e2", "r0", "e3"),
    ])
    .expect("static triples are valid")
}

/// Random graph over `entities` and `relations` in which about
/// `multi_fraction` of the connected pairs carry two relations. Every
/// entity and relation appears in at least one triple.
pub fn multi_relation_kg(entities: usize, relations: usize, pairs: usize, multi_fraction: f64, seed: u64) -> KnowledgeGraph {
    assert!(entities >= 2 && relations >= 2, "need at least two entities and relations");
    let mut rng = Rng::new(seed);
    let mut kg = KnowledgeGraph::new();
    for e in 0..entities {
        kg.add_entity(&format!("e{e}"));
    }
    for r in 0..relations {
        kg.add_relation(&format!("r{r}"));
    }
    let mut chosen = BTreeSet::new();
    // a ring first, so nobody is isolated
    for e in 0..entities {
        chosen.insert((e, (e + 1) % entities));
    }
    while chosen.len() < pairs.max(entities) {
        let h = rng.index(entities);
        let t = rng.index(entities);
        if h != t && !chosen.contains(&(t, h)) {
            chosen.insert((h, t));
        }
    }
    let mut order: Vec<(usize, usize)> = chosen.into_iter().collect();
    rng.shuffle(&mut order);
    let n_multi = (order.len() as f64 * multi_fraction).ceil() as usize;
    for (i, &(h, t)) in order.iter().enumerate() {
        let first = if i < relations { i } else { rng.index(relations) };
        add(&mut kg, h, first, t);
        if i < n_multi {
            let second = (first + 1 + rng.index(relations - 1)) % relations;
            add(&mut kg, h, second, t);
        }
    }
    kg
}

fn add(kg: &mut KnowledgeGraph, h: usize, r: usize, t: usize) {
    kg.add_triple(&Triple::new(format!("e{h}"), format!("r{r}"), format!("e{t}")))
        .expect("generated triple is valid");
}

/// Fraction of connected (ordered) pairs carrying at least two relations.
pub fn multi_relation_share(kg: &KnowledgeGraph) -> f64 {
    let pairs: BTreeSet<(usize, usize)> = kg.triples().iter().map(|t| (t.head, t.tail)).collect();
    if pairs.is_empty() {
        return 0.0;
    }
    let multi = pairs
        .iter()
        .filter(|(h, t)| kg.relations_between(*h, *t).len() >= 2)
        .count();
    multi as f64 / pairs.len() as f64
}

/// Sparse random graph for timing runs: roughly `degree` outgoing triples
/// per entity.
pub fn scaling_kg(entities: usize, relations: usize, degree: usize, seed: u64) -> KnowledgeGraph {
    multi_relation_kg(entities, relations, entities * degree, 0.1, seed)
}

/// Entity types of the attribute dataset and the relation each ordered
/// type pair expresses. Pairs not listed are `NA`.
pub const ATTRIBUTE_TYPES: [&str; 4] = ["human", "city", "company", "country"];
const TYPE_RELATIONS: [(usize, usize, &str); 5] = [
    (0, 1, "place_of_birth"),
    (0, 2, "employer"),
    (2, 1, "headquarters"),
    (1, 3, "located_in"),
    (0, 3, "citizenship"),
];

/// Relation implied by the types of a head and tail entity.
pub fn relation_for_types(head: usize, tail: usize) -> &'static str {
    TYPE_RELATIONS
        .iter()
        .find(|(h, t, _)| *h == head && *t == tail)
        .map_or(NA, |(_, _, r)| r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDataset {
    pub train: Vec<AnnotatedSentence>,
    pub test: Vec<AnnotatedSentence>,
    pub attributes: AttributeStore,
    /// Every non-NA fact of both splits.
    pub kg: KnowledgeGraph,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeDatasetConfig {
    pub sentences: usize,
    pub test_fraction: f64,
    /// Entities per type in the training pool; the test pool is disjoint.
    pub train_entities_per_type: usize,
    pub test_entities_per_type: usize,
    /// Probability that an entity's instance-of literal is present.
    pub type_coverage: f64,
    /// Probability that a sentence has a third mention.
    pub third_mention: f64,
    pub seed: u64,
}

impl Default for AttributeDatasetConfig {
    fn default() -> Self {
        Self {
            sentences: 400,
            test_fraction: 0.2,
            train_entities_per_type: 30,
            test_entities_per_type: 10,
            type_coverage: 0.75,
            third_mention: 0.25,
            seed: 0,
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "vi", "ren", "tor", "mi", "sa", "dun", "bel", "qua", "zo", "fim", "ga", "hul", "nex", "pra",
];

/// Templates with placeholders `{0}`, `{1}`, `{2}`; their wording is
/// unrelated to the relation, so only entity attributes decide the label.
const TEMPLATES2: [&str; 6] = [
    "{0} and {1} appear in the same record",
    "the report mentions {0} together with {1}",
    "{1} is listed next to {0} in the archive",
    "according to the file , {0} was noted near {1}",
    "a note links {1} and {0}",
    "{0} ; {1} ; see the appendix",
];
const TEMPLATES3: [&str; 3] = [
    "{0} , {1} and {2} appear in the same record",
    "the report mentions {2} with {0} and {1}",
    "{1} was listed after {2} and before {0}",
];

/// Sentences whose gold relation is fixed by the instance-of types of the
/// two entities. Names are random syllable strings and the templates are
/// shared by all relations, so the tokens carry no label signal. A share of
/// entities lacks the instance-of literal; the KG still holds their facts.
pub fn attribute_dataset(cfg: &AttributeDatasetConfig) -> AttributeDataset {
    let mut rng = Rng::new(cfg.seed);
    let mut used = BTreeSet::new();
    let mut attributes = AttributeStore::new();
    let mut pool = |per_type: usize, rng: &mut Rng, attributes: &mut AttributeStore| -> Vec<Vec<String>> {
        (0..ATTRIBUTE_TYPES.len())
            .map(|ty| {
                (0..per_type)
                    .map(|_| {
                        let name = loop {
                            let n = 2 + rng.index(2);
                            let s: String = (0..n).map(|_| SYLLABLES[rng.index(SYLLABLES.len())]).collect();
                            if used.insert(s.clone()) {
                                break s;
                            }
                        };
                        let mut rec = EntityAttributeRecord::empty(name.clone());
                        rec.label = name.clone();
                        rec.description = "an entry in the catalogue".into();
                        if rng.bernoulli(cfg.type_coverage) {
                            rec.instance_of = vec![ATTRIBUTE_TYPES[ty].into()];
                        }
                        attributes.insert(rec);
                        name
                    })
                    .collect()
            })
            .collect()
    };
    let train_pool = pool(cfg.train_entities_per_type, &mut rng, &mut attributes);
    let test_pool = pool(cfg.test_entities_per_type, &mut rng, &mut attributes);
    let n_test = (cfg.sentences as f64 * cfg.test_fraction).round() as usize;
    let mut kg = KnowledgeGraph::new();
    let mut make = |pool: &[Vec<String>], rng: &mut Rng| -> AnnotatedSentence {
        // half of the sentences are built around a real relation
        let (t0, t1) = if rng.bernoulli(0.6) {
            let (h, t, _) = TYPE_RELATIONS[rng.index(TYPE_RELATIONS.len())];
            (h, t)
        } else {
            (rng.index(ATTRIBUTE_TYPES.len()), rng.index(ATTRIBUTE_TYPES.len()))
        };
        let mut types = vec![t0, t1];
        if rng.bernoulli(cfg.third_mention) {
            types.push(rng.index(ATTRIBUTE_TYPES.len()));
        }
        let mut names: Vec<String> = Vec::new();
        for &ty in &types {
            let name = loop {
                let c = &pool[ty][rng.index(pool[ty].len())];
                if !names.contains(c) {
                    break c.clone();
                }
            };
            names.push(name);
        }
        let templates: &[&str] = if types.len() == 2 { &TEMPLATES2 } else { &TEMPLATES3 };
        let template = templates[rng.index(templates.len())];
        let mut tokens = Vec::new();
        let mut spans = vec![(0, 0); types.len()];
        for word in template.split(' ') {
            match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                Some(k) => {
                    let k: usize = k.parse().expect("template slot");
                    spans[k] = (tokens.len(), tokens.len() + 1);
                    tokens.push(names[k].clone());
                }
                None => tokens.push(word.to_string()),
            }
        }
        let mentions = names
            .iter()
            .zip(&spans)
            .map(|(n, &(start, end))| Mention { id: n.clone(), start, end })
            .collect();
        // one labeled pair per unordered mention pair, oriented along the
        // relation when there is one
        let mut pairs = Vec::new();
        for a in 0..types.len() {
            for b in a + 1..types.len() {
                let (h, t) = if relation_for_types(types[a], types[b]) == NA
                    && relation_for_types(types[b], types[a]) != NA
                {
                    (b, a)
                } else {
                    (a, b)
                };
                let relation = relation_for_types(types[h], types[t]);
                if relation != NA {
                    kg.add_triple(&Triple::new(names[h].clone(), relation, names[t].clone()))
                        .expect("generated fact is valid");
                }
                pairs.push(LabeledPair { head: h, tail: t, relation: relation.into() });
            }
        }
        AnnotatedSentence { tokens, mentions, pairs }
    };
    let train = (0..cfg.sentences - n_test).map(|_| make(&train_pool, &mut rng)).collect();
    let test = (0..n_test).map(|_| make(&test_pool, &mut rng)).collect();
    AttributeDataset { train, test, attributes, kg }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_shape() {
        let kg = toy_chain_kg();
        assert_eq!((kg.num_entities(), kg.num_relations(), kg.len()), (4, 2, 3));
    }

    #[test]
    fn multi_relation_graph_meets_share() {
        let kg = multi_relation_kg(60, 8, 90, 0.35, 3);
        assert_eq!((kg.num_entities(), kg.num_relations()), (60, 8));
        assert!(multi_relation_share(&kg) >= 0.3);
        assert!(kg.relations().iter().all(|r| kg.triples().iter().any(|t| kg.relation_name(t.relation) == r)));
        assert_eq!(kg, multi_relation_kg(60, 8, 90, 0.35, 3));
    }

    #[test]
    fn attribute_dataset_is_consistent() {
        let d = attribute_dataset(&AttributeDatasetConfig { seed: 4, ..Default::default() });
        assert_eq!(d.train.len() + d.test.len(), 400);
        assert_eq!(d.test.len(), 80);
        let train_ids: BTreeSet<&str> = d.train.iter().flat_map(|s| s.mentions.iter().map(|m| m.id.as_str())).collect();
        assert!(d.test.iter().flat_map(|s| &s.mentions).all(|m| !train_ids.contains(m.id.as_str())));
        for s in d.train.iter().chain(&d.test) {
            s.validate().unwrap();
            for p in &s.pairs {
                let (h, t) = (&s.mentions[p.head].id, &s.mentions[p.tail].id);
                let fact = Triple::new(h.clone(), p.relation.clone(), t.clone());
                assert_eq!(p.relation != NA, d.kg.contains_named(&fact));
                // type words never reach the sentence text
                assert!(s.tokens.iter().all(|w| !ATTRIBUTE_TYPES.contains(&w.as_str())));
            }
        }
        let non_na = d.train.iter().flat_map(|s| &s.pairs).filter(|p| p.relation != NA).count();
        assert!(non_na > 100);
        assert_eq!(d, attribute_dataset(&AttributeDatasetConfig { seed: 4, ..Default::default() }));
    }
}
