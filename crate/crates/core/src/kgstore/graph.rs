use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

/// Index-space triple: `(head entity, relation, tail entity)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleIdx {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Which 2-step paths feed the hop-2 neighborhood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwoHopPaths {
    /// Only `e -> x -> y`.
    #[default]
    Outgoing,
    /// Also `y -> x -> e`, recorded with `e` as the tail.
    Both,
}

/// Entry of an entity's neighborhood. Hop-2 entries are auxiliary edges
/// spanning a 2-step path; `relations` holds the component pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeighborhoodTriple {
    pub head: usize,
    pub tail: usize,
    pub hop: u8,
    /// One relation for hop 1, the ordered component pair for hop 2.
    pub relations: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    triples: Vec<TripleIdx>,
    triple_set: HashSet<TripleIdx>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from triples; duplicates are dropped, orderings follow
    /// first appearance.
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Result<Self> {
        let mut kg = Self::new();
        for t in triples {
            kg.add_triple(&t)?;
        }
        Ok(kg)
    }

    pub fn add_entity(&mut self, id: &str) -> usize {
        if let Some(&i) = self.entity_index.get(id) {
            return i;
        }
        let i = self.entities.len();
        self.entities.push(id.to_string());
        self.entity_index.insert(id.to_string(), i);
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
        i
    }

    pub fn add_relation(&mut self, id: &str) -> usize {
        if let Some(&i) = self.relation_index.get(id) {
            return i;
        }
        let i = self.relations.len();
        self.relations.push(id.to_string());
        self.relation_index.insert(id.to_string(), i);
        i
    }

    /// Returns `false` when the triple was already present.
    pub fn add_triple(&mut self, t: &Triple) -> Result<bool> {
        if t.head.is_empty() || t.relation.is_empty() || t.tail.is_empty() {
            return Err(Error::InvalidArgument(format!("empty id in triple {t:?}")));
        }
        let head = self.add_entity(&t.head);
        let relation = self.add_relation(&t.relation);
        let tail = self.add_entity(&t.tail);
        let idx = TripleIdx { head, relation, tail };
        if !self.triple_set.insert(idx) {
            return Ok(false);
        }
        let k = self.triples.len();
        self.triples.push(idx);
        self.outgoing[head].push(k);
        self.incoming[tail].push(k);
        Ok(true)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[TripleIdx] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    pub fn entity(&self, name: &str) -> Result<usize> {
        self.entity_id(name)
            .ok_or_else(|| Error::UnknownEntity(name.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<usize> {
        self.relation_id(name)
            .ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn entity_name(&self, i: usize) -> &str {
        &self.entities[i]
    }

    pub fn relation_name(&self, i: usize) -> &str {
        &self.relations[i]
    }

    pub fn contains(&self, t: TripleIdx) -> bool {
        self.triple_set.contains(&t)
    }

    pub fn contains_named(&self, t: &Triple) -> bool {
        match (
            self.entity_id(&t.head),
            self.relation_id(&t.relation),
            self.entity_id(&t.tail),
        ) {
            (Some(head), Some(relation), Some(tail)) => self.contains(TripleIdx { head, relation, tail }),
            _ => false,
        }
    }

    pub fn to_named(&self, t: TripleIdx) -> Triple {
        Triple::new(
            &self.entities[t.head],
            &self.relations[t.relation],
            &self.entities[t.tail],
        )
    }

    /// Triples with `e` as head, in insertion order.
    pub fn outgoing(&self, e: usize) -> impl Iterator<Item = TripleIdx> + '_ {
        self.outgoing[e].iter().map(move |&k| self.triples[k])
    }

    /// Triples with `e` as tail, in insertion order.
    pub fn incoming(&self, e: usize) -> impl Iterator<Item = TripleIdx> + '_ {
        self.incoming[e].iter().map(move |&k| self.triples[k])
    }

    /// Relations holding from `head` to `tail`, ascending.
    pub fn relations_between(&self, head: usize, tail: usize) -> Vec<usize> {
        let mut rels: Vec<usize> = self
            .outgoing(head)
            .filter(|t| t.tail == tail)
            .map(|t| t.relation)
            .collect();
        rels.sort_unstable();
        rels
    }

    /// Checks that the adjacency index is exactly what the triple list
    /// implies.
    pub fn adjacency_consistent(&self) -> bool {
        let mut out = vec![Vec::new(); self.entities.len()];
        let mut inc = vec![Vec::new(); self.entities.len()];
        for (k, t) in self.triples.iter().enumerate() {
            out[t.head].push(k);
            inc[t.tail].push(k);
        }
        out == self.outgoing && inc == self.incoming
    }

    /// 1-hop (all incident triples) plus, optionally, hop-2 auxiliary edges.
    /// Hop-2 entries are deduplicated on `(endpoints, component pair)`.
    pub fn neighborhood(&self, e: usize, two_hop: Option<TwoHopPaths>) -> Result<Vec<NeighborhoodTriple>> {
        if e >= self.entities.len() {
            return Err(Error::UnknownEntity(format!("#{e}")));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |n: NeighborhoodTriple, out: &mut Vec<NeighborhoodTriple>| {
            if seen.insert(n.clone()) {
                out.push(n);
            }
        };
        for t in self.outgoing(e).chain(self.incoming(e)) {
            push(
                NeighborhoodTriple {
                    head: t.head,
                    tail: t.tail,
                    hop: 1,
                    relations: vec![t.relation],
                },
                &mut out,
            );
        }
        if let Some(paths) = two_hop {
            for first in self.outgoing(e) {
                for second in self.outgoing(first.tail) {
                    push(
                        NeighborhoodTriple {
                            head: e,
                            tail: second.tail,
                            hop: 2,
                            relations: vec![first.relation, second.relation],
                        },
                        &mut out,
                    );
                }
            }
            if paths == TwoHopPaths::Both {
                for last in self.incoming(e) {
                    for first in self.incoming(last.head) {
                        push(
                            NeighborhoodTriple {
                                head: first.head,
                                tail: e,
                                hop: 2,
                                relations: vec![first.relation, last.relation],
                            },
                            &mut out,
                        );
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn neighborhood_named(&self, entity: &str, include_two_hop: bool) -> Result<Vec<NeighborhoodTriple>> {
        let e = self.entity(entity)?;
        self.neighborhood(e, include_two_hop.then_some(TwoHopPaths::Outgoing))
    }

    /// Restriction to triples whose endpoints both lie in `keep`.
    pub fn subgraph(&self, keep: &HashSet<usize>) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for &t in &self.triples {
            if keep.contains(&t.head) && keep.contains(&t.tail) {
                kg.add_triple(&self.to_named(t)).expect("ids are non-empty");
            }
        }
        kg
    }
}

/// Reads a UTF-8 TSV of `head \t relation \t tail` lines. `#` lines and
/// blank lines are skipped.
pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path)
}

pub fn parse_triples(text: &str, path: &Path) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 || parts.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::parse(path, i + 1, "expected `head<TAB>relation<TAB>tail`"));
        }
        kg.add_triple(&Triple::new(parts[0].trim(), parts[1].trim(), parts[2].trim()))?;
    }
    Ok(kg)
}

pub fn format_triples(kg: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for &t in kg.triples() {
        let n = kg.to_named(t);
        let _ = writeln!(s, "{}\t{}\t{}", n.head, n.relation, n.tail);
    }
    s
}

pub fn save_triples(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_triples(kg)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn parse(s: &str) -> Result<KnowledgeGraph> {
        parse_triples(s, Path::new("test.tsv"))
    }

    #[test]
    fn duplicates_are_dropped() {
        let kg = parse("a\tr\tb\na\tr\tb\n").unwrap();
        assert_eq!((kg.len(), kg.num_entities(), kg.num_relations()), (1, 2, 1));
    }

    #[test]
    fn self_loops_and_comments() {
        let kg = parse("# header\n\na\tr\ta\n").unwrap();
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.num_entities(), 1);
        assert!(kg.adjacency_consistent());
        assert_eq!(parse("").unwrap().len(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("a\tr\tb\na r b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse("a\t\tb\n").is_err());
    }

    #[test]
    fn adjacency_matches_rebuild_on_sample() {
        let kg = parse("a\tr1\tb\nb\tr2\tc\nc\tr1\ta\na\tr2\tc\nd\tr3\td\nb\tr1\td\n").unwrap();
        assert_eq!(kg.len(), 6);
        assert!(kg.adjacency_consistent());
        let b = kg.entity("b").unwrap();
        assert_eq!(kg.outgoing(b).count(), 2);
        assert_eq!(kg.incoming(b).count(), 1);
    }

    #[test]
    fn chain_neighborhood() {
        let kg = parse("a\tr1\tb\nb\tr2\tc\n").unwrap();
        let full = kg.neighborhood_named("a", true).unwrap();
        let (r1, r2) = (kg.relation("r1").unwrap(), kg.relation("r2").unwrap());
        let (a, b, c) = (kg.entity("a").unwrap(), kg.entity("b").unwrap(), kg.entity("c").unwrap());
        assert_eq!(
            full,
            vec![
                NeighborhoodTriple { head: a, tail: b, hop: 1, relations: vec![r1] },
                NeighborhoodTriple { head: a, tail: c, hop: 2, relations: vec![r1, r2] },
            ]
        );
        assert_eq!(kg.neighborhood_named("a", false).unwrap(), full[..1].to_vec());
        assert!(kg.neighborhood_named("zz", true).is_err());
    }

    fn random_kg(seed: u64, n: usize, r: usize, m: usize) -> KnowledgeGraph {
        let mut rng = Rng::new(seed);
        let mut kg = KnowledgeGraph::new();
        for i in 0..n {
            kg.add_entity(&format!("e{i}"));
        }
        for _ in 0..m {
            let t = Triple::new(
                format!("e{}", rng.index(n)),
                format!("r{}", rng.index(r)),
                format!("e{}", rng.index(n)),
            );
            kg.add_triple(&t).unwrap();
        }
        kg
    }

    #[test]
    fn two_hop_matches_path_enumeration() {
        let kg = random_kg(20, 20, 3, 45);
        for e in 0..kg.num_entities() {
            let got: BTreeSet<_> = kg
                .neighborhood(e, Some(TwoHopPaths::Outgoing))
                .unwrap()
                .into_iter()
                .collect();
            let mut want = BTreeSet::new();
            for t in kg.triples() {
                if t.head == e || t.tail == e {
                    want.insert(NeighborhoodTriple { head: t.head, tail: t.tail, hop: 1, relations: vec![t.relation] });
                }
            }
            for t1 in kg.triples() {
                for t2 in kg.triples() {
                    if t1.head == e && t2.head == t1.tail {
                        want.insert(NeighborhoodTriple { head: e, tail: t2.tail, hop: 2, relations: vec![t1.relation, t2.relation] });
                    }
                }
            }
            assert_eq!(got, want, "entity {e}");
        }
    }

    #[test]
    fn both_directions_adds_incoming_paths() {
        let kg = parse("x\tr1\ty\ny\tr2\tz\n").unwrap();
        let z = kg.entity("z").unwrap();
        let out = kg.neighborhood(z, Some(TwoHopPaths::Outgoing)).unwrap();
        let both = kg.neighborhood(z, Some(TwoHopPaths::Both)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(both.len(), 2);
        assert_eq!(both[1].head, kg.entity("x").unwrap());
    }

    proptest! {
        #[test]
        fn one_hop_is_subset_of_two_hop(seed in 0u64..500) {
            let kg = random_kg(seed, 12, 3, 25);
            for e in 0..kg.num_entities() {
                let small: HashSet<_> = kg.neighborhood(e, None).unwrap().into_iter().collect();
                let big: HashSet<_> = kg.neighborhood(e, Some(TwoHopPaths::Outgoing)).unwrap().into_iter().collect();
                prop_assert!(small.is_subset(&big));
            }
        }

        #[test]
        fn save_load_identity(seed in 0u64..500) {
            let kg = random_kg(seed, 10, 4, 30);
            let back = parse(&format_triples(&kg)).unwrap();
            let a: HashSet<Triple> = kg.triples().iter().map(|&t| kg.to_named(t)).collect();
            let b: HashSet<Triple> = back.triples().iter().map(|&t| back.to_named(t)).collect();
            prop_assert_eq!(a, b);
        }
    }
}
