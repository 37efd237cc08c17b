//! Knowledge graph, entity attributes and annotated sentences.

mod graph;
mod negatives;
mod records;

pub use graph::{
    format_triples, load_triples, parse_triples, save_triples, KnowledgeGraph, NeighborhoodTriple, Triple,
    TripleIdx, TwoHopPaths,
};
pub use negatives::{negative_candidates, sample_negatives, CorruptionMode};
pub use records::{
    format_attributes, format_sentences, load_attributes, load_sentences, parse_attributes, parse_sentences,
    retrieve_context, AnnotatedSentence, AttributeStore, EntityAttributeRecord, LabeledPair, Mention, NA,
};
