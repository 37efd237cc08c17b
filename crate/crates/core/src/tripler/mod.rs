//! Graph-attention triple embeddings. In same-space mode the translation
//! `e_h + r ≈ e_t` is scored on the final entity vectors; in separate-space
//! mode each relation first maps entities through its own `tanh(W_r ·)`.

mod model;
mod probe;
mod rank;
mod train;

pub use model::{
    margin_loss, translation_distance, AttentionRecord, EmbeddingSet, ForwardPass, LossOrientation, Neighborhoods,
    SpaceMode, TripleModel, TriplerConfig, TRIPLER_PREFIX,
};
pub use probe::{expressiveness_probe, ProbeConfig, ProbeReport};
pub use rank::{rank_of, rank_relations, rank_triples, RankResult};
pub use train::{full_loss, train_batchwise, TrainConfig, TrainReport};

#[cfg(test)]
mod tests;
