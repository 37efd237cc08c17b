//! Context aggregator: a GNN over the entities of a sentence whose edge
//! transition matrices are generated from the sentence itself, fed with
//! attribute context and optionally with frozen triple embeddings.

mod context;
mod model;
mod train;

pub use context::{score_triple_sigmoid, translation_vector, triple_context_vector, EntityFeature, TripleContext};
pub use model::{
    argmax, build_token_table, label_order, pair_representation, position_symbols, propagate, PairPrediction, ReconConfig, ReconModel,
    Variant, RECON_PREFIX,
};
pub use train::{accuracy, batch_loss, predict, prediction_records, train_recon, ReconReport, ReconTrainConfig};
