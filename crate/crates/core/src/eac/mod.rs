//! Entity attribute context: token embeddings, a BiLSTM per attribute
//! literal, a width-1 convolution and max-pooling over literals.

mod encoder;
pub(crate) mod lstm;
mod table;

pub use encoder::{entity_context, record_literals, EacConfig, EacEncoder, EAC_PREFIX};
pub use lstm::BiLstm;
pub use table::{
    embed_token, load_word_vectors, parse_word_vectors, tokenize, TokenEmbeddingTable, WordVectors, CHAR_PARAM,
    PAD_WORD, UNK_WORD, WORD_PARAM,
};
