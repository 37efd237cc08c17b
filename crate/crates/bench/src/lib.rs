//! Fixtures shared by the benchmarks.

use kgctx::aggregator::{build_token_table, label_order, ReconConfig, ReconModel, Variant};
use kgctx::eac::EacConfig;
use kgctx::kgstore::{AnnotatedSentence, AttributeStore, KnowledgeGraph};
use kgctx::numkit::{ParamStore, Rng};
use kgctx::synth::{attribute_dataset, scaling_kg, AttributeDatasetConfig};
use kgctx::tripler::{Neighborhoods, TripleModel, TriplerConfig};

/// A triple model over a generated graph with `entities` entities.
pub struct TriplerFixture {
    pub kg: KnowledgeGraph,
    pub model: TripleModel,
    pub params: ParamStore,
    pub neighborhoods: Neighborhoods,
}

pub fn tripler_fixture(entities: usize, config: TriplerConfig) -> TriplerFixture {
    let kg = scaling_kg(entities, 8, 3, 1);
    let mut params = ParamStore::new();
    let model = TripleModel::init(&mut params, kg.num_entities(), kg.num_relations(), config, &mut Rng::new(1))
        .expect("valid config");
    let neighborhoods = Neighborhoods::build(&kg, config.two_hop).expect("graph is consistent");
    TriplerFixture {
        kg,
        model,
        params,
        neighborhoods,
    }
}

/// Bench-sized dimensions: the published ones except the sentence encoder.
pub fn bench_tripler_config() -> TriplerConfig {
    TriplerConfig {
        init_dim: 16,
        final_dim: 32,
        ..TriplerConfig::default()
    }
}

pub struct ExtractionFixture {
    pub model: ReconModel,
    pub params: ParamStore,
    pub sentences: Vec<AnnotatedSentence>,
    pub attributes: AttributeStore,
}

pub fn extraction_fixture(variant: Variant) -> ExtractionFixture {
    let data = attribute_dataset(&AttributeDatasetConfig {
        sentences: 40,
        seed: 1,
        ..AttributeDatasetConfig::default()
    });
    let config = ReconConfig {
        variant,
        word_dim: 16,
        char_dim: 8,
        pos_dim: 8,
        encoder_hidden: 16,
        state_dim: 8,
        classifier_hidden: 16,
        eac: EacConfig { hidden: 8, channels: 8, max_len: 32 },
        triple_dim: 0,
        ..ReconConfig::default()
    };
    let table = build_token_table(&data.train, &data.attributes, config.word_dim, config.char_dim);
    let labels = label_order(data.train.iter().flat_map(|s| s.pairs.iter().map(|p| p.relation.as_str())));
    let mut params = ParamStore::new();
    let model = ReconModel::init(&mut params, table, labels, config, &mut Rng::new(1)).expect("valid config");
    ExtractionFixture {
        model,
        params,
        sentences: data.train,
        attributes: data.attributes,
    }
}
