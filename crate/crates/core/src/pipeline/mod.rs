//! Orchestration: ingestion, synthetic corpora, data streams and the
//! end-to-end experiment driver.

mod data;
mod experiment;
mod ingest;
mod synthetic;

pub use data::{
    batch_of_examples, batch_of_pairs, corpus_pieces, encode_document, encode_pairs, make_pretrain_data,
    EpochSampler, ObjectiveChoice, PretrainStream,
};
pub use experiment::{
    run_experiment, sha256_hex, CurvePoint, DataConfig, Manifest, Metrics, MinLenRange, PipelineError,
    RunConfig, Stage, StageConfig, StageContext, StageReport, SystemScore,
};
pub use ingest::{ingest, CorpusStats, SummaryPair};
pub use synthetic::{gen_synthetic, GrammarSpec, SummaryStyle, SyntheticCorpus, SyntheticSpec};
