//! Sequence-to-sequence pre-training for abstractive summarization at desk
//! scale.
//!
//! - [`text`]: sentence segmentation, byte-level BPE, document pieces
//! - [`objectives`]: sentence reordering, next segment generation, masked
//!   document generation and their uniform mixture
//! - [`model`]: a small pre-norm encoder-decoder transformer with hand-written
//!   backpropagation, Adam with separate encoder/decoder groups, checkpoints
//! - [`decoding`]: beam search with trigram blocking and length constraints
//! - [`rouge`]: ROUGE-N / ROUGE-L under full-length F1 and limited-length recall
//! - [`reorder`]: content-reordering statistic and the Lead-3 baseline
//! - [`pipeline`]: synthetic corpora, ingestion and end-to-end experiments

pub mod text;
pub mod objectives;
pub mod pipeline;
pub mod reorder;
pub mod decoding;
pub mod model;
pub mod rouge;
