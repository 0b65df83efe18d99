//! Beam search with trigram blocking and length constraints, a greedy
//! reference decoder, and the min-length / beam-size sweeps.

mod beam;
mod tune;

pub use beam::{beam_search, greedy_decode, trigram_block};
pub use tune::{beam_sweep, decode_corpus, tune_min_length, BeamSweepRow, MinLenTuning};

use serde::{Deserialize, Serialize};

use crate::model::ModelError;
use crate::rouge::RougeError;
use crate::text::{TextError, BOS_ID, EOS_ID, MASK_ID, PAD_ID};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    /// Minimum number of content tokens before EOS is allowed.
    pub min_len: usize,
    /// Maximum number of generated tokens, EOS included.
    pub max_len: usize,
    pub block_repeated_trigrams: bool,
    /// Tokens never generated.
    pub banned_tokens: Vec<u32>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            min_len: 1,
            max_len: 256,
            block_repeated_trigrams: true,
            banned_tokens: vec![PAD_ID, BOS_ID, MASK_ID],
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_size == 0 {
            return Err(DecodeError::InvalidConfig("beam_size must be at least 1".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(DecodeError::InvalidConfig(format!(
                "need 1 <= min_len ({}) <= max_len ({})",
                self.min_len, self.max_len
            )));
        }
        if self.banned_tokens.contains(&EOS_ID) {
            return Err(DecodeError::InvalidConfig("EOS cannot be banned".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// BOS first; ends with EOS when finished.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Tokens without BOS and the final EOS.
    pub fn content(&self) -> &[u32] {
        let end = self.tokens.len() - usize::from(self.finished);
        &self.tokens[1..end]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("source is empty")]
    EmptySource,
    #[error("invalid decode config: {0}")]
    InvalidConfig(String),
    #[error("no beam sizes or candidates given")]
    EmptySweep,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Rouge(#[from] RougeError),
}
