//! Encoder-decoder transformer with hand-written reverse-mode gradients,
//! per-group Adam optimizers and warmup schedules.
//!
//! Blocks are pre-norm; positions are learned. Computation runs per example
//! on live (unpadded) lengths, so padding never influences live outputs.

mod checkpoint;
mod forward;
mod infer;
mod layers;
mod optim;
mod params;
mod real;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{backward, forward, loss, loss_and_grad, Batch, ForwardOutput};
pub use infer::{log_softmax, DecoderState, IncrementalDecoder};
pub use optim::{lr_schedule, GroupSchedule, OptimizerConfig, OptimizerState};
pub use params::{Param, ParamGroup, Seq2SeqParams};
pub use real::Real;
pub use train::{evaluate_perplexity, train_step, Trainer};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub enc_ffn: usize,
    pub dec_ffn: usize,
    pub enc_dropout: f64,
    pub dec_dropout: f64,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// One token matrix for encoder input, decoder input and output
    /// projection.
    pub tie_embeddings: bool,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            enc_layers: 2,
            dec_layers: 2,
            d_model: 64,
            n_heads: 4,
            enc_ffn: 256,
            dec_ffn: 128,
            enc_dropout: 0.1,
            dec_dropout: 0.3,
            vocab_size: 1000,
            max_positions: 512,
            tie_embeddings: true,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// d_model 16, 2+2 layers, no dropout: small enough for gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            enc_ffn: 32,
            dec_ffn: 24,
            enc_dropout: 0.0,
            dec_dropout: 0.0,
            vocab_size,
            max_positions: 64,
            init_std: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("enc_ffn", self.enc_ffn),
            ("dec_ffn", self.dec_ffn),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        for (name, p) in [("enc_dropout", self.enc_dropout), ("dec_dropout", self.dec_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::InvalidConfig(format!("{name} {p} outside [0, 1)")));
            }
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(ModelError::InvalidConfig("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch has no live label positions")]
    AllPadded,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny(37).validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = ModelConfig::default();
        for bad in [
            ModelConfig { n_heads: 3, ..base.clone() },
            ModelConfig { dec_layers: 0, ..base.clone() },
            ModelConfig { dec_dropout: 1.0, ..base.clone() },
            ModelConfig { enc_dropout: -0.1, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig(_))));
        }
    }

    #[test]
    fn config_json_round_trip_and_partial() {
        let cfg = ModelConfig::tiny(50);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), cfg);
        let partial: ModelConfig = serde_json::from_str(r#"{"d_model": 32}"#).unwrap();
        assert_eq!(partial.d_model, 32);
        assert_eq!(partial.n_heads, 4);
    }
}
