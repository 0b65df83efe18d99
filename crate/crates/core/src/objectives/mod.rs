//! Pre-training pair construction.
//!
//! Each objective maps a piece of unlabeled text to an `(input, target)`
//! pair for a seq2seq model:
//!
//! - **SR** shuffles the piece by sentences; the target is the original order.
//! - **NSG** splits the token stream at a random point; the target is the
//!   continuation.
//! - **MDG** corrupts one contiguous span (mask / random token / keep) and the
//!   target is the whole uncorrupted piece.
//!
//! All transforms are pure functions of their inputs and the [`Rng`] stream.

mod mdg;
mod mix;
mod nsg;
pub mod rng;
mod sr;

use serde::{Deserialize, Serialize};

use crate::text::TokenSeq;

pub use mdg::mask_document;
pub use mix::{draw_objective, feasible_objectives, make_example, mix_all};
pub use nsg::next_segment_split;
pub use rng::{derive_seed, Rng, RngState};
pub use sr::sentence_reorder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Sr,
    Nsg,
    Mdg,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Sr, Objective::Nsg, Objective::Mdg];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Sr => "sr",
            Objective::Nsg => "nsg",
            Objective::Mdg => "mdg",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sr" => Ok(Objective::Sr),
            "nsg" => Ok(Objective::Nsg),
            "mdg" => Ok(Objective::Mdg),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

/// What happened to one position of the masked span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

impl MaskAction {
    fn code(self) -> char {
        match self {
            MaskAction::Mask => 'M',
            MaskAction::Random => 'R',
            MaskAction::Keep => 'K',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c {
            'M' => Some(MaskAction::Mask),
            'R' => Some(MaskAction::Random),
            'K' => Some(MaskAction::Keep),
            _ => None,
        }
    }
}

/// Objective-specific provenance of an example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExampleMeta {
    /// 1-based shuffled sentence order: input sentence `j` is original
    /// sentence `order[j]`.
    Reorder { order: Vec<usize> },
    /// Number of source tokens before the split point.
    Split { split: usize },
    /// 1-based span start, span length and per-position actions encoded as
    /// `M`/`R`/`K` characters.
    Masked {
        start: usize,
        length: usize,
        #[serde(with = "action_codes")]
        actions: Vec<MaskAction>,
    },
}

mod action_codes {
    use super::MaskAction;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(actions: &[MaskAction], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&actions.iter().map(|a| a.code()).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<MaskAction>, D::Error> {
        let codes = String::deserialize(d)?;
        codes
            .chars()
            .map(|c| {
                MaskAction::from_code(c)
                    .ok_or_else(|| serde::de::Error::custom(format!("bad action code {c}")))
            })
            .collect()
    }
}

/// One `(input, target)` pre-training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainExample {
    pub id: String,
    pub objective: Objective,
    #[serde(rename = "input_ids")]
    pub input: TokenSeq,
    #[serde(rename = "target_ids")]
    pub target: TokenSeq,
    pub meta: ExampleMeta,
}

/// Per-position corruption probabilities inside the masked span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub p_mask: f64,
    pub p_random: f64,
    pub p_keep: f64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        Self {
            p_mask: 0.8,
            p_random: 0.1,
            p_keep: 0.1,
        }
    }
}

impl MaskPolicy {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let ps = [self.p_mask, self.p_random, self.p_keep];
        let sum: f64 = ps.iter().sum();
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ObjectiveError::InvalidConfig(format!(
                "mask policy probabilities must be non-negative and sum to 1, got {ps:?}"
            )));
        }
        Ok(())
    }
}

/// Bounds of the discrete uniform span-length distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanParams {
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SpanParams {
    fn default() -> Self {
        Self {
            min_len: 100,
            max_len: 256,
        }
    }
}

impl SpanParams {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(ObjectiveError::InvalidConfig(format!(
                "span bounds must satisfy 1 <= a <= b, got a={} b={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Where NSG places its split point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Uniform over every interior position.
    #[default]
    Random,
    /// At the end of the piece; the target is the following text.
    PieceBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub max_input_len: usize,
    pub max_target_len: usize,
    pub span: SpanParams,
    pub policy: MaskPolicy,
    pub nsg_target_len: usize,
    pub nsg_split: SplitMode,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            max_input_len: crate::text::PIECE_LEN,
            max_target_len: crate::text::TARGET_LEN,
            span: SpanParams::default(),
            policy: MaskPolicy::default(),
            nsg_target_len: crate::text::TARGET_LEN,
            nsg_split: SplitMode::Random,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        self.span.validate()?;
        self.policy.validate()?;
        if self.max_input_len == 0 || self.max_target_len == 0 || self.nsg_target_len == 0 {
            return Err(ObjectiveError::InvalidConfig(
                "length limits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("document has no sentences")]
    EmptyDocument,
    #[error("sequence of {len} tokens is shorter than the required {required}")]
    TooShort { len: usize, required: usize },
    #[error("no objective is feasible for this piece")]
    NoFeasibleObjective,
    #[error("invalid objective configuration: {0}")]
    InvalidConfig(String),
}
