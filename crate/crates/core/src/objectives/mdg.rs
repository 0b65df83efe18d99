use super::{
    ExampleMeta, MaskAction, Objective, ObjectiveConfig, ObjectiveError, PretrainExample, Rng,
};
use crate::text::{truncate, MASK_ID, NUM_SPECIALS};

/// Masked document generation.
///
/// Draws a span length `l ~ U(a, min(b, n))` and a 1-based start
/// `k ~ U(1, n - l + 1)`. Each span position is independently replaced by
/// `[MASK]`, replaced by a uniformly drawn non-special token, or kept, with
/// the policy's probabilities. The target is the original piece.
pub fn mask_document(
    id: &str,
    piece: &[u32],
    vocab_size: usize,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    let n = piece.len();
    let span = cfg.span;
    if n < span.min_len || n == 0 {
        return Err(ObjectiveError::TooShort {
            len: n,
            required: span.min_len.max(1),
        });
    }
    if vocab_size <= NUM_SPECIALS as usize {
        return Err(ObjectiveError::InvalidConfig(format!(
            "vocabulary of {vocab_size} has no non-special tokens"
        )));
    }
    let length = rng.uniform_inclusive(span.min_len, span.max_len.min(n));
    let start = rng.uniform_inclusive(1, n - length + 1);

    let mut corrupted = piece.to_vec();
    let mut actions = Vec::with_capacity(length);
    let policy = cfg.policy;
    for slot in &mut corrupted[start - 1..start - 1 + length] {
        let u = rng.unit();
        let action = if u < policy.p_mask {
            MaskAction::Mask
        } else if u < policy.p_mask + policy.p_random {
            MaskAction::Random
        } else {
            MaskAction::Keep
        };
        match action {
            MaskAction::Mask => *slot = MASK_ID,
            MaskAction::Random => {
                *slot = rng.uniform_inclusive(NUM_SPECIALS as usize, vocab_size - 1) as u32
            }
            MaskAction::Keep => {}
        }
        actions.push(action);
    }

    Ok(PretrainExample {
        id: id.to_string(),
        objective: Objective::Mdg,
        input: truncate(&corrupted, cfg.max_input_len),
        target: truncate(piece, cfg.max_target_len),
        meta: ExampleMeta::Masked {
            start,
            length,
            actions,
        },
    })
}
