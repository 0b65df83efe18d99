use super::nsg::split_at;
use super::{
    mask_document, next_segment_split, sentence_reorder, Objective, ObjectiveConfig,
    ObjectiveError, PretrainExample, Rng, SplitMode,
};
use crate::text::Piece;

/// Objectives whose preconditions hold for `piece`, in `SR, NSG, MDG` order.
pub fn feasible_objectives(piece: &Piece, cfg: &ObjectiveConfig) -> Vec<Objective> {
    let len = piece.len();
    Objective::ALL
        .into_iter()
        .filter(|o| match o {
            Objective::Sr => !piece.sentences.is_empty() && len >= 1,
            Objective::Nsg => match cfg.nsg_split {
                SplitMode::Random => len + piece.following.len() >= 2,
                SplitMode::PieceBoundary => len >= 1 && !piece.following.is_empty(),
            },
            Objective::Mdg => len >= cfg.span.min_len.max(1),
        })
        .collect()
}

/// Uniform choice among the three objectives.
pub fn draw_objective(rng: &mut Rng) -> Objective {
    Objective::ALL[rng.below(Objective::ALL.len())]
}

/// Builds a pair for `piece` with the given objective.
pub fn make_example(
    objective: Objective,
    piece: &Piece,
    vocab_size: usize,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    match objective {
        Objective::Sr => sentence_reorder(&piece.id, &piece.sentences, cfg, rng),
        Objective::Nsg => {
            let mut seq = piece.tokens();
            let split = seq.len();
            seq.extend_from_slice(&piece.following);
            match cfg.nsg_split {
                SplitMode::Random => {
                    next_segment_split(&piece.id, &seq, cfg.nsg_target_len, cfg, rng)
                }
                SplitMode::PieceBoundary => {
                    if split == 0 || split >= seq.len() {
                        return Err(ObjectiveError::TooShort {
                            len: seq.len(),
                            required: split + 1,
                        });
                    }
                    Ok(split_at(&piece.id, &seq, split, cfg.nsg_target_len, cfg))
                }
            }
        }
        Objective::Mdg => mask_document(&piece.id, &piece.tokens(), vocab_size, cfg, rng),
    }
}

/// Draws SR, NSG or MDG with probability 1/3 each and builds the pair; if the
/// drawn objective is infeasible for the piece, redraws uniformly among the
/// feasible ones.
pub fn mix_all(
    piece: &Piece,
    vocab_size: usize,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    let feasible = feasible_objectives(piece, cfg);
    if feasible.is_empty() {
        return Err(ObjectiveError::NoFeasibleObjective);
    }
    let drawn = draw_objective(rng);
    let objective = if feasible.contains(&drawn) {
        drawn
    } else {
        feasible[rng.below(feasible.len())]
    };
    make_example(objective, piece, vocab_size, cfg, rng)
}
