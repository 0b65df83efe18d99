use std::cmp::Ordering;

use super::{BeamHypothesis, DecodeConfig, DecodeError};
use crate::model::{forward, log_softmax, Batch, DecoderState, IncrementalDecoder, Real, Seq2SeqParams};
use crate::text::{BOS_ID, EOS_ID};

/// False iff appending `candidate` to `tokens` repeats a trigram already in
/// `tokens`.
pub fn trigram_block(tokens: &[u32], candidate: u32) -> bool {
    let n = tokens.len();
    if n < 2 {
        return true;
    }
    let (a, b) = (tokens[n - 2], tokens[n - 1]);
    !tokens.windows(3).any(|w| w == [a, b, candidate])
}

fn allowed(cfg: &DecodeConfig, content: &[u32], token: u32) -> bool {
    if cfg.banned_tokens.contains(&token) {
        return false;
    }
    if token == EOS_ID {
        return content.len() >= cfg.min_len;
    }
    !cfg.block_repeated_trigrams || trigram_block(content, token)
}

struct Live<T> {
    tokens: Vec<u32>,
    log_prob: f64,
    state: DecoderState<T>,
}

struct Candidate {
    score: f64,
    token: u32,
    parent: usize,
}

/// Higher score first, then lower token id, then earlier parent.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

fn best(hyps: Vec<BeamHypothesis>) -> Option<BeamHypothesis> {
    hyps.into_iter().min_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.tokens.cmp(&b.tokens))
    })
}

/// Beam search over cumulative log-probabilities (no length normalization).
///
/// Each step ranks every allowed extension of every live hypothesis. An EOS
/// candidate ranked within the first `beam_size` is set aside as finished;
/// the best `beam_size` non-EOS candidates stay live. Search stops once
/// `beam_size` hypotheses have finished or `max_len` tokens were generated,
/// and returns the best finished hypothesis, or the best live one if none
/// finished.
pub fn beam_search<T: Real>(
    params: &Seq2SeqParams<T>,
    source: &[u32],
    cfg: &DecodeConfig,
) -> Result<BeamHypothesis, DecodeError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(DecodeError::EmptySource);
    }
    let decoder = IncrementalDecoder::new(params, source)?;
    let mut live = vec![Live {
        tokens: vec![BOS_ID],
        log_prob: 0.0,
        state: decoder.start(),
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    for _ in 0..cfg.max_len {
        let mut candidates = Vec::new();
        for (parent, hyp) in live.iter_mut().enumerate() {
            let last = *hyp.tokens.last().expect("starts with BOS");
            let logits = decoder.step(&mut hyp.state, last)?;
            let log_probs = log_softmax(&logits);
            let content = &hyp.tokens[1..];
            for (token, lp) in log_probs.into_iter().enumerate() {
                let token = token as u32;
                if allowed(cfg, content, token) {
                    candidates.push(Candidate {
                        score: hyp.log_prob + lp,
                        token,
                        parent,
                    });
                }
            }
        }
        candidates.sort_by(rank);
        let mut next = Vec::with_capacity(cfg.beam_size);
        for (i, c) in candidates.iter().enumerate() {
            if next.len() == cfg.beam_size && i >= cfg.beam_size {
                break;
            }
            let parent = &live[c.parent];
            let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
            tokens.extend_from_slice(&parent.tokens);
            tokens.push(c.token);
            if c.token == EOS_ID {
                if i < cfg.beam_size {
                    finished.push(BeamHypothesis {
                        tokens,
                        log_prob: c.score,
                        finished: true,
                    });
                }
            } else if next.len() < cfg.beam_size {
                next.push(Live {
                    tokens,
                    log_prob: c.score,
                    state: parent.state.clone(),
                });
            }
        }
        live = next;
        if finished.len() >= cfg.beam_size || live.is_empty() {
            break;
        }
    }
    let result = best(finished).or_else(|| {
        best(
            live.into_iter()
                .map(|h| BeamHypothesis {
                    tokens: h.tokens,
                    log_prob: h.log_prob,
                    finished: false,
                })
                .collect(),
        )
    });
    Ok(result.unwrap_or(BeamHypothesis {
        tokens: vec![BOS_ID],
        log_prob: 0.0,
        finished: false,
    }))
}

/// Greedy decoding with the same constraints, recomputing the full
/// teacher-forced pass at every step (no cache). Ties go to the lower id.
pub fn greedy_decode<T: Real>(
    params: &Seq2SeqParams<T>,
    source: &[u32],
    cfg: &DecodeConfig,
) -> Result<BeamHypothesis, DecodeError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(DecodeError::EmptySource);
    }
    let mut content: Vec<u32> = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..cfg.max_len {
        let batch = Batch::from_pairs(&[(source, &content)]);
        let out = forward(params, &batch, None)?;
        let logits = out.logits.slice(ndarray::s![0, content.len(), ..]).to_owned();
        let log_probs = log_softmax(&logits);
        let mut pick: Option<(u32, f64)> = None;
        for (token, &lp) in log_probs.iter().enumerate() {
            let token = token as u32;
            if allowed(cfg, &content, token) && pick.is_none_or(|(_, b)| lp > b) {
                pick = Some((token, lp));
            }
        }
        let Some((token, lp)) = pick else { break };
        log_prob += lp;
        if token == EOS_ID {
            let tokens = std::iter::once(BOS_ID).chain(content).chain([EOS_ID]).collect();
            return Ok(BeamHypothesis { tokens, log_prob, finished: true });
        }
        content.push(token);
    }
    let tokens = std::iter::once(BOS_ID).chain(content).collect();
    Ok(BeamHypothesis { tokens, log_prob, finished: false })
}
