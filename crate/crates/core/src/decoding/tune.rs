use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{beam_search, BeamHypothesis, DecodeConfig, DecodeError};
use crate::model::{Real, Seq2SeqParams};
use crate::rouge::{score_corpus, EvalProtocol, RougeVariant};
use crate::text::Vocabulary;

/// Decodes every source in parallel; output order follows input order.
pub fn decode_corpus<T: Real, S: AsRef<[u32]> + Sync>(
    params: &Seq2SeqParams<T>,
    sources: &[S],
    cfg: &DecodeConfig,
) -> Result<Vec<BeamHypothesis>, DecodeError> {
    sources
        .par_iter()
        .map(|s| beam_search(params, s.as_ref(), cfg))
        .collect()
}

fn rouge_l_f1<T: Real, S: AsRef<[u32]> + Sync, R: AsRef<str> + Sync>(
    params: &Seq2SeqParams<T>,
    vocab: &Vocabulary,
    pairs: &[(S, R)],
    cfg: &DecodeConfig,
) -> Result<f64, DecodeError> {
    let sources: Vec<&[u32]> = pairs.iter().map(|(s, _)| s.as_ref()).collect();
    let hyps = decode_corpus(params, &sources, cfg)?;
    let scored: Vec<(String, &str)> = hyps
        .iter()
        .zip(pairs)
        .map(|(h, (_, r))| Ok((vocab.decode(h.content())?.trim().to_string(), r.as_ref())))
        .collect::<Result<_, DecodeError>>()?;
    Ok(score_corpus(&scored, RougeVariant::Rl, EvalProtocol::FullLengthF1)?.f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinLenTuning {
    /// `(min_len, ROUGE-L F1)` for every candidate, in increasing order.
    pub candidates: Vec<(usize, f64)>,
    pub best_min_len: usize,
    pub best_rouge_l: f64,
}

/// Scores ROUGE-L F1 for `min_len` in `lo, lo+step, ..., <= hi` and picks
/// the best; ties go to the smaller value. `max_len` is raised to at least
/// each candidate.
#[allow(clippy::too_many_arguments)]
pub fn tune_min_length<T: Real, S: AsRef<[u32]> + Sync, R: AsRef<str> + Sync>(
    params: &Seq2SeqParams<T>,
    vocab: &Vocabulary,
    pairs: &[(S, R)],
    lo: usize,
    hi: usize,
    step: usize,
    base: &DecodeConfig,
) -> Result<MinLenTuning, DecodeError> {
    if lo > hi || step == 0 || lo == 0 {
        return Err(DecodeError::InvalidConfig(format!(
            "min-length range {lo}..={hi} step {step}"
        )));
    }
    let mut candidates = Vec::new();
    for min_len in (lo..=hi).step_by(step) {
        let cfg = DecodeConfig {
            min_len,
            max_len: base.max_len.max(min_len),
            ..base.clone()
        };
        candidates.push((min_len, rouge_l_f1(params, vocab, pairs, &cfg)?));
    }
    let (best_min_len, best_rouge_l) = candidates
        .iter()
        .copied()
        .fold(None, |acc: Option<(usize, f64)>, c| match acc {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        })
        .expect("at least one candidate");
    Ok(MinLenTuning {
        candidates,
        best_min_len,
        best_rouge_l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSweepRow {
    pub beam: usize,
    pub rouge_l: f64,
}

/// One decode-and-score pass per beam size.
pub fn beam_sweep<T: Real, S: AsRef<[u32]> + Sync, R: AsRef<str> + Sync>(
    params: &Seq2SeqParams<T>,
    vocab: &Vocabulary,
    pairs: &[(S, R)],
    beams: &[usize],
    base: &DecodeConfig,
) -> Result<Vec<BeamSweepRow>, DecodeError> {
    if beams.is_empty() {
        return Err(DecodeError::EmptySweep);
    }
    beams
        .iter()
        .map(|&beam| {
            let cfg = DecodeConfig {
                beam_size: beam,
                ..base.clone()
            };
            Ok(BeamSweepRow {
                beam,
                rouge_l: rouge_l_f1(params, vocab, pairs, &cfg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::greedy_decode;
    use crate::model::ModelConfig;
    use crate::objectives::Rng;

    type Fixture = (Seq2SeqParams<f64>, Vocabulary, Vec<(Vec<u32>, String)>);

    fn setup() -> Fixture {
        let vocab = Vocabulary::byte_level();
        let cfg = ModelConfig { init_std: 0.5, ..ModelConfig::tiny(vocab.len()) };
        let params = Seq2SeqParams::init(&cfg, &mut Rng::new(8));
        let pairs = ["the cat sat.", "a dog ran off.", "birds sing."]
            .iter()
            .map(|t| (vocab.encode(t).into_ids(), t.to_string()))
            .collect();
        (params, vocab, pairs)
    }

    #[test]
    fn default_range_has_eleven_candidates() {
        assert_eq!((30..=80).step_by(5).count(), 11);
        let (p, v, pairs) = setup();
        let base = DecodeConfig { beam_size: 1, max_len: 3, ..Default::default() };
        let t = tune_min_length(&p, &v, &pairs[..1], 1, 3, 1, &base).unwrap();
        assert_eq!(t.candidates.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn single_candidate_and_ties_pick_lowest() {
        let (p, v, pairs) = setup();
        let base = DecodeConfig { beam_size: 2, max_len: 4, ..Default::default() };
        let t = tune_min_length(&p, &v, &pairs, 2, 2, 5, &base).unwrap();
        assert_eq!(t.best_min_len, 2);
        // References with no overlap with anything decodable score 0 everywhere.
        let zero: Vec<(Vec<u32>, String)> = pairs.iter().map(|(s, _)| (s.clone(), "\u{2603}".into())).collect();
        let t = tune_min_length(&p, &v, &zero, 1, 4, 1, &base).unwrap();
        assert!(t.candidates.iter().all(|c| c.1 == 0.0));
        assert_eq!(t.best_min_len, 1);
        assert!(tune_min_length(&p, &v, &zero, 5, 4, 1, &base).is_err());
    }

    #[test]
    fn sweep_rows_and_beam_one_equals_greedy() {
        let (p, v, pairs) = setup();
        let base = DecodeConfig { max_len: 6, ..Default::default() };
        let rows = beam_sweep(&p, &v, &pairs, &[1, 2, 3], &base).unwrap();
        assert_eq!(rows.iter().map(|r| r.beam).collect::<Vec<_>>(), vec![1, 2, 3]);
        let greedy: Vec<(String, &str)> = pairs
            .iter()
            .map(|(s, r)| {
                let cfg = DecodeConfig { beam_size: 1, ..base.clone() };
                let h = greedy_decode(&p, s, &cfg).unwrap();
                (v.decode(h.content()).unwrap().trim().to_string(), r.as_str())
            })
            .collect();
        let g = score_corpus(&greedy, RougeVariant::Rl, EvalProtocol::FullLengthF1).unwrap().f1;
        assert_eq!(rows[0].rouge_l, g);
        assert!(matches!(beam_sweep(&p, &v, &pairs, &[], &base), Err(DecodeError::EmptySweep)));
    }
}
