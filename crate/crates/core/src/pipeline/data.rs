//! Turning text into model inputs: document encoding, pre-training example
//! streams and fine-tuning batches.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Batch;
use crate::objectives::{
    draw_objective, feasible_objectives, make_example, mix_all, Objective, ObjectiveConfig,
    ObjectiveError, PretrainExample, Rng,
};
use crate::text::{build_pieces, encode_sentences, segment_sentences, truncate, Piece, RawDocument, Vocabulary};

/// Pre-training objective selection; `All` draws SR, NSG or MDG uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveChoice {
    #[default]
    Sr,
    Nsg,
    Mdg,
    All,
}

impl ObjectiveChoice {
    pub fn fixed(self) -> Option<Objective> {
        match self {
            ObjectiveChoice::Sr => Some(Objective::Sr),
            ObjectiveChoice::Nsg => Some(Objective::Nsg),
            ObjectiveChoice::Mdg => Some(Objective::Mdg),
            ObjectiveChoice::All => None,
        }
    }
}

impl std::str::FromStr for ObjectiveChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ObjectiveChoice::All);
        }
        Ok(match s.parse::<Objective>()? {
            Objective::Sr => ObjectiveChoice::Sr,
            Objective::Nsg => ObjectiveChoice::Nsg,
            Objective::Mdg => ObjectiveChoice::Mdg,
        })
    }
}

/// Sentence-wise encoding (each sentence with a leading space), truncated.
pub fn encode_document(vocab: &Vocabulary, text: &str, max_len: usize) -> Vec<u32> {
    let flat: Vec<u32> = encode_sentences(vocab, &segment_sentences(text))
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    truncate(&flat, max_len).into_ids()
}

/// Pieces of every document, in document order, encoded in parallel.
pub fn corpus_pieces(
    vocab: &Vocabulary,
    docs: &[RawDocument],
    piece_len: Option<usize>,
    following_len: usize,
) -> Vec<Piece> {
    docs.par_iter()
        .map(|d| {
            let sentences = encode_sentences(vocab, &segment_sentences(&d.text));
            build_pieces(&d.id, &sentences, piece_len, following_len)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn example_for(
    choice: ObjectiveChoice,
    piece: &Piece,
    vocab_size: usize,
    cfg: &ObjectiveConfig,
    rng: &mut Rng,
) -> Result<PretrainExample, ObjectiveError> {
    match choice.fixed() {
        Some(o) => make_example(o, piece, vocab_size, cfg, rng),
        None => mix_all(piece, vocab_size, cfg, rng),
    }
}

/// One example per piece with a seed derived from `seed` and the piece id,
/// so the output does not depend on thread count. Pieces for which the
/// objective is infeasible are skipped; their number is returned.
pub fn make_pretrain_data(
    pieces: &[Piece],
    choice: ObjectiveChoice,
    vocab_size: usize,
    cfg: &ObjectiveConfig,
    seed: u64,
) -> (Vec<PretrainExample>, usize) {
    let results: Vec<Option<PretrainExample>> = pieces
        .par_iter()
        .map(|p| {
            let mut rng = Rng::derived(seed, &format!("example/{}", p.id));
            example_for(choice, p, vocab_size, cfg, &mut rng).ok()
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), skipped)
}

pub fn batch_of_examples(examples: &[PretrainExample]) -> Batch {
    let pairs: Vec<(&[u32], &[u32])> = examples.iter().map(|e| (&e.input[..], &e.target[..])).collect();
    Batch::from_pairs(&pairs)
}

/// Reshuffled each epoch; batches may span an epoch boundary.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    n: usize,
    batch_size: usize,
    seed: u64,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl EpochSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        assert!(n > 0 && batch_size > 0);
        let order = Rng::derived(seed, "epoch/0").permutation(n);
        Self { n, batch_size, seed, order, cursor: 0, epoch: 0 }
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch_size);
        while out.len() < self.batch_size {
            if self.cursor == self.n {
                self.epoch += 1;
                self.order = Rng::derived(self.seed, &format!("epoch/{}", self.epoch)).permutation(self.n);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Fresh pre-training examples for every batch. With
/// [`ObjectiveChoice::All`] one objective is drawn per batch; a piece for
/// which it is infeasible falls back to a uniform choice among its feasible
/// objectives.
pub struct PretrainStream<'a> {
    pieces: Vec<&'a Piece>,
    choice: ObjectiveChoice,
    vocab_size: usize,
    cfg: ObjectiveConfig,
    seed: u64,
    sampler: EpochSampler,
    batches: usize,
    /// Objective drawn for each batch so far.
    pub draws: BTreeMap<Objective, usize>,
}

impl<'a> PretrainStream<'a> {
    /// Pieces with no usable objective are dropped; returns `None` if none
    /// remain.
    pub fn new(
        pieces: &'a [Piece],
        choice: ObjectiveChoice,
        vocab_size: usize,
        cfg: ObjectiveConfig,
        batch_size: usize,
        seed: u64,
    ) -> Option<Self> {
        let usable: Vec<&Piece> = pieces
            .iter()
            .filter(|p| {
                let f = feasible_objectives(p, &cfg);
                match choice.fixed() {
                    Some(o) => f.contains(&o),
                    None => !f.is_empty(),
                }
            })
            .collect();
        if usable.is_empty() {
            return None;
        }
        let sampler = EpochSampler::new(usable.len(), batch_size, Rng::derived(seed, "order").seed());
        Some(Self {
            pieces: usable,
            choice,
            vocab_size,
            cfg,
            seed,
            sampler,
            batches: 0,
            draws: BTreeMap::new(),
        })
    }

    pub fn n_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn next_batch(&mut self) -> (Objective, Vec<PretrainExample>) {
        let index = self.batches;
        self.batches += 1;
        let objective = self
            .choice
            .fixed()
            .unwrap_or_else(|| draw_objective(&mut Rng::derived(self.seed, &format!("objective/{index}"))));
        *self.draws.entry(objective).or_default() += 1;
        let picked: Vec<&Piece> = self.sampler.next_indices().into_iter().map(|i| self.pieces[i]).collect();
        let examples = picked
            .par_iter()
            .map(|p| {
                let mut rng = Rng::derived(self.seed, &format!("{}/{index}", p.id));
                let feasible = feasible_objectives(p, &self.cfg);
                let o = if feasible.contains(&objective) {
                    objective
                } else {
                    feasible[rng.below(feasible.len())]
                };
                make_example(o, p, self.vocab_size, &self.cfg, &mut rng).expect("objective is feasible")
            })
            .collect();
        (objective, examples)
    }
}

/// Encoded `(source, target)` fine-tuning pairs.
pub fn encode_pairs<D: AsRef<str> + Sync, S: AsRef<str> + Sync>(
    vocab: &Vocabulary,
    pairs: &[(D, S)],
    max_source: usize,
    max_target: usize,
) -> Vec<(Vec<u32>, Vec<u32>)> {
    pairs
        .par_iter()
        .map(|(d, s)| {
            (
                encode_document(vocab, d.as_ref(), max_source),
                encode_document(vocab, s.as_ref(), max_target),
            )
        })
        .collect()
}

pub fn batch_of_pairs(pairs: &[(Vec<u32>, Vec<u32>)], indices: &[usize]) -> Batch {
    let picked: Vec<(&[u32], &[u32])> = indices.iter().map(|&i| (&pairs[i].0[..], &pairs[i].1[..])).collect();
    Batch::from_pairs(&picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{SpanParams, SplitMode};
    use crate::text::TokenSeq;

    fn pieces(n: usize) -> Vec<Piece> {
        (0..n)
            .map(|i| {
                let sentences: Vec<TokenSeq> =
                    (0..4).map(|s| TokenSeq::new(vec![10 + s as u32, 20 + i as u32, 30])).collect();
                build_pieces(&format!("d{i}"), &sentences, None, 0).remove(0)
            })
            .collect()
    }

    fn small_cfg() -> ObjectiveConfig {
        ObjectiveConfig {
            span: SpanParams { min_len: 2, max_len: 6 },
            nsg_split: SplitMode::Random,
            ..Default::default()
        }
    }

    #[test]
    fn sampler_covers_each_epoch_once() {
        let mut s = EpochSampler::new(7, 3, 1);
        let mut seen: Vec<usize> = (0..7).flat_map(|_| s.next_indices()).collect();
        assert_eq!(seen.len(), 21);
        let mut first: Vec<usize> = seen.drain(..7).collect();
        first.sort_unstable();
        assert_eq!(first, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn all_draws_are_balanced_per_batch() {
        let ps = pieces(10);
        let mut stream = PretrainStream::new(&ps, ObjectiveChoice::All, 64, small_cfg(), 2, 3).unwrap();
        for _ in 0..3000 {
            stream.next_batch();
        }
        for o in Objective::ALL {
            let c = stream.draws[&o];
            assert!((900..=1100).contains(&c), "{o:?} {c}");
        }
    }

    #[test]
    fn stream_is_deterministic_and_fixed_objective_is_used() {
        let ps = pieces(5);
        let run = || {
            let mut s = PretrainStream::new(&ps, ObjectiveChoice::Sr, 64, small_cfg(), 3, 9).unwrap();
            (0..4).map(|_| s.next_batch().1).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().flatten().all(|e| e.objective == Objective::Sr));
    }

    #[test]
    fn pretrain_data_is_thread_count_independent() {
        let ps = pieces(20);
        let (a, skipped) = make_pretrain_data(&ps, ObjectiveChoice::All, 64, &small_cfg(), 5);
        assert_eq!(skipped, 0);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (b, _) = pool.install(|| make_pretrain_data(&ps, ObjectiveChoice::All, 64, &small_cfg(), 5));
        assert_eq!(a, b);
        let (mdg, skipped) = make_pretrain_data(&ps, ObjectiveChoice::Mdg, 64, &ObjectiveConfig::default(), 5);
        assert!(mdg.is_empty());
        assert_eq!(skipped, 20);
    }

    #[test]
    fn choice_parses() {
        assert_eq!("ALL".parse::<ObjectiveChoice>().unwrap(), ObjectiveChoice::All);
        assert_eq!("mdg".parse::<ObjectiveChoice>().unwrap(), ObjectiveChoice::Mdg);
        assert!("xyz".parse::<ObjectiveChoice>().is_err());
    }
}
