//! ROUGE-N and ROUGE-L with two reporting protocols: full-length F1 and
//! limited-length recall (candidate cut to the reference's word count).
//!
//! Words are produced by [`tokenize`]: lowercase, whitespace-split, every
//! punctuation character its own token. No stemming, single reference.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return Self::default();
        }
        Self::from_pr(
            matches as f64 / candidate_total as f64,
            matches as f64 / reference_total as f64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    R1,
    R2,
    Rl,
}

impl std::str::FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "r1" | "rouge-1" => Ok(RougeVariant::R1),
            "r2" | "rouge-2" => Ok(RougeVariant::R2),
            "rl" | "rouge-l" => Ok(RougeVariant::Rl),
            other => Err(format!("unknown ROUGE variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalProtocol {
    /// Whole candidate against whole reference; report F1.
    #[serde(rename = "f1")]
    FullLengthF1,
    /// Candidate truncated to the reference's whitespace-word count; report
    /// recall.
    #[serde(rename = "limited-recall")]
    LimitedLengthRecall,
}

impl std::str::FromStr for EvalProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "f1" | "full-length-f1" => Ok(EvalProtocol::FullLengthF1),
            "limited-recall" | "limited-length-recall" => Ok(EvalProtocol::LimitedLengthRecall),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RougeError {
    #[error("no pairs to score")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
}

/// Lowercases, splits on whitespace and separates punctuation characters
/// into their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
            } else {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for gram in seq.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Number of candidate n-grams matched in the reference, each n-gram
/// clipped to its reference count.
pub fn ngram_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> usize {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    cand.iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(
    candidate: &[T],
    reference: &[T],
    n: usize,
) -> Result<RougeScore, RougeError> {
    if n == 0 {
        return Err(RougeError::InvalidOrder);
    }
    let matches = ngram_matches(candidate, reference, n);
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    Ok(RougeScore::from_counts(matches, cand_total, ref_total))
}

/// Length of the longest common subsequence, two-row dynamic programme.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_len(candidate, reference);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}

/// Scores one candidate/reference text pair under a protocol.
pub fn score_pair(
    candidate: &str,
    reference: &str,
    variant: RougeVariant,
    protocol: EvalProtocol,
) -> RougeScore {
    let candidate = match protocol {
        EvalProtocol::FullLengthF1 => candidate.to_string(),
        EvalProtocol::LimitedLengthRecall => {
            let limit = reference.split_whitespace().count();
            candidate
                .split_whitespace()
                .take(limit)
                .collect::<Vec<_>>()
                .join(" ")
        }
    };
    let cand = tokenize(&candidate);
    let refs = tokenize(reference);
    match variant {
        RougeVariant::R1 => rouge_n(&cand, &refs, 1).unwrap(),
        RougeVariant::R2 => rouge_n(&cand, &refs, 2).unwrap(),
        RougeVariant::Rl => rouge_l(&cand, &refs),
    }
}

/// Macro-averaged corpus score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub variant: RougeVariant,
    pub protocol: EvalProtocol,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_pairs: usize,
}

impl CorpusScore {
    /// F1 for the full-length protocol, recall for the limited-length one.
    pub fn headline(&self) -> f64 {
        match self.protocol {
            EvalProtocol::FullLengthF1 => self.f1,
            EvalProtocol::LimitedLengthRecall => self.recall,
        }
    }
}

pub fn score_corpus<C, R>(
    pairs: &[(C, R)],
    variant: RougeVariant,
    protocol: EvalProtocol,
) -> Result<CorpusScore, RougeError>
where
    C: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    if pairs.is_empty() {
        return Err(RougeError::EmptyCorpus);
    }
    let scores: Vec<RougeScore> = pairs
        .par_iter()
        .map(|(c, r)| score_pair(c.as_ref(), r.as_ref(), variant, protocol))
        .collect();
    let n = scores.len() as f64;
    let mean = |f: fn(&RougeScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(CorpusScore {
        variant,
        protocol,
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        n_pairs: scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_texts_score_one() {
        let a = words("the cat sat on the mat");
        for n in 1..=3 {
            let s = rouge_n(&a, &a, n).unwrap();
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(rouge_l(&a, &a).f1, 1.0);
    }

    #[test]
    fn hand_counted_unigram_and_bigram() {
        let (c, r) = (words("the cat"), words("the dog"));
        let s = rouge_n(&c, &r, 1).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(rouge_n(&c, &r, 2).unwrap(), RougeScore::default());
    }

    #[test]
    fn clipping_limits_repeated_matches() {
        // candidate has "the" three times, reference once: 1 clipped match.
        let s = rouge_n(&words("the the the"), &words("the cat"), 1).unwrap();
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lcs_example() {
        let s = rouge_l(&words("a b c d"), &words("a c b d"));
        assert_eq!(lcs_len(&words("a b c d"), &words("a c b d")), 3);
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        assert_eq!(rouge_l(&words("a b"), &words("c d")), RougeScore::default());
        assert_eq!(rouge_l::<&str>(&[], &words("c d")), RougeScore::default());
    }

    #[test]
    fn order_zero_is_rejected() {
        assert_eq!(rouge_n(&[1], &[1], 0), Err(RougeError::InvalidOrder));
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("The Cat's  mat, (sat)."),
            vec!["the", "cat", "'", "s", "mat", ",", "(", "sat", ")", "."]
        );
    }

    #[test]
    fn corpus_protocols() {
        let same = [("a b c.", "a b c."), ("x y", "x y")];
        for v in [RougeVariant::R1, RougeVariant::R2, RougeVariant::Rl] {
            assert_eq!(
                score_corpus(&same, v, EvalProtocol::FullLengthF1).unwrap().f1,
                1.0
            );
        }
        let padded = [("the cat sat junk junk junk", "the cat sat")];
        let s = score_corpus(&padded, RougeVariant::Rl, EvalProtocol::LimitedLengthRecall).unwrap();
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.headline(), 1.0);

        let mixed = [("a b", "a b"), ("c d", "e f")];
        let s = score_corpus(&mixed, RougeVariant::R1, EvalProtocol::FullLengthF1).unwrap();
        assert_eq!(s.f1, 0.5);

        let none: [(&str, &str); 0] = [];
        assert_eq!(
            score_corpus(&none, RougeVariant::R1, EvalProtocol::FullLengthF1),
            Err(RougeError::EmptyCorpus)
        );
    }

    proptest! {
        #[test]
        fn f1_is_symmetric_and_bounded(
            a in proptest::collection::vec(0u8..5, 0..12),
            b in proptest::collection::vec(0u8..5, 0..12),
        ) {
            for n in 1..=2 {
                let ab = rouge_n(&a, &b, n).unwrap();
                let ba = rouge_n(&b, &a, n).unwrap();
                prop_assert_eq!(ab.f1, ba.f1);
                for v in [ab.precision, ab.recall, ab.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            prop_assert_eq!(rouge_l(&a, &b).f1, rouge_l(&b, &a).f1);
        }

        #[test]
        fn appending_a_reference_ngram_never_lowers_recall(
            a in proptest::collection::vec(0u8..4, 0..10),
            b in proptest::collection::vec(0u8..4, 2..10),
            pick in 0usize..100,
        ) {
            for n in 1..=2usize {
                let start = pick % (b.len() - n + 1);
                let mut extended = a.clone();
                extended.extend_from_slice(&b[start..start + n]);
                let before = rouge_n(&a, &b, n).unwrap().recall;
                let after = rouge_n(&extended, &b, n).unwrap().recall;
                prop_assert!(after >= before);
            }
        }
    }
}
