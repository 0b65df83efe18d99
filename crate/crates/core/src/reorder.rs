//! Content-reordering statistic: align each summary sentence to its best
//! ROUGE-2 document sentence and flag pairs whose aligned indices are not in
//! document order. Also the Lead-3 baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rouge::{ngram_matches, rouge_n, tokenize};
use crate::text::{segment_sentences, SentenceSplit};

/// Score used to pick the aligned document sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignScore {
    #[default]
    Rouge2F1,
    /// Raw count of clipped overlapping bigrams.
    BigramOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    /// `assignments[j]` is the 0-based document sentence aligned to summary
    /// sentence `j`.
    pub assignments: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReorderReport {
    pub n_pairs: usize,
    pub n_reordered: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReorderError {
    #[error("document or summary has no sentences")]
    EmptySide,
    #[error("no pairs to analyze")]
    EmptyCorpus,
}

fn bigram_score(candidate: &[String], reference: &[String], score: AlignScore) -> f64 {
    match score {
        AlignScore::Rouge2F1 => rouge_n(candidate, reference, 2).expect("order 2").f1,
        AlignScore::BigramOverlap => ngram_matches(candidate, reference, 2) as f64,
    }
}

/// Assigns each summary sentence the document sentence with the highest
/// score; ties (including all-zero rows) go to the smallest index.
pub fn align_summary_sentences(
    doc: &SentenceSplit,
    summary: &SentenceSplit,
    score: AlignScore,
) -> Result<AlignmentMap, ReorderError> {
    if doc.is_empty() || summary.is_empty() {
        return Err(ReorderError::EmptySide);
    }
    let doc_tokens: Vec<Vec<String>> = doc.sentences.iter().map(|s| tokenize(s)).collect();
    let mut assignments = Vec::with_capacity(summary.len());
    let mut scores = Vec::with_capacity(summary.len());
    for sentence in &summary.sentences {
        let tokens = tokenize(sentence);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, d) in doc_tokens.iter().enumerate() {
            let s = bigram_score(d, &tokens, score);
            if s > best.1 {
                best = (i, s);
            }
        }
        assignments.push(best.0);
        scores.push(best.1);
    }
    Ok(AlignmentMap {
        assignments,
        scores,
    })
}

/// True when the aligned indices are not non-decreasing.
pub fn detect_reordering(alignment: &AlignmentMap) -> bool {
    alignment.assignments.windows(2).any(|w| w[0] > w[1])
}

pub fn corpus_reorder_stat<D, S>(
    pairs: &[(D, S)],
    score: AlignScore,
) -> Result<ReorderReport, ReorderError>
where
    D: AsRef<str> + Sync,
    S: AsRef<str> + Sync,
{
    if pairs.is_empty() {
        return Err(ReorderError::EmptyCorpus);
    }
    let flags: Vec<bool> = pairs
        .par_iter()
        .map(|(d, s)| {
            let doc = segment_sentences(d.as_ref());
            let summary = segment_sentences(s.as_ref());
            align_summary_sentences(&doc, &summary, score).map(|a| detect_reordering(&a))
        })
        .collect::<Result<_, _>>()?;
    let n_reordered = flags.iter().filter(|&&f| f).count();
    Ok(ReorderReport {
        n_pairs: flags.len(),
        n_reordered,
        fraction: n_reordered as f64 / flags.len() as f64,
    })
}

/// First `min(3, m)` sentences joined by single spaces.
pub fn lead3(doc: &SentenceSplit) -> String {
    doc.sentences
        .iter()
        .take(3)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}
