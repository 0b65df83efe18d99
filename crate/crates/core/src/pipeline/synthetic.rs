//! Template-grammar documents with extractive summaries.
//!
//! Every sentence of a document has a different subject noun, and subject
//! nouns never occur elsewhere in a sentence, so a summary sentence copied
//! from the document matches its source sentence (and no other) with
//! ROUGE-2 F1 of 1.

use serde::{Deserialize, Serialize};

use super::SummaryPair;
use crate::objectives::Rng;
use crate::text::RawDocument;

const SUBJECTS: &[&str] = &[
    "farmer", "teacher", "pilot", "doctor", "baker", "sailor", "painter", "driver", "singer",
    "writer", "judge", "miner", "nurse", "hunter", "tailor", "priest", "clerk", "guard",
    "merchant", "soldier", "student", "poet", "chef", "mayor", "banker", "dancer", "fisher",
    "builder", "scholar", "knight", "monk", "pianist", "gardener", "porter", "ranger", "weaver",
    "captain", "actor", "lawyer", "vendor",
];
const ADJECTIVES: &[&str] = &[
    "young", "old", "tired", "cheerful", "quiet", "famous", "local", "clever", "nervous",
    "patient", "brave", "careful", "angry", "polite", "curious", "honest", "busy", "lonely",
    "proud", "gentle",
];
const VERBS: &[&str] = &[
    "visited", "painted", "cleaned", "watched", "left", "reached", "crossed", "described",
    "photographed", "guarded", "explored", "repaired", "measured", "avoided", "praised",
    "searched", "opened", "closed", "mapped", "admired",
];
const PLACES: &[&str] = &[
    "the market", "the river", "the old bridge", "the harbor", "the station", "the museum",
    "the library", "the tower", "the village square", "the orchard", "the castle", "the mill",
    "the chapel", "the school", "the garden", "the stadium", "the factory", "the bakery",
    "the lighthouse", "the courthouse",
];
const TIMES: &[&str] = &[
    "in the morning", "at noon", "before dawn", "after lunch", "on monday", "last winter",
    "during the storm", "at midnight", "in the spring", "on sunday",
];

/// Sizes of the word lists drawn from; each is capped at the built-in list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarSpec {
    pub subjects: usize,
    pub adjectives: usize,
    pub verbs: usize,
    pub places: usize,
    pub times: usize,
}

impl Default for GrammarSpec {
    fn default() -> Self {
        Self {
            subjects: SUBJECTS.len(),
            adjectives: ADJECTIVES.len(),
            verbs: VERBS.len(),
            places: PLACES.len(),
            times: TIMES.len(),
        }
    }
}

/// Which document sentences form the summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryStyle {
    /// The first `summary_sentences` sentences.
    #[default]
    Lead,
    /// A random subset of `summary_sentences` sentences.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub summary_sentences: usize,
    pub summary_style: SummaryStyle,
    /// Fraction of pairs whose summary lists its sentences in reverse
    /// document order.
    pub reorder_fraction: f64,
    pub grammar: GrammarSpec,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            min_sentences: 4,
            max_sentences: 8,
            summary_sentences: 2,
            summary_style: SummaryStyle::Lead,
            reorder_fraction: 0.0,
            grammar: GrammarSpec::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        let g = &self.grammar;
        if self.n_docs == 0 || self.min_sentences == 0 || self.summary_sentences == 0 {
            return Err("n_docs, min_sentences and summary_sentences must be at least 1".into());
        }
        if self.min_sentences > self.max_sentences {
            return Err("min_sentences exceeds max_sentences".into());
        }
        if self.summary_sentences > self.min_sentences {
            return Err("summary_sentences exceeds min_sentences".into());
        }
        if !(0.0..=1.0).contains(&self.reorder_fraction) {
            return Err(format!("reorder_fraction {} outside [0, 1]", self.reorder_fraction));
        }
        if self.reorder_fraction > 0.0 && self.summary_sentences < 2 {
            return Err("reordering needs at least 2 summary sentences".into());
        }
        let caps = [
            (g.subjects, SUBJECTS.len()),
            (g.adjectives, ADJECTIVES.len()),
            (g.verbs, VERBS.len()),
            (g.places, PLACES.len()),
            (g.times, TIMES.len()),
        ];
        if caps.iter().any(|&(n, cap)| n == 0 || n > cap) {
            return Err("grammar list sizes must be within 1..=built-in size".into());
        }
        if g.subjects < self.max_sentences {
            return Err("need at least max_sentences distinct subjects".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub pairs: Vec<SummaryPair>,
    /// Ground truth: whether pair `i` was generated out of document order.
    pub reordered: Vec<bool>,
}

impl SyntheticCorpus {
    pub fn documents(&self) -> Vec<RawDocument> {
        self.pairs
            .iter()
            .map(|p| RawDocument::new(p.id.clone(), p.document.clone()))
            .collect()
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(g: &GrammarSpec, subject: &str, rng: &mut Rng) -> String {
    let adj = ADJECTIVES[rng.below(g.adjectives)];
    let verb = VERBS[rng.below(g.verbs)];
    let place = PLACES[rng.below(g.places)];
    let time = TIMES[rng.below(g.times)];
    match rng.below(3) {
        0 => format!("The {adj} {subject} {verb} {place} {time}."),
        1 => format!("{}, the {subject} {verb} {place}.", capitalize(time)),
        _ => {
            let article = if adj.starts_with(['a', 'e', 'i', 'o', 'u']) { "An" } else { "A" };
            format!("{article} {adj} {subject} was seen near {place} {time}.")
        }
    }
}

/// Deterministic corpus: document `i` depends only on `seed` and `i`, and
/// exactly `round(reorder_fraction * n_docs)` pairs are reversed.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus, String> {
    spec.validate()?;
    let n = spec.n_docs;
    let n_reordered = (spec.reorder_fraction * n as f64).round() as usize;
    let mut reordered = vec![false; n];
    for &i in &Rng::derived(seed, "reorder").permutation(n)[..n_reordered] {
        reordered[i] = true;
    }
    let pairs = (0..n)
        .map(|i| {
            let mut rng = Rng::derived(seed, &format!("doc/{i}"));
            let m = rng.uniform_inclusive(spec.min_sentences, spec.max_sentences);
            let subjects = rng.permutation(spec.grammar.subjects);
            let sentences: Vec<String> = subjects[..m]
                .iter()
                .map(|&s| sentence(&spec.grammar, SUBJECTS[s], &mut rng))
                .collect();
            let k = spec.summary_sentences;
            let mut picked: Vec<usize> = match spec.summary_style {
                SummaryStyle::Lead => (0..k).collect(),
                SummaryStyle::Random => {
                    let mut p = rng.permutation(m)[..k].to_vec();
                    p.sort_unstable();
                    p
                }
            };
            if reordered[i] {
                picked.reverse();
            }
            let summary: Vec<&str> = picked.iter().map(|&j| sentences[j].as_str()).collect();
            SummaryPair {
                id: format!("syn-{i:06}"),
                document: sentences.join(" "),
                summary: summary.join(" "),
            }
        })
        .collect();
    Ok(SyntheticCorpus { pairs, reordered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reorder::{corpus_reorder_stat, AlignScore};

    #[test]
    fn planted_fraction_is_exact() {
        for (f, n, expect) in [(0.5, 4, 2), (0.25, 8, 2), (0.0, 5, 0), (1.0, 3, 3), (0.5, 7, 4)] {
            let spec = SyntheticSpec {
                n_docs: n,
                reorder_fraction: f,
                summary_style: SummaryStyle::Random,
                ..Default::default()
            };
            let c = gen_synthetic(&spec, 1).unwrap();
            assert_eq!(c.reordered.iter().filter(|&&r| r).count(), expect);
            let pairs: Vec<(&str, &str)> =
                c.pairs.iter().map(|p| (p.document.as_str(), p.summary.as_str())).collect();
            let report = corpus_reorder_stat(&pairs, AlignScore::Rouge2F1).unwrap();
            assert_eq!(report.n_reordered, expect);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SyntheticSpec { n_docs: 20, ..Default::default() };
        assert_eq!(gen_synthetic(&spec, 3).unwrap(), gen_synthetic(&spec, 3).unwrap());
        assert_ne!(gen_synthetic(&spec, 3).unwrap(), gen_synthetic(&spec, 4).unwrap());
    }

    #[test]
    fn lead_summary_is_document_prefix() {
        let spec = SyntheticSpec { n_docs: 10, ..Default::default() };
        for p in gen_synthetic(&spec, 5).unwrap().pairs {
            assert!(p.document.starts_with(&p.summary));
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSpec { n_docs: 0, ..Default::default() },
            SyntheticSpec { reorder_fraction: 1.5, ..Default::default() },
            SyntheticSpec { summary_sentences: 9, ..Default::default() },
            SyntheticSpec { min_sentences: 9, ..Default::default() },
        ];
        for s in bad {
            assert!(gen_synthetic(&s, 0).is_err());
        }
    }
}
