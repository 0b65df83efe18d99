//! Corpus ingestion and the document/summary pair format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::{normalize_whitespace, read_jsonl, segment_sentences, RawDocument, TextError};

/// One document with its reference summary. Field aliases accept the
/// common `article`/`highlights` naming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryPair {
    pub id: String,
    #[serde(alias = "article", alias = "text")]
    pub document: String,
    #[serde(alias = "highlights", alias = "abstract")]
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    /// Whitespace-separated tokens.
    pub n_tokens: usize,
    /// Number of documents per sentence count.
    pub sentence_histogram: BTreeMap<usize, usize>,
}

impl CorpusStats {
    pub fn of(docs: &[RawDocument]) -> Self {
        let mut stats = CorpusStats {
            n_docs: docs.len(),
            ..Default::default()
        };
        for d in docs {
            stats.n_tokens += d.text.split_whitespace().count();
            *stats
                .sentence_histogram
                .entry(segment_sentences(&d.text).len())
                .or_default() += 1;
        }
        stats
    }
}

/// Reads a JSONL corpus (`{"id", "text"}` per line), or a directory of
/// plain-text files (one document per file, id = file stem, sorted by
/// name), and normalizes whitespace.
pub fn ingest(path: &Path) -> Result<(Vec<RawDocument>, CorpusStats), TextError> {
    let mut docs = if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        entries
            .into_iter()
            .map(|p| {
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok(RawDocument::new(id, std::fs::read_to_string(&p)?))
            })
            .collect::<Result<Vec<_>, TextError>>()?
    } else if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))?
    } else {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        vec![RawDocument::new(id, std::fs::read_to_string(path)?)]
    };
    for d in &mut docs {
        d.text = normalize_whitespace(&d.text);
    }
    if docs.is_empty() {
        log::warn!("{} contains no documents", path.display());
    }
    let stats = CorpusStats::of(&docs);
    Ok((docs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_lines_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"One.  Two!\"}\n{\"id\":\"b\",\"text\":\"x\"}\n{\"id\":\"c\",\"text\":\"A b. C d. E f.\"}\n",
        )
        .unwrap();
        let (docs, stats) = ingest(&path).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].text, "One. Two!");
        assert_eq!(stats.n_docs, 3);
        assert_eq!(stats.n_tokens, 2 + 1 + 6);
        assert_eq!(stats.sentence_histogram, BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
    }

    #[test]
    fn missing_text_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\"}\n").unwrap();
        match ingest(&path) {
            Err(TextError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let (docs, stats) = ingest(&path).unwrap();
        assert!(docs.is_empty());
        assert_eq!(stats.n_docs, 0);
    }

    #[test]
    fn directory_of_text_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "Second doc.").unwrap();
        std::fs::write(dir.path().join("a.txt"), "First\n\ndoc.").unwrap();
        let (docs, _) = ingest(dir.path()).unwrap();
        assert_eq!(docs[0], RawDocument::new("a", "First doc."));
        assert_eq!(docs[1].id, "b");
    }

    #[test]
    fn pairs_accept_aliases_and_round_trip() {
        let input = "{\"id\":\"1\",\"article\":\"A b.\",\"highlights\":\"A.\"}\n\n";
        let pairs: Vec<SummaryPair> = read_jsonl(input.as_bytes()).unwrap();
        assert_eq!(pairs[0].document, "A b.");
        let mut buf = Vec::new();
        crate::text::write_jsonl(&pairs, &mut buf).unwrap();
        assert_eq!(read_jsonl::<SummaryPair, _>(buf.as_slice()).unwrap(), pairs);
        assert!(matches!(
            read_jsonl::<SummaryPair, _>("{\"id\":\"1\"}".as_bytes()),
            Err(TextError::MalformedRecord { line: 1, .. })
        ));
    }
}
