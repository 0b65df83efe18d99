use super::bpe::{TokenSeq, Vocabulary};
use super::segment::SentenceSplit;

/// Default piece and source-document length.
pub const PIECE_LEN: usize = 512;
/// Default summary / generation target length.
pub const TARGET_LEN: usize = 256;

/// Cuts `doc` into consecutive non-overlapping windows of exactly
/// `piece_len` tokens; a shorter remainder is dropped.
pub fn split_pieces(doc: &[u32], piece_len: usize) -> Vec<TokenSeq> {
    assert!(piece_len >= 1, "piece_len must be at least 1");
    doc.chunks_exact(piece_len)
        .map(|chunk| TokenSeq::from(chunk.to_vec()))
        .collect()
}

/// The first `min(len, max_len)` tokens.
pub fn truncate(seq: &[u32], max_len: usize) -> TokenSeq {
    assert!(max_len >= 1, "max_len must be at least 1");
    TokenSeq::from(seq[..seq.len().min(max_len)].to_vec())
}

/// Encodes each sentence on its own with a leading space, so sentence token
/// runs can be concatenated in any order and still decode to space-joined
/// text (after trimming).
pub fn encode_sentences(vocab: &Vocabulary, split: &SentenceSplit) -> Vec<TokenSeq> {
    split
        .sentences
        .iter()
        .map(|s| vocab.encode(&format!(" {s}")))
        .collect()
}

/// A contiguous token window of a document, with the sentence structure that
/// falls inside it and the tokens that follow it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub id: String,
    /// Token runs of the sentences inside the window. Sentences cut by a
    /// window boundary appear as fragments.
    pub sentences: Vec<Vec<u32>>,
    /// Up to `following_len` tokens after the window.
    pub following: Vec<u32>,
}

impl Piece {
    pub fn tokens(&self) -> Vec<u32> {
        self.sentences.concat()
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits a sentence-encoded document into pieces.
///
/// With `piece_len = Some(n)` the document is cut into `n`-token windows
/// (remainder dropped, so documents shorter than `n` yield nothing). With
/// `None` the whole document becomes a single piece.
pub fn build_pieces(
    doc_id: &str,
    sentences: &[TokenSeq],
    piece_len: Option<usize>,
    following_len: usize,
) -> Vec<Piece> {
    let flat: Vec<u32> = sentences.iter().flat_map(|s| s.iter().copied()).collect();
    if flat.is_empty() {
        return Vec::new();
    }
    let window = piece_len.unwrap_or(flat.len());
    let mut bounds = Vec::with_capacity(sentences.len() + 1);
    let mut offset = 0;
    bounds.push(0);
    for s in sentences {
        offset += s.len();
        bounds.push(offset);
    }

    let n_pieces = flat.len() / window;
    (0..n_pieces)
        .map(|p| {
            let start = p * window;
            let end = start + window;
            let mut runs = Vec::new();
            for w in bounds.windows(2) {
                let (s, e) = (w[0].max(start), w[1].min(end));
                if s < e {
                    runs.push(flat[s..e].to_vec());
                }
            }
            let follow_end = (end + following_len).min(flat.len());
            Piece {
                id: if piece_len.is_some() {
                    format!("{doc_id}#{p}")
                } else {
                    doc_id.to_string()
                },
                sentences: runs,
                following: flat[end..follow_end].to_vec(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn piece_counts() {
        let doc: Vec<u32> = (0..1024).collect();
        assert_eq!(split_pieces(&doc, 512).len(), 2);
        let doc: Vec<u32> = (0..700).collect();
        let pieces = split_pieces(&doc, 512);
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].len(), 512);
        let doc: Vec<u32> = (0..300).collect();
        assert!(split_pieces(&doc, 512).is_empty());
    }

    #[test]
    fn truncation() {
        let seq: Vec<u32> = (0..600).collect();
        assert_eq!(truncate(&seq, 512).len(), 512);
        let seq: Vec<u32> = (0..100).collect();
        assert_eq!(truncate(&seq, 256).ids(), seq.as_slice());
        assert_eq!(truncate(&seq, 1).ids(), &[0]);
    }

    #[test]
    fn pieces_keep_sentence_fragments_and_following_tokens() {
        let sentences: Vec<TokenSeq> = vec![
            vec![1, 2, 3].into(),
            vec![4, 5, 6, 7].into(),
            vec![8, 9].into(),
        ];
        let pieces = build_pieces("d", &sentences, Some(4), 3);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].sentences, vec![vec![1, 2, 3], vec![4]]);
        assert_eq!(pieces[0].following, vec![5, 6, 7]);
        assert_eq!(pieces[1].sentences, vec![vec![5, 6, 7], vec![8]]);
        assert_eq!(pieces[1].following, vec![9]);

        let whole = build_pieces("d", &sentences, None, 3);
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].len(), 9);
        assert!(whole[0].following.is_empty());
    }

    proptest! {
        #[test]
        fn pieces_are_exact_length_prefix_windows(len in 0usize..2000, piece_len in 1usize..600) {
            let doc: Vec<u32> = (0..len as u32).collect();
            let pieces = split_pieces(&doc, piece_len);
            prop_assert!(pieces.iter().all(|p| p.len() == piece_len));
            let joined: Vec<u32> = pieces.iter().flat_map(|p| p.iter().copied()).collect();
            prop_assert_eq!(&doc[..joined.len()], joined.as_slice());
            prop_assert!(doc.len() - joined.len() < piece_len);
        }
    }
}
