//! Text ingestion: sentence segmentation, byte-level BPE and piecing.

pub mod bpe;
pub mod corpus;
pub mod pieces;
pub mod segment;

pub use bpe::{
    is_special, train_bpe, SpecialToken, Token, TokenId, TokenSeq, Vocabulary, BASE_VOCAB_SIZE,
    BOS_ID, EOS_ID, MASK_ID, NUM_SPECIALS, PAD_ID, UNK_ID,
};
pub use corpus::{read_jsonl, read_jsonl_file, write_jsonl, write_jsonl_file, RawDocument};
pub use pieces::{build_pieces, encode_sentences, split_pieces, truncate, Piece, PIECE_LEN, TARGET_LEN};
pub use segment::{normalize_whitespace, segment_sentences, SentenceSplit};

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("corpus contains no non-empty document")]
    EmptyCorpus,
    #[error("target vocabulary size {0} is below the byte-level minimum of 261")]
    VocabTooSmall(usize),
    #[error("token id {id} is out of range for a vocabulary of {vocab_size}")]
    InvalidId { id: TokenId, vocab_size: usize },
    #[error("vocabulary file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
