//! Byte-level BPE: merge learning, encoding, decoding and the `STEPBPE v1`
//! vocabulary file format.
//!
//! Ids are laid out as five special tokens, then the 256 byte tokens, then
//! learned merges. Every UTF-8 string is encodable without `UNK` because the
//! byte tokens cover the whole input alphabet.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::corpus::RawDocument;
use super::TextError;

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const MASK_ID: TokenId = 3;
pub const UNK_ID: TokenId = 4;
pub const NUM_SPECIALS: u32 = 5;
pub const BYTE_OFFSET: u32 = NUM_SPECIALS;
/// Smallest possible vocabulary: specials plus the 256 byte tokens.
pub const BASE_VOCAB_SIZE: usize = 261;

const FILE_MAGIC: &str = "STEPBPE";
const FILE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialToken {
    Pad,
    Bos,
    Eos,
    Mask,
    Unk,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 5] = [
        SpecialToken::Pad,
        SpecialToken::Bos,
        SpecialToken::Eos,
        SpecialToken::Mask,
        SpecialToken::Unk,
    ];

    pub fn id(self) -> TokenId {
        match self {
            SpecialToken::Pad => PAD_ID,
            SpecialToken::Bos => BOS_ID,
            SpecialToken::Eos => EOS_ID,
            SpecialToken::Mask => MASK_ID,
            SpecialToken::Unk => UNK_ID,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecialToken::Pad => "<pad>",
            SpecialToken::Bos => "<s>",
            SpecialToken::Eos => "</s>",
            SpecialToken::Mask => "<mask>",
            SpecialToken::Unk => "<unk>",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

pub fn is_special(id: TokenId) -> bool {
    id < NUM_SPECIALS
}

/// A vocabulary entry: either a reserved symbol or a byte string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    Special(SpecialToken),
    Bytes(Vec<u8>),
}

/// An ordered sequence of token ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }
}

impl FromIterator<TokenId> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeRule {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Vocabulary {
    merges: Vec<MergeRule>,
    id_to_token: Vec<Token>,
    token_to_id: HashMap<Token, TokenId>,
    merge_ranks: HashMap<(TokenId, TokenId), usize>,
}

impl fmt::Debug for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Vocabulary")
            .field("size", &self.len())
            .field("merges", &self.merges.len())
            .finish()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::byte_level()
    }
}

impl Vocabulary {
    /// Specials and the 256 byte tokens, no merges.
    pub fn byte_level() -> Self {
        let mut id_to_token = Vec::with_capacity(BASE_VOCAB_SIZE);
        id_to_token.extend(SpecialToken::ALL.iter().map(|&s| Token::Special(s)));
        id_to_token.extend((0..=255u8).map(|b| Token::Bytes(vec![b])));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self {
            merges: Vec::new(),
            id_to_token,
            token_to_id,
            merge_ranks: HashMap::new(),
        }
    }

    /// Number of token types.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.id_to_token.get(id as usize)
    }

    pub fn id_of(&self, token: &Token) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        match self.id_to_token.get(id as usize)? {
            Token::Bytes(b) => Some(b),
            Token::Special(_) => None,
        }
    }

    pub fn byte_id(byte: u8) -> TokenId {
        BYTE_OFFSET + byte as TokenId
    }

    /// Appends a merge rule, reusing the id of an existing identical byte
    /// string. Returns the result id.
    fn push_merge(&mut self, left: TokenId, right: TokenId) -> TokenId {
        let mut bytes = self.token_bytes(left).expect("merge of special").to_vec();
        bytes.extend_from_slice(self.token_bytes(right).expect("merge of special"));
        let token = Token::Bytes(bytes);
        let result = match self.token_to_id.get(&token) {
            Some(&id) => id,
            None => {
                let id = self.id_to_token.len() as TokenId;
                self.id_to_token.push(token.clone());
                self.token_to_id.insert(token, id);
                id
            }
        };
        self.merge_ranks.insert((left, right), self.merges.len());
        self.merges.push(MergeRule { left, right, result });
        result
    }

    /// Encodes `text` as UTF-8 bytes with merges applied in learned order.
    pub fn encode(&self, text: &str) -> TokenSeq {
        let mut ids: Vec<TokenId> = text.bytes().map(Self::byte_id).collect();
        // Applying merges in rank order is the same as repeatedly applying the
        // lowest-ranked present pair whose rank exceeds the last applied one.
        let mut floor = 0usize;
        loop {
            let next = ids
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0], w[1])).copied())
                .filter(|&rank| rank >= floor)
                .min();
            let Some(rank) = next else { break };
            let rule = self.merges[rank];
            merge_pair(&mut ids, rule.left, rule.right, rule.result);
            floor = rank + 1;
        }
        TokenSeq(ids)
    }

    /// Maps ids back to text. Special tokens are dropped; byte sequences that
    /// are not valid UTF-8 are replaced lossily.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        let mut bytes = Vec::with_capacity(ids.len() * 2);
        for &id in ids {
            match self.id_to_token.get(id as usize) {
                Some(Token::Bytes(b)) => bytes.extend_from_slice(b),
                Some(Token::Special(_)) => {}
                None => {
                    return Err(TextError::InvalidId {
                        id,
                        vocab_size: self.len(),
                    })
                }
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{FILE_MAGIC} {FILE_VERSION} {}", self.len())?;
        for rule in &self.merges {
            writeln!(
                out,
                "{} {}",
                bytes_to_symbol(self.token_bytes(rule.left).unwrap()),
                bytes_to_symbol(self.token_bytes(rule.right).unwrap())
            )?;
        }
        for special in SpecialToken::ALL {
            writeln!(out, "special {} {}", special.name(), special.id())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TextError> {
        let mut lines = input.lines().enumerate();
        let bad = |line: usize, msg: &str| TextError::VocabFormat {
            line: line + 1,
            message: msg.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let header = header?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 3 || fields[0] != FILE_MAGIC || fields[1] != FILE_VERSION {
            return Err(bad(0, "expected `STEPBPE v1 <size>`"));
        }
        let size: usize = fields[2].parse().map_err(|_| bad(0, "invalid size"))?;

        let mut vocab = Vocabulary::byte_level();
        let mut specials_seen = 0;
        for (n, line) in lines {
            let line = line?;
            let fields: Vec<&str> = line.split(' ').collect();
            match fields.as_slice() {
                [left, right] if specials_seen == 0 => {
                    let left = symbol_to_bytes(left).ok_or_else(|| bad(n, "bad symbol"))?;
                    let right = symbol_to_bytes(right).ok_or_else(|| bad(n, "bad symbol"))?;
                    let left = vocab
                        .id_of(&Token::Bytes(left))
                        .ok_or_else(|| bad(n, "unknown left token"))?;
                    let right = vocab
                        .id_of(&Token::Bytes(right))
                        .ok_or_else(|| bad(n, "unknown right token"))?;
                    vocab.push_merge(left, right);
                }
                ["special", name, id] => {
                    let special =
                        SpecialToken::from_name(name).ok_or_else(|| bad(n, "unknown special"))?;
                    let id: TokenId = id.parse().map_err(|_| bad(n, "invalid special id"))?;
                    if id != special.id() {
                        return Err(bad(n, "special id does not match the fixed layout"));
                    }
                    specials_seen += 1;
                }
                [""] => {}
                _ => return Err(bad(n, "unexpected line")),
            }
        }
        if specials_seen != SpecialToken::ALL.len() {
            return Err(bad(0, "missing special-token assignments"));
        }
        if vocab.len() != size {
            return Err(bad(0, "size in header does not match merges"));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TextError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TextError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Replaces every non-overlapping occurrence of `(left, right)`, scanning
/// left to right.
fn merge_pair(ids: &mut Vec<TokenId>, left: TokenId, right: TokenId, result: TokenId) {
    let mut write = 0;
    let mut read = 0;
    while read < ids.len() {
        if read + 1 < ids.len() && ids[read] == left && ids[read + 1] == right {
            ids[write] = result;
            read += 2;
        } else {
            ids[write] = ids[read];
            read += 1;
        }
        write += 1;
    }
    ids.truncate(write);
}

/// Learns byte-pair merges over the documents until `target_size` token
/// types exist or no adjacent pair is left.
///
/// The most frequent pair wins; equal counts go to the pair whose
/// `(left bytes, right bytes)` is lexicographically smallest.
pub fn train_bpe<'a, I>(corpus: I, target_size: usize) -> Result<Vocabulary, TextError>
where
    I: IntoIterator<Item = &'a RawDocument>,
{
    if target_size < BASE_VOCAB_SIZE {
        return Err(TextError::VocabTooSmall(target_size));
    }
    let mut seqs: Vec<Vec<TokenId>> = corpus
        .into_iter()
        .filter(|doc| !doc.text.is_empty())
        .map(|doc| doc.text.bytes().map(Vocabulary::byte_id).collect())
        .collect();
    if seqs.is_empty() {
        return Err(TextError::EmptyCorpus);
    }

    let mut vocab = Vocabulary::byte_level();
    let mut counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
    let mut occurs_in: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (doc, seq) in seqs.iter().enumerate() {
        for w in seq.windows(2) {
            *counts.entry((w[0], w[1])).or_default() += 1;
            occurs_in.entry((w[0], w[1])).or_default().insert(doc);
        }
    }

    while vocab.len() < target_size {
        let Some(pair) = best_pair(&counts, &vocab, &vocab.merge_ranks) else {
            break;
        };
        let result = vocab.push_merge(pair.0, pair.1);
        let docs = occurs_in.remove(&pair).unwrap_or_default();
        let mut docs: Vec<usize> = docs.into_iter().collect();
        docs.sort_unstable();
        for doc in docs {
            let seq = &mut seqs[doc];
            for w in seq.windows(2) {
                let key = (w[0], w[1]);
                if let Some(c) = counts.get_mut(&key) {
                    *c -= 1;
                    if *c == 0 {
                        counts.remove(&key);
                    }
                }
            }
            merge_pair(seq, pair.0, pair.1, result);
            for w in seq.windows(2) {
                let key = (w[0], w[1]);
                *counts.entry(key).or_default() += 1;
                if key != pair {
                    occurs_in.entry(key).or_default().insert(doc);
                }
            }
        }
        counts.remove(&pair);
    }
    Ok(vocab)
}

fn best_pair(
    counts: &HashMap<(TokenId, TokenId), i64>,
    vocab: &Vocabulary,
    learned: &HashMap<(TokenId, TokenId), usize>,
) -> Option<(TokenId, TokenId)> {
    let mut best: Option<((TokenId, TokenId), i64)> = None;
    for (&pair, &count) in counts {
        // A pair can resurface when a later merge reuses an existing id; it
        // keeps its first rank so encoding matches training.
        if count <= 0 || learned.contains_key(&pair) {
            continue;
        }
        best = match best {
            None => Some((pair, count)),
            Some((_, bc)) if count > bc => Some((pair, count)),
            Some((bp, bc)) if count == bc && pair_bytes_lt(vocab, pair, bp) => Some((pair, count)),
            keep => keep,
        };
    }
    best.map(|(pair, _)| pair)
}

fn pair_bytes_lt(vocab: &Vocabulary, a: (TokenId, TokenId), b: (TokenId, TokenId)) -> bool {
    let key = |p: (TokenId, TokenId)| (vocab.token_bytes(p.0).unwrap(), vocab.token_bytes(p.1).unwrap());
    key(a) < key(b)
}

/// Printable stand-in for each byte, so token strings never contain spaces
/// or control characters (the usual byte-level BPE mapping).
fn byte_symbols() -> &'static ([char; 256], HashMap<char, u8>) {
    static TABLE: std::sync::OnceLock<([char; 256], HashMap<char, u8>)> =
        std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let printable = |b: u32| {
            (b'!' as u32..=b'~' as u32).contains(&b)
                || (0xA1..=0xAC).contains(&b)
                || (0xAE..=0xFF).contains(&b)
        };
        let mut forward = ['\0'; 256];
        let mut shift = 0;
        for b in 0..256u32 {
            let code = if printable(b) {
                b
            } else {
                shift += 1;
                255 + shift
            };
            forward[b as usize] = char::from_u32(code).unwrap();
        }
        let backward = forward
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        (forward, backward)
    })
}

fn bytes_to_symbol(bytes: &[u8]) -> String {
    let (forward, _) = byte_symbols();
    bytes.iter().map(|&b| forward[b as usize]).collect()
}

fn symbol_to_bytes(symbol: &str) -> Option<Vec<u8>> {
    let (_, backward) = byte_symbols();
    if symbol.is_empty() {
        return None;
    }
    symbol.chars().map(|c| backward.get(&c).copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<RawDocument> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawDocument::new(format!("d{i}"), *t))
            .collect()
    }

    /// Overlapping adjacent-pair counts, computed directly.
    fn brute_force_pair_counts(texts: &[&str]) -> HashMap<(u8, u8), usize> {
        let mut counts = HashMap::new();
        for t in texts {
            for w in t.as_bytes().windows(2) {
                *counts.entry((w[0], w[1])).or_insert(0) += 1;
            }
        }
        counts
    }

    #[test]
    fn most_frequent_pair_is_merged_first() {
        let texts = ["aaab", "aaab"];
        let counts = brute_force_pair_counts(&texts);
        assert_eq!(counts[&(b'a', b'a')], 4);
        assert_eq!(counts[&(b'a', b'b')], 2);

        let vocab = train_bpe(&docs(&texts), 262).unwrap();
        assert_eq!(vocab.len(), 262);
        let rule = vocab.merges()[0];
        assert_eq!(
            (rule.left, rule.right),
            (Vocabulary::byte_id(b'a'), Vocabulary::byte_id(b'a'))
        );
    }

    #[test]
    fn minimum_size_learns_nothing() {
        let vocab = train_bpe(&docs(&["hello hello world"]), 261).unwrap();
        assert!(vocab.merges().is_empty());
        assert_eq!(vocab.len(), BASE_VOCAB_SIZE);
    }

    #[test]
    fn stops_when_no_pair_is_left() {
        let vocab = train_bpe(&docs(&["ab"]), 400).unwrap();
        assert_eq!(vocab.len(), 262);
        assert_eq!(vocab.encode("ab").len(), 1);
    }

    #[test]
    fn only_pair_is_merged() {
        let vocab = train_bpe(&docs(&["xy"]), 262).unwrap();
        let rule = vocab.merges()[0];
        assert_eq!(
            (rule.left, rule.right),
            (Vocabulary::byte_id(b'x'), Vocabulary::byte_id(b'y'))
        );
    }

    #[test]
    fn ties_go_to_smallest_byte_pair() {
        // (b,a) and (a,b) both occur twice; (a,b) sorts first.
        let vocab = train_bpe(&docs(&["ab ba", "ab ba"]), 262).unwrap();
        let rule = vocab.merges()[0];
        let (l, r) = (rule.left, rule.right);
        assert_eq!(vocab.token_bytes(l).unwrap(), b" ");
        assert_eq!(vocab.token_bytes(r).unwrap(), b"b");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            train_bpe(&docs(&["", ""]), 300),
            Err(TextError::EmptyCorpus)
        ));
        assert!(matches!(
            train_bpe(&docs(&["abc"]), 100),
            Err(TextError::VocabTooSmall(100))
        ));
    }

    #[test]
    fn encode_applies_merges_left_to_right() {
        let vocab = train_bpe(&docs(&["aaab", "aaab"]), 262).unwrap();
        let seq = vocab.encode("aaab");
        assert_eq!(seq.len(), 3);
        assert_eq!(vocab.token_bytes(seq[0]).unwrap(), b"aa");
        assert_eq!(vocab.token_bytes(seq[1]).unwrap(), b"a");
        assert_eq!(vocab.token_bytes(seq[2]).unwrap(), b"b");
        assert!(vocab.encode("").is_empty());
    }

    #[test]
    fn decode_drops_specials_and_rejects_bad_ids() {
        let vocab = Vocabulary::byte_level();
        let x = vocab.encode("x");
        let with_specials = [BOS_ID, x[0], EOS_ID];
        assert_eq!(vocab.decode(&with_specials).unwrap(), "x");
        assert_eq!(vocab.decode(&[]).unwrap(), "");
        assert!(matches!(
            vocab.decode(&[9999]),
            Err(TextError::InvalidId { id: 9999, .. })
        ));
    }

    #[test]
    fn specials_occupy_lowest_ids() {
        let vocab = train_bpe(&docs(&["the cat the cat the hat"]), 280).unwrap();
        for s in SpecialToken::ALL {
            assert_eq!(vocab.token(s.id()), Some(&Token::Special(s)));
        }
        for rule in vocab.merges() {
            assert!(!is_special(rule.result));
        }
        for (id, token) in vocab.id_to_token.iter().enumerate() {
            assert_eq!(vocab.id_of(token), Some(id as TokenId));
        }
    }

    #[test]
    fn file_format_round_trips_bit_exactly() {
        let corpus = docs(&["the quick brown fox", "the quick red fox", "ünïcödé text ✓"]);
        let vocab = train_bpe(&corpus, 300).unwrap();
        let mut first = Vec::new();
        vocab.write_to(&mut first).unwrap();
        assert!(std::str::from_utf8(&first).unwrap().starts_with(&format!(
            "STEPBPE v1 {}\n",
            vocab.len()
        )));
        let reloaded = Vocabulary::read_from(first.as_slice()).unwrap();
        assert_eq!(reloaded, vocab);
        let mut second = Vec::new();
        reloaded.write_to(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn malformed_vocab_file_is_rejected() {
        let err = Vocabulary::read_from("BPE v2 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TextError::VocabFormat { line: 1, .. }));
        let no_specials = "STEPBPE v1 261\n";
        assert!(Vocabulary::read_from(no_specials.as_bytes()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = docs(&["abracadabra abracadabra", "cadabra bra ab", "zzz abra"]);
        let a = train_bpe(&corpus, 290).unwrap();
        let b = train_bpe(&corpus, 290).unwrap();
        assert_eq!(a.merges(), b.merges());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(text in "\\PC{0,40}") {
            let corpus = docs(&["the cat sat on the mat", "ñandú über straße ü ü", "日本語 日本 語"]);
            let vocab = train_bpe(&corpus, 320).unwrap();
            let seq = vocab.encode(&text);
            prop_assert!(seq.iter().all(|&id| !is_special(id) && (id as usize) < vocab.len()));
            prop_assert_eq!(vocab.decode(&seq).unwrap(), text);
        }
    }
}
