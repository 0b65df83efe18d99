use serde::{Deserialize, Serialize};

const TERMINATORS: [char; 3] = ['.', '!', '?'];

/// Sentences of one document, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceSplit {
    pub sentences: Vec<String>,
}

impl SentenceSplit {
    pub fn new(sentences: Vec<String>) -> Self {
        Self { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// The normalized document text the split was produced from.
    pub fn joined(&self) -> String {
        self.sentences.join(" ")
    }
}

/// Collapses every run of whitespace to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Splits text into sentences after `.`, `!` or `?` when the terminator is
/// followed by whitespace or the end of the text.
///
/// Abbreviations are not special-cased: `"Dr. Smith left."` yields two
/// sentences.
pub fn segment_sentences(text: &str) -> SentenceSplit {
    let normalized = normalize_whitespace(text);
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = normalized.char_indices().peekable();
    while let Some((idx, c)) = chars.next() {
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let end = idx + c.len_utf8();
        match chars.peek() {
            Some(&(space_idx, ' ')) => {
                sentences.push(normalized[start..end].to_string());
                start = space_idx + 1;
                chars.next();
            }
            None => {
                sentences.push(normalized[start..end].to_string());
                start = end;
            }
            Some(_) => {}
        }
    }
    if start < normalized.len() {
        sentences.push(normalized[start..].to_string());
    }
    SentenceSplit { sentences }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_on_full_stops() {
        let split = segment_sentences("The cat sat. The dog ran.");
        assert_eq!(split.sentences, vec!["The cat sat.", "The dog ran."]);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   \n\t ").is_empty());
    }

    #[test]
    fn abbreviations_are_split() {
        let split = segment_sentences("Dr. Smith left.");
        assert_eq!(split.sentences, vec!["Dr.", "Smith left."]);
    }

    #[test]
    fn exclamation_question_and_trailing_fragment() {
        let split = segment_sentences("  Wow!  Really?\nyes and then");
        assert_eq!(split.sentences, vec!["Wow!", "Really?", "yes and then"]);
    }

    #[test]
    fn terminator_inside_token_does_not_split() {
        let split = segment_sentences("Pi is 3.14 roughly. Ok");
        assert_eq!(split.sentences, vec!["Pi is 3.14 roughly.", "Ok"]);
    }

    proptest! {
        #[test]
        fn rejoined_sentences_equal_normalized_text(text in "[a-zA-Zé. !?\n\t]{0,80}") {
            let split = segment_sentences(&text);
            prop_assert_eq!(split.joined(), normalize_whitespace(&text));
            prop_assert!(split.sentences.iter().all(|s| !s.is_empty()));
        }
    }
}
