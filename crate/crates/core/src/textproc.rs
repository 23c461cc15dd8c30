//! Tokenization, sentence segmentation and syllable counting.
//!
//! Every metric reads text through this module, so its behaviour is fixed
//! by contract rather than delegated to an NLP toolkit:
//!
//! * tokens are maximal runs of alphanumeric characters; a hyphen between two
//!   alphanumerics joins a compound (`E-Rezept`), a `.` or `,` between two
//!   digits joins a number (`2.5`); everything else is a separator.
//! * sentences end after `.`, `!`, `?` or `:` when followed by the end of the
//!   text or by whitespace and an uppercase letter, unless the word before
//!   the full stop is a known abbreviation.
//! * syllables are vowel groups, with diphthongs and doubled vowels counted
//!   once.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::OnceLock;

const DEFAULT_ABBREVIATIONS: &str = include_str!("../resources/abbreviations.txt");

/// Tokens and sentence structure of one text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    /// Token index ranges, one per non-empty sentence, in order.
    pub sentences: Vec<Range<usize>>,
    /// Lowercased types of all tokens that contain at least one letter.
    pub unique_words: BTreeSet<String>,
}

impl TokenizedText {
    pub fn word_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn sentence_tokens(&self, index: usize) -> &[String] {
        &self.tokens[self.sentences[index].clone()]
    }
}

/// Abbreviations that never end a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abbreviations {
    entries: BTreeSet<String>,
}

impl Abbreviations {
    /// Parses one abbreviation per line; blank lines and `#` comments are ignored.
    pub fn parse(list: &str) -> Self {
        let entries = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { entries }
    }

    pub fn builtin() -> &'static Abbreviations {
        static BUILTIN: OnceLock<Abbreviations> = OnceLock::new();
        BUILTIN.get_or_init(|| Abbreviations::parse(DEFAULT_ABBREVIATIONS))
    }

    pub fn contains(&self, candidate: &str) -> bool {
        self.entries.contains(&candidate.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for Abbreviations {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

/// Splits `text` into word tokens with the built-in abbreviation list.
pub fn tokenize(text: &str) -> TokenizedText {
    tokenize_with(text, Abbreviations::builtin())
}

pub fn tokenize_with(text: &str, abbreviations: &Abbreviations) -> TokenizedText {
    let mut out = TokenizedText::default();
    for sentence in split_sentences_with(text, abbreviations) {
        let start = out.tokens.len();
        for token in word_tokens(sentence) {
            if token.chars().any(char::is_alphabetic) {
                out.unique_words.insert(token.to_lowercase());
            }
            out.tokens.push(token.to_owned());
        }
        if out.tokens.len() > start {
            out.sentences.push(start..out.tokens.len());
        }
    }
    out
}

/// Raw token slices of `text`, without sentence structure.
pub fn word_tokens(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (pos, &(offset, c)) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(offset);
            }
            continue;
        }
        if let Some(begin) = start {
            let prev = chars[pos - 1].1;
            let next = chars.get(pos + 1).map(|&(_, n)| n);
            let joins = match (c, next) {
                ('-', Some(n)) => prev.is_alphanumeric() && n.is_alphanumeric(),
                ('.' | ',', Some(n)) => prev.is_ascii_digit() && n.is_ascii_digit(),
                _ => false,
            };
            if !joins {
                tokens.push(&text[begin..offset]);
                start = None;
            }
        }
    }
    if let Some(begin) = start {
        tokens.push(&text[begin..]);
    }
    tokens
}

/// Splits `text` into sentences with the built-in abbreviation list.
pub fn split_sentences(text: &str) -> Vec<&str> {
    split_sentences_with(text, Abbreviations::builtin())
}

pub fn split_sentences_with<'a>(text: &'a str, abbreviations: &Abbreviations) -> Vec<&'a str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut sentence_start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i].1;
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        let end = chars.get(j + 1).map_or(text.len(), |&(o, _)| o);
        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let at_end = k == chars.len();
        let breaks = at_end || (k > j + 1 && chars[k].1.is_uppercase());
        let guarded = !at_end
            && chars[j].1 == '.'
            && (ends_with_abbreviation(&text[..end], abbreviations)
                || starts_abbreviation(&text[..end], &text[end..], abbreviations));
        if breaks && !guarded {
            push_trimmed(&mut sentences, &text[sentence_start..end]);
            sentence_start = end;
        }
        i = j + 1;
    }
    push_trimmed(&mut sentences, &text[sentence_start..]);
    sentences
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ':')
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, piece: &'a str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece);
    }
}

/// Checks whether `prefix` ends in an abbreviation, either as a single
/// whitespace-free chunk (`z.B.`) or as two chunks (`z. B.`).
fn ends_with_abbreviation(prefix: &str, abbreviations: &Abbreviations) -> bool {
    let mut chunks = prefix.split_whitespace().rev();
    let Some(last) = chunks.next() else {
        return false;
    };
    let last = last.trim_start_matches(|c: char| !c.is_alphanumeric());
    if abbreviations.contains(last) {
        return true;
    }
    match chunks.next() {
        Some(before) => {
            let before = before.trim_start_matches(|c: char| !c.is_alphanumeric());
            abbreviations.contains(&format!("{before} {last}"))
        }
        None => false,
    }
}

/// Checks whether the chunk ending at the full stop opens a two-chunk
/// abbreviation that continues after it (`z.` followed by `B.`).
fn starts_abbreviation(prefix: &str, rest: &str, abbreviations: &Abbreviations) -> bool {
    let (Some(last), Some(next)) = (prefix.split_whitespace().next_back(), rest.split_whitespace().next()) else {
        return false;
    };
    let last = last.trim_start_matches(|c: char| !c.is_alphanumeric());
    abbreviations.contains(&format!("{last} {next}"))
}

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'ä', 'ö', 'ü', 'y'];

/// Two-letter vowel sequences that form a single syllable nucleus.
const NUCLEI: &[[char; 2]] = &[
    ['a', 'u'],
    ['e', 'u'],
    ['ä', 'u'],
    ['e', 'i'],
    ['a', 'i'],
    ['i', 'e'],
    ['e', 'y'],
    ['a', 'y'],
    ['a', 'a'],
    ['e', 'e'],
    ['o', 'o'],
];

/// Counts syllables of one word; words without vowels count as one.
pub fn count_syllables(word: &str) -> usize {
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).collect();
    let is_vowel = |i: usize| VOWELS.contains(&chars[i]) && !(chars[i] == 'u' && i > 0 && chars[i - 1] == 'q');
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_vowel(i) {
            i += 1;
            continue;
        }
        if i + 1 < chars.len() && is_vowel(i + 1) && NUCLEI.contains(&[chars[i], chars[i + 1]]) {
            i += 2;
        } else {
            i += 1;
        }
        count += 1;
    }
    count.max(1)
}
