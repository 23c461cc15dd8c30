//! Domain glossary, basic-vocabulary list and backlog length statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Backlog;
use crate::metrics::ReadabilityProfile;
use crate::models::TfIdfModel;
use crate::textproc;

const DEFAULT_STOP_WORDS: &str = include_str!("../resources/stopwords.txt");
const DEFAULT_EASY_WORDS: &str = include_str!("../resources/easy_words_de.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GlossaryError {
    #[error("backlog is empty")]
    EmptyBacklog,
    #[error("no glossary term survived filtering")]
    EmptyGlossary,
    #[error("resource not found: {0}")]
    MissingResource(String),
    #[error("resource contains no entries: {0}")]
    EmptyResource(String),
}

/// Which selector contributed a glossary term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlossarySource {
    Tfidf,
    Entity,
    Lemma,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Glossary {
    /// Lowercased term to the selectors that produced it.
    pub terms: BTreeMap<String, BTreeSet<GlossarySource>>,
}

impl Glossary {
    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn provenance(&self, term: &str) -> Option<&BTreeSet<GlossarySource>> {
        self.terms.get(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn insert(&mut self, term: impl Into<String>, source: GlossarySource) {
        self.terms.entry(term.into()).or_default().insert(source);
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }
}

/// Lowercased word set read from a one-entry-per-line resource.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordList {
    pub words: BTreeSet<String>,
}

impl WordList {
    /// Parses a list, lowercasing and deduplicating; `#` lines are comments.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Basic vocabulary for the Easy Language metric.
pub type EasyWordList = WordList;

pub fn builtin_stop_words() -> &'static WordList {
    static LIST: OnceLock<WordList> = OnceLock::new();
    LIST.get_or_init(|| WordList::parse(DEFAULT_STOP_WORDS))
}

pub fn builtin_easy_words() -> &'static EasyWordList {
    static LIST: OnceLock<WordList> = OnceLock::new();
    LIST.get_or_init(|| WordList::parse(DEFAULT_EASY_WORDS))
}

pub fn load_easy_words(path: &Path) -> Result<EasyWordList, GlossaryError> {
    let text = std::fs::read_to_string(path).map_err(|_| GlossaryError::MissingResource(path.display().to_string()))?;
    parse_easy_words(&text, &path.display().to_string())
}

pub fn parse_easy_words(text: &str, name: &str) -> Result<EasyWordList, GlossaryError> {
    let list = WordList::parse(text);
    if list.is_empty() {
        return Err(GlossaryError::EmptyResource(name.to_owned()));
    }
    Ok(list)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossaryConfig {
    pub top_n: usize,
    pub min_len: usize,
}

impl Default for GlossaryConfig {
    fn default() -> Self {
        Self { top_n: 200, min_len: 3 }
    }
}

struct TermFilter<'a> {
    min_len: usize,
    stop_words: &'a WordList,
}

impl TermFilter<'_> {
    fn accepts(&self, term: &str) -> bool {
        term.chars().any(char::is_alphabetic) && term.chars().count() >= self.min_len && !self.stop_words.contains(term)
    }
}

/// Builds the domain glossary as the union of three selectors: top TF-IDF
/// terms, capitalization-based entities and frequent lemma groups.
pub fn build_domain_glossary(
    backlog: &Backlog,
    tfidf: &TfIdfModel,
    config: &GlossaryConfig,
    stop_words: &WordList,
) -> Result<Glossary, GlossaryError> {
    if backlog.is_empty() {
        return Err(GlossaryError::EmptyBacklog);
    }
    let filter = TermFilter { min_len: config.min_len, stop_words };
    let mut glossary = Glossary::default();
    for term in select_tfidf_terms(tfidf, config.top_n, &filter) {
        glossary.insert(term, GlossarySource::Tfidf);
    }
    for term in select_entities(backlog, &filter) {
        glossary.insert(term, GlossarySource::Entity);
    }
    for term in select_lemma_groups(backlog, config.top_n, &filter) {
        glossary.insert(term, GlossarySource::Lemma);
    }
    if glossary.is_empty() {
        return Err(GlossaryError::EmptyGlossary);
    }
    Ok(glossary)
}

/// Top `top_n` accepted terms by their largest weight in any document
/// vector; ties broken alphabetically.
fn select_tfidf_terms(tfidf: &TfIdfModel, top_n: usize, filter: &TermFilter) -> Vec<String> {
    let mut best = vec![0.0f64; tfidf.dim()];
    for doc in &tfidf.document_vectors {
        for &(i, v) in &doc.vector.entries {
            best[i] = best[i].max(v);
        }
    }
    let mut ranked: Vec<(&str, f64)> = tfidf
        .terms_by_index()
        .into_iter()
        .zip(best)
        .filter(|&(t, w)| w > 0.0 && filter.accepts(t))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(top_n).map(|(t, _)| t.to_owned()).collect()
}

/// Tokens with an uppercase letter that do not open a sentence, plus
/// all-caps tokens of two or more letters anywhere.
fn select_entities(backlog: &Backlog, filter: &TermFilter) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for story in &backlog.stories {
        let tokenized = textproc::tokenize(&story.raw_text);
        for range in &tokenized.sentences {
            for (pos, token) in tokenized.tokens[range.clone()].iter().enumerate() {
                let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
                let all_caps = letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase());
                let capitalized = pos > 0 && letters.iter().any(|c| c.is_uppercase());
                if all_caps || capitalized {
                    let term = token.to_lowercase();
                    if filter.accepts(&term) {
                        out.insert(term);
                    }
                }
            }
        }
    }
    out
}

const SUFFIXES: &[&str] = &["en", "er", "e", "n", "s"];

/// Strips one German inflection suffix, keeping a stem of at least three characters.
pub fn stem(token: &str) -> &str {
    for suffix in SUFFIXES {
        if let Some(stripped) = token.strip_suffix(suffix) {
            if stripped.chars().count() >= 3 {
                return stripped;
            }
        }
    }
    token
}

/// Surface forms of the `top_n` most frequent stem groups.
fn select_lemma_groups(backlog: &Backlog, top_n: usize, filter: &TermFilter) -> BTreeSet<String> {
    let mut groups: BTreeMap<String, (usize, BTreeSet<String>)> = BTreeMap::new();
    for story in &backlog.stories {
        for token in textproc::word_tokens(&story.raw_text) {
            let term = token.to_lowercase();
            if !filter.accepts(&term) {
                continue;
            }
            let group = groups.entry(stem(&term).to_owned()).or_default();
            group.0 += 1;
            group.1.insert(term);
        }
    }
    let mut ranked: Vec<(&String, &(usize, BTreeSet<String>))> = groups.iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(top_n).flat_map(|(_, (_, forms))| forms.iter().cloned()).collect()
}

/// Word and sentence count statistics of a backlog and the readability normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub words_min: usize,
    pub words_mean: f64,
    pub words_max: usize,
    pub sentences_min: usize,
    pub sentences_mean: f64,
    pub sentences_max: usize,
    /// Largest raw readability value, reached on empty text.
    pub mf: f64,
}

pub fn compute_corpus_stats(backlog: &Backlog) -> Result<CorpusStats, GlossaryError> {
    compute_corpus_stats_with(backlog, ReadabilityProfile::default())
}

pub fn compute_corpus_stats_with(backlog: &Backlog, profile: ReadabilityProfile) -> Result<CorpusStats, GlossaryError> {
    if backlog.is_empty() {
        return Err(GlossaryError::EmptyBacklog);
    }
    let counts: Vec<(usize, usize)> = backlog
        .stories
        .iter()
        .map(|s| {
            let t = textproc::tokenize(&s.raw_text);
            (t.word_count(), t.sentence_count())
        })
        .collect();
    let n = counts.len() as f64;
    let words = counts.iter().map(|c| c.0);
    let sentences = counts.iter().map(|c| c.1);
    Ok(CorpusStats {
        words_min: words.clone().min().unwrap_or(0),
        words_mean: words.clone().sum::<usize>() as f64 / n,
        words_max: words.max().unwrap_or(0),
        sentences_min: sentences.clone().min().unwrap_or(0),
        sentences_mean: sentences.clone().sum::<usize>() as f64 / n,
        sentences_max: sentences.max().unwrap_or(0),
        mf: profile.max_score(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserStory;

    fn backlog(texts: &[&str]) -> Backlog {
        let stories = texts
            .iter()
            .enumerate()
            .map(|(i, t)| UserStory { id: format!("s{i}"), raw_text: t.to_string(), ..Default::default() })
            .collect();
        Backlog::new("p", stories).unwrap()
    }

    fn build(b: &Backlog, top_n: usize) -> Glossary {
        let tfidf = TfIdfModel::fit(b, 1).unwrap();
        let config = GlossaryConfig { top_n, min_len: 3 };
        build_domain_glossary(b, &tfidf, &config, builtin_stop_words()).unwrap()
    }

    #[test]
    fn camel_case_entity_is_found() {
        let b = backlog(&[
            "Der Arzt nutzt das eRezept heute.",
            "Wir senden jedes eRezept sofort.",
            "Ein eRezept wird signiert.",
            "Patienten laden das eRezept herunter.",
            "Die Apotheke liest das eRezept aus.",
        ]);
        let g = build(&b, 1);
        assert!(g.provenance("erezept").unwrap().contains(&GlossarySource::Entity));
    }

    #[test]
    fn stop_words_never_enter() {
        let b = backlog(&["und und und Rezept und", "Und Arzt und und", "UND Pflege und"]);
        let g = build(&b, 200);
        assert!(!g.contains("und"));
        assert!(g.words().all(|t| t.chars().count() >= 3));
        assert!(g.contains("rezept"));
    }

    #[test]
    fn all_caps_abbreviations_are_entities() {
        let b = backlog(&["KIS Schnittstelle bauen", "die Daten im KIS speichern"]);
        let g = build(&b, 0);
        assert!(g.contains("kis"));
        assert!(g.contains("daten"), "mid-sentence capitalized noun");
    }

    #[test]
    fn lemma_groups_collect_surface_forms() {
        let b = backlog(&["rezepte rezepten rezept", "rezepte", "liste listen"]);
        let g = build(&b, 1);
        for form in ["rezept", "rezepte", "rezepten"] {
            assert!(g.provenance(form).is_some_and(|p| p.contains(&GlossarySource::Lemma)), "{form}");
        }
    }

    #[test]
    fn stem_rules() {
        assert_eq!(stem("rezepten"), "rezept");
        assert_eq!(stem("kinder"), "kind");
        assert_eq!(stem("rezepte"), "rezept");
        assert_eq!(stem("arzt"), "arzt");
        assert_eq!(stem("see"), "see");
    }

    #[test]
    fn easy_words_parse_and_errors() {
        let list = parse_easy_words("Haus\nhaus\nBaum\n", "t").unwrap();
        assert_eq!(list.words, ["baum", "haus"].iter().map(|s| s.to_string()).collect());
        assert_eq!(parse_easy_words("\n\n", "t").unwrap_err(), GlossaryError::EmptyResource("t".into()));
        assert!(matches!(load_easy_words(Path::new("/nonexistent/words.txt")), Err(GlossaryError::MissingResource(_))));
        let builtin = builtin_easy_words();
        assert!(builtin.contains("haus") && builtin.contains("arzt"));
    }

    #[test]
    fn corpus_stats_arithmetic() {
        let b = backlog(&["a b c d e", "a b c d e f g h i j", "a b c d e f g h i j k l m. N o."]);
        let s = compute_corpus_stats(&b).unwrap();
        assert_eq!((s.words_min, s.words_max), (5, 15));
        assert_eq!(s.words_mean, 10.0);
        assert_eq!((s.sentences_min, s.sentences_max), (1, 2));
        assert_eq!(s.mf, 206.835);

        let single = compute_corpus_stats(&backlog(&["eins zwei drei"])).unwrap();
        assert_eq!((single.words_min as f64, single.words_mean, single.words_max as f64), (3.0, 3.0, 3.0));
        assert_eq!(compute_corpus_stats(&Backlog::default()).unwrap_err(), GlossaryError::EmptyBacklog);
    }
}
