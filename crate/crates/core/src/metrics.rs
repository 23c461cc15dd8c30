//! The eight story quality metrics. Every score lies in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Pattern, UserStory};
use crate::glossary::{CorpusStats, EasyWordList, Glossary};
use crate::models::{cosine_similarity, topic_probabilities, SparseVector, TfIdfModel, TopicModel};
use crate::textproc::{self, TokenizedText};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no backlog story left to compare against")]
    EmptyComparisonSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FormatComplete,
    Readable,
    CustomerSpeak,
    Small,
    Independent,
    WordSparse,
    SentenceSparse,
    EasyLanguage,
}

impl Metric {
    /// Canonical order used in every report and export.
    pub const ALL: [Metric; 8] = [
        Metric::FormatComplete,
        Metric::Readable,
        Metric::CustomerSpeak,
        Metric::Small,
        Metric::Independent,
        Metric::WordSparse,
        Metric::SentenceSparse,
        Metric::EasyLanguage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FormatComplete => "format_complete",
            Metric::Readable => "readable",
            Metric::CustomerSpeak => "customer_speak",
            Metric::Small => "small",
            Metric::Independent => "independent",
            Metric::WordSparse => "word_sparse",
            Metric::SentenceSparse => "sentence_sparse",
            Metric::EasyLanguage => "easy_language",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Metric::FormatComplete => "Share of filled template patterns (title, persona, what, why, acceptance criteria, attachments).",
            Metric::Readable => "Reading ease from syllables per word and words per sentence.",
            Metric::CustomerSpeak => "Share of unique words that belong to the project's domain glossary.",
            Metric::Small => "Focus on few backlog topics.",
            Metric::Independent => "Dissimilarity to the other backlog stories.",
            Metric::WordSparse => "Closeness of the word count to the backlog average.",
            Metric::SentenceSparse => "Closeness of the sentence count to the backlog average.",
            Metric::EasyLanguage => "Share of unique words from the basic vocabulary list.",
        }
    }

    pub fn index(self) -> usize {
        Metric::ALL.iter().position(|&m| m == self).unwrap_or_default()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub value: f64,
}

impl MetricScore {
    fn clamped(metric: Metric, value: f64) -> Self {
        let value = if value.is_nan() { 0.0 } else { value.clamp(0.0, 1.0) };
        Self { metric, value }
    }
}

/// Constants of the reading-ease formula `intercept − syllable_weight·asw − sentence_weight·asl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadabilityProfile {
    /// 206.835 − 84.6·asw − 1.015·asl
    #[default]
    Flesch,
    /// 180 − asl − 58.5·asw
    German,
}

impl ReadabilityProfile {
    pub fn constants(self) -> (f64, f64, f64) {
        match self {
            ReadabilityProfile::Flesch => (206.835, 84.6, 1.015),
            ReadabilityProfile::German => (180.0, 58.5, 1.0),
        }
    }

    pub fn raw(self, asw: f64, asl: f64) -> f64 {
        let (intercept, syllables, sentence) = self.constants();
        intercept - syllables * asw - sentence * asl
    }

    /// Raw value of empty text, the normalizer `mf`.
    pub fn max_score(self) -> f64 {
        self.raw(0.0, 0.0)
    }
}

impl FromStr for ReadabilityProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flesch" => Ok(Self::Flesch),
            "german" => Ok(Self::German),
            other => Err(format!("unknown readability profile `{other}`")),
        }
    }
}

/// Average syllables per word and words per sentence; `None` for text without tokens.
pub fn readability_inputs(text: &TokenizedText) -> Option<(f64, f64)> {
    if text.tokens.is_empty() {
        return None;
    }
    let syllables: usize = text.tokens.iter().map(|t| textproc::count_syllables(t)).sum();
    let words = text.tokens.len() as f64;
    Some((syllables as f64 / words, words / text.sentence_count().max(1) as f64))
}

pub fn format_complete(story: &UserStory) -> MetricScore {
    let filled = Pattern::ALL.iter().filter(|&&p| story.has_pattern(p)).count();
    MetricScore::clamped(Metric::FormatComplete, filled as f64 / Pattern::ALL.len() as f64)
}

pub fn readable(story: &UserStory, stats: &CorpusStats, profile: ReadabilityProfile) -> MetricScore {
    readable_tokens(&textproc::tokenize(&story.raw_text), stats, profile)
}

fn readable_tokens(tokens: &TokenizedText, stats: &CorpusStats, profile: ReadabilityProfile) -> MetricScore {
    let raw = match readability_inputs(tokens) {
        Some((asw, asl)) => profile.raw(asw, asl),
        None => stats.mf,
    };
    MetricScore::clamped(Metric::Readable, raw / stats.mf)
}

fn overlap_ratio(metric: Metric, unique: &std::collections::BTreeSet<String>, contains: impl Fn(&str) -> bool) -> MetricScore {
    if unique.is_empty() {
        return MetricScore { metric, value: 0.0 };
    }
    let hits = unique.iter().filter(|w| contains(w)).count();
    MetricScore::clamped(metric, hits as f64 / unique.len() as f64)
}

pub fn customer_speak(story: &UserStory, glossary: &Glossary) -> MetricScore {
    let tokens = textproc::tokenize(&story.raw_text);
    overlap_ratio(Metric::CustomerSpeak, &tokens.unique_words, |w| glossary.contains(w))
}

pub fn easy_language(story: &UserStory, easy_words: &EasyWordList) -> MetricScore {
    let tokens = textproc::tokenize(&story.raw_text);
    overlap_ratio(Metric::EasyLanguage, &tokens.unique_words, |w| easy_words.contains(w))
}

pub fn small(story_vector: &SparseVector, topics: &TopicModel) -> MetricScore {
    let present = topic_probabilities(topics, story_vector).iter().filter(|&&p| p >= topics.threshold).count();
    MetricScore::clamped(Metric::Small, 1.0 - present as f64 / topics.k as f64)
}

/// One minus the mean cosine similarity to every backlog story with a different id.
pub fn independent(story: &UserStory, tfidf: &TfIdfModel) -> Result<MetricScore, MetricError> {
    independent_vector(&story.id, &tfidf.vectorize(&story.raw_text), tfidf)
}

fn independent_vector(id: &str, vector: &SparseVector, tfidf: &TfIdfModel) -> Result<MetricScore, MetricError> {
    let others: Vec<&SparseVector> =
        tfidf.document_vectors.iter().filter(|d| d.id != id).map(|d| &d.vector).collect();
    if others.is_empty() {
        return Err(MetricError::EmptyComparisonSet);
    }
    if vector.is_zero() {
        return Ok(MetricScore { metric: Metric::Independent, value: 1.0 });
    }
    let total: f64 = others.iter().map(|o| cosine_similarity(vector, o).unwrap_or(0.0)).sum();
    Ok(MetricScore::clamped(Metric::Independent, 1.0 - total / others.len() as f64))
}

/// Tent function peaking at the backlog mean: `(n − w) / (m − w)` with
/// `w` the minimum when `n ≤ m` and the maximum otherwise.
pub fn sparse_score(n: f64, min: f64, mean: f64, max: f64) -> f64 {
    let w = if n <= mean { min } else { max };
    if mean == w {
        return if n == mean { 1.0 } else { 0.0 };
    }
    ((n - w) / (mean - w)).clamp(0.0, 1.0)
}

pub fn word_sparse(story: &UserStory, stats: &CorpusStats) -> MetricScore {
    let n = textproc::tokenize(&story.raw_text).word_count();
    word_sparse_count(n, stats)
}

pub fn sentence_sparse(story: &UserStory, stats: &CorpusStats) -> MetricScore {
    let n = textproc::tokenize(&story.raw_text).sentence_count();
    sentence_sparse_count(n, stats)
}

pub fn word_sparse_count(n: usize, stats: &CorpusStats) -> MetricScore {
    let value = sparse_score(n as f64, stats.words_min as f64, stats.words_mean, stats.words_max as f64);
    MetricScore::clamped(Metric::WordSparse, value)
}

pub fn sentence_sparse_count(n: usize, stats: &CorpusStats) -> MetricScore {
    let value = sparse_score(n as f64, stats.sentences_min as f64, stats.sentences_mean, stats.sentences_max as f64);
    MetricScore::clamped(Metric::SentenceSparse, value)
}

/// Trained artifacts needed to score a story.
#[derive(Debug, Clone, Copy)]
pub struct MetricContext<'a> {
    pub tfidf: &'a TfIdfModel,
    pub topics: &'a TopicModel,
    pub glossary: &'a Glossary,
    pub easy_words: &'a EasyWordList,
    pub stats: &'a CorpusStats,
    pub profile: ReadabilityProfile,
}

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub metric: Metric,
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub story_id: String,
    /// One entry per metric in [`Metric::ALL`] order.
    pub outcomes: Vec<MetricOutcome>,
}

impl RawScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.outcomes.iter().find(|o| o.metric == metric).and_then(|o| o.value)
    }
}

/// Computes all eight metrics; a failing metric is reported as unavailable.
pub fn score_all(story: &UserStory, ctx: &MetricContext) -> RawScores {
    let tokens = textproc::tokenize(&story.raw_text);
    let vector = ctx.tfidf.vectorize(&story.raw_text);
    let ok = |s: MetricScore| Ok::<_, MetricError>(s);
    let results = [
        ok(format_complete(story)),
        ok(readable_tokens(&tokens, ctx.stats, ctx.profile)),
        ok(overlap_ratio(Metric::CustomerSpeak, &tokens.unique_words, |w| ctx.glossary.contains(w))),
        ok(small(&vector, ctx.topics)),
        independent_vector(&story.id, &vector, ctx.tfidf),
        ok(word_sparse_count(tokens.word_count(), ctx.stats)),
        ok(sentence_sparse_count(tokens.sentence_count(), ctx.stats)),
        ok(overlap_ratio(Metric::EasyLanguage, &tokens.unique_words, |w| ctx.easy_words.contains(w))),
    ];
    let outcomes = Metric::ALL
        .into_iter()
        .zip(results)
        .map(|(metric, result)| match result {
            Ok(score) => MetricOutcome { metric, value: Some(score.value), error: None },
            Err(e) => MetricOutcome { metric, value: None, error: Some(e.to_string()) },
        })
        .collect();
    RawScores { story_id: story.id.clone(), outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(min: usize, mean: f64, max: usize) -> CorpusStats {
        CorpusStats {
            words_min: min,
            words_mean: mean,
            words_max: max,
            sentences_min: 1,
            sentences_mean: 2.0,
            sentences_max: 4,
            mf: 206.835,
        }
    }

    fn story(text: &str) -> UserStory {
        UserStory { id: "t".into(), raw_text: text.into(), ..Default::default() }
    }

    #[test]
    fn format_complete_fractions() {
        let mut s = story("x");
        assert_eq!(format_complete(&s).value, 0.0);
        s.title = "T".into();
        s.persona = "P".into();
        s.what = "W".into();
        assert_eq!(format_complete(&s).value, 0.5);
        s.why = "Y".into();
        s.acceptance_criteria = vec!["a".into()];
        s.attachments = vec!["b".into()];
        assert_eq!(format_complete(&s).value, 1.0);
        s.why = "   ".into();
        assert!((format_complete(&s).value - 5.0 / 6.0).abs() < 1e-12);
        s.acceptance_criteria = vec![" ".into()];
        assert!((format_complete(&s).value - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn readable_examples() {
        let st = stats(1, 2.0, 3);
        assert_eq!(readable(&story(""), &st, ReadabilityProfile::Flesch).value, 1.0);
        let one = readable(&story("Arzt"), &st, ReadabilityProfile::Flesch).value;
        assert!((one - 121.22 / 206.835).abs() < 1e-12);
        let long = "Anwendungsentwicklungsinfrastrukturkonfigurationsoberfläche ".repeat(30);
        assert_eq!(readable(&story(&long), &st, ReadabilityProfile::Flesch).value, 0.0);
    }

    #[test]
    fn profiles() {
        assert_eq!(ReadabilityProfile::Flesch.max_score(), 206.835);
        assert_eq!(ReadabilityProfile::German.max_score(), 180.0);
        assert_eq!(ReadabilityProfile::German.raw(2.0, 10.0), 180.0 - 10.0 - 117.0);
        assert_eq!("german".parse::<ReadabilityProfile>().unwrap(), ReadabilityProfile::German);
    }

    #[test]
    fn overlap_examples() {
        let mut g = Glossary::default();
        g.insert("arzt", crate::glossary::GlossarySource::Entity);
        g.insert("rezept", crate::glossary::GlossarySource::Tfidf);
        assert_eq!(customer_speak(&story("Arzt sucht"), &g).value, 0.5);
        assert_eq!(customer_speak(&story("Rezept Arzt"), &g).value, 1.0);
        assert_eq!(customer_speak(&story("2.5 !!"), &g).value, 0.0);
        let words = EasyWordList::parse("haus\nbaum\nrot");
        assert_eq!(easy_language(&story("Haus Baum"), &words).value, 1.0);
        assert_eq!(easy_language(&story("Server Cluster"), &words).value, 0.0);
        assert_eq!(easy_language(&story("Haus Baum rot Cluster"), &words).value, 0.75);
    }

    #[test]
    fn sparse_examples() {
        assert_eq!(sparse_score(10.0, 2.0, 10.0, 40.0), 1.0);
        assert_eq!(sparse_score(2.0, 2.0, 10.0, 40.0), 0.0);
        assert_eq!(sparse_score(25.0, 2.0, 10.0, 40.0), 0.5);
        assert_eq!(sparse_score(40.0, 2.0, 10.0, 40.0), 0.0);
        assert_eq!(sparse_score(5.0, 5.0, 5.0, 5.0), 1.0);
        assert_eq!(sparse_score(6.0, 5.0, 5.0, 5.0), 0.0);
        assert_eq!(sparse_score(99.0, 2.0, 10.0, 40.0), 0.0);
        assert_eq!(word_sparse(&story("a b c d e f g h i j"), &stats(2, 10.0, 40)).value, 1.0);
    }

    #[test]
    fn small_counts_present_topics() {
        let topics = TopicModel {
            k: 4,
            centroids: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
            threshold: 0.2,
            seed: 0,
            iterations: 0,
        };
        let one = SparseVector::from_entries(4, vec![(2, 1.0)]);
        assert_eq!(small(&one, &topics).value, 0.75);
        let all = SparseVector::from_entries(4, vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)]);
        assert_eq!(small(&all, &topics).value, 0.0);
        let strict = TopicModel { threshold: 0.9, ..topics };
        assert_eq!(small(&all, &strict).value, 1.0);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
