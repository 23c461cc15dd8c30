//! Import → train → predict → interpret, and bundle persistence.

mod store;

pub use store::{validate_project_id, BundleStore};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Backlog, CorpusError, ImportMapping, SegmentClassifier, UserStory};
use crate::glossary::{
    self, builtin_easy_words, builtin_stop_words, CorpusStats, EasyWordList, Glossary, GlossaryConfig, GlossaryError,
};
use crate::interpret::{assemble_report, PercentileBands, QualityReport};
use crate::metrics::{score_all, MetricContext, RawScores, ReadabilityProfile};
use crate::models::{
    default_topic_count, fit_topics, ClassifierConfig, ModelError, PatternClassifier, PatternLabel, TfIdfModel,
    TopicModel,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Glossary(#[from] GlossaryError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no bundle stored for project `{0}`")]
    BundleMissing(String),
    #[error("invalid project id `{0}`")]
    InvalidProjectId(String),
    #[error("store I/O error at {path}: {source}")]
    StoreIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt bundle {path}: {reason}")]
    CorruptBundle { path: PathBuf, reason: String },
}

/// Per-project training parameters. Keys mirror the optional
/// `storygauge.toml` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    /// Topic count; `None` picks `max(2, round(sqrt(N / 2)))`.
    pub k: Option<usize>,
    /// Topic association threshold.
    pub thr: f64,
    pub top_n: usize,
    pub min_len: usize,
    pub min_df: usize,
    pub readability: ReadabilityProfile,
    /// Train the fallback pattern classifier when the backlog has enough labels.
    pub pattern_classifier: bool,
    pub mapping: ImportMapping,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            k: None,
            thr: 0.2,
            top_n: 200,
            min_len: 3,
            min_df: 1,
            readability: ReadabilityProfile::Flesch,
            pattern_classifier: true,
            mapping: ImportMapping::default(),
        }
    }
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.thr > 0.0 && self.thr < 1.0) {
            return Err(PipelineError::Config(format!("thr must lie in (0, 1), got {}", self.thr)));
        }
        if self.k.is_some_and(|k| k < 2) {
            return Err(PipelineError::Config("k must be at least 2".into()));
        }
        if self.min_len == 0 || self.min_df == 0 {
            return Err(PipelineError::Config("min_len and min_df must be positive".into()));
        }
        self.mapping.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Every artifact trained from one backlog snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub project_id: String,
    pub bundle_version: u64,
    pub created_at: String,
    pub config: ProjectConfig,
    pub tfidf: TfIdfModel,
    pub topics: TopicModel,
    pub glossary: Glossary,
    pub easy_words: EasyWordList,
    pub stats: CorpusStats,
    pub bands: PercentileBands,
    #[serde(default)]
    pub classifier: Option<PatternClassifier>,
}

impl ModelBundle {
    pub fn context(&self) -> MetricContext<'_> {
        MetricContext {
            tfidf: &self.tfidf,
            topics: &self.topics,
            glossary: &self.glossary,
            easy_words: &self.easy_words,
            stats: &self.stats,
            profile: self.config.readability,
        }
    }

    fn segment_classifier(&self) -> Option<&dyn SegmentClassifier> {
        self.classifier.as_ref().map(|c| c as &dyn SegmentClassifier)
    }

    /// Copy with version and timestamp blanked, for artifact comparisons.
    pub fn artifacts(&self) -> ModelBundle {
        ModelBundle { bundle_version: 0, created_at: String::new(), ..self.clone() }
    }
}

/// A story to score: free text to be cleaned and parsed, or an already
/// structured story.
#[derive(Debug, Clone, PartialEq)]
pub enum StoryInput {
    Text { id: Option<String>, text: String },
    Story(UserStory),
}

impl StoryInput {
    pub fn text(text: impl Into<String>) -> Self {
        StoryInput::Text { id: None, text: text.into() }
    }

    /// Builds a story from structured fields. The body is the cleaned
    /// segments in pattern order, each closed with a full stop if it lacks
    /// terminal punctuation.
    pub fn from_patterns(id: impl Into<String>, fields: &corpus::PatternFields) -> Self {
        let clean = |s: &String| corpus::clean_text(s);
        let mut story = UserStory {
            id: id.into(),
            title: clean(&fields.title),
            persona: clean(&fields.persona),
            what: clean(&fields.what),
            why: clean(&fields.why),
            acceptance_criteria: fields.acceptance_criteria.iter().map(clean).filter(|s| !s.is_empty()).collect(),
            attachments: fields.attachments.iter().map(clean).filter(|s| !s.is_empty()).collect(),
            ..Default::default()
        };
        let cleaned = corpus::PatternFields {
            title: story.title.clone(),
            persona: story.persona.clone(),
            what: story.what.clone(),
            why: story.why.clone(),
            acceptance_criteria: story.acceptance_criteria.clone(),
            attachments: story.attachments.clone(),
        };
        let body: Vec<String> = cleaned
            .segments()
            .into_iter()
            .map(|s| if s.ends_with(['.', '!', '?', ':']) { s.to_owned() } else { format!("{s}.") })
            .collect();
        story.raw_text = body.join(" ");
        story.language = ImportMapping::default().language;
        StoryInput::Story(story)
    }

    /// Whether the input carries no text at all.
    pub fn is_blank(&self) -> bool {
        match self {
            StoryInput::Text { text, .. } => corpus::clean_text(text).is_empty(),
            StoryInput::Story(story) => story.raw_text.trim().is_empty(),
        }
    }
}

pub fn train(backlog: &Backlog, config: &ProjectConfig) -> Result<ModelBundle, PipelineError> {
    train_with_easy_words(backlog, config, builtin_easy_words().clone())
}

pub fn train_with_easy_words(
    backlog: &Backlog,
    config: &ProjectConfig,
    easy_words: EasyWordList,
) -> Result<ModelBundle, PipelineError> {
    config.validate()?;
    if backlog.is_empty() {
        return Err(CorpusError::EmptyBacklog.into());
    }
    let tfidf = TfIdfModel::fit(backlog, config.min_df)?;
    let k = config.k.unwrap_or_else(|| default_topic_count(backlog.len()));
    let topics = fit_topics(&tfidf, backlog, k, config.seed, config.thr)?;
    let glossary_config = GlossaryConfig { top_n: config.top_n, min_len: config.min_len };
    let glossary = glossary::build_domain_glossary(backlog, &tfidf, &glossary_config, builtin_stop_words())?;
    let stats = glossary::compute_corpus_stats_with(backlog, config.readability)?;
    let classifier = if config.pattern_classifier { train_backlog_classifier(backlog, config) } else { None };

    let mut bundle = ModelBundle {
        schema_version: SCHEMA_VERSION,
        project_id: backlog.project_id.clone(),
        bundle_version: 1,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        config: config.clone(),
        tfidf,
        topics,
        glossary,
        easy_words,
        stats,
        bands: PercentileBands::default(),
        classifier,
    };
    let scores = score_backlog(&bundle, backlog);
    bundle.bands = PercentileBands::from_scores(&scores);
    Ok(bundle)
}

/// Raw metric values of every backlog story, in backlog order.
pub fn score_backlog(bundle: &ModelBundle, backlog: &Backlog) -> Vec<RawScores> {
    let ctx = bundle.context();
    backlog.stories.iter().map(|s| score_all(&normalize_story(s), &ctx)).collect()
}

/// Template-parsed segments of the backlog as classifier training data;
/// `None` when too few labels are available.
fn train_backlog_classifier(backlog: &Backlog, config: &ProjectConfig) -> Option<PatternClassifier> {
    let classifier_config = ClassifierConfig { seed: config.seed, ..ClassifierConfig::default() };
    let mut labeled: Vec<(String, PatternLabel)> = Vec::new();
    for story in &backlog.stories {
        let singles = [
            (&story.title, PatternLabel::Title),
            (&story.persona, PatternLabel::Persona),
            (&story.what, PatternLabel::What),
            (&story.why, PatternLabel::Why),
        ];
        for (text, label) in singles {
            if !text.trim().is_empty() {
                labeled.push((text.clone(), label));
            }
        }
        labeled.extend(story.acceptance_criteria.iter().map(|a| (a.clone(), PatternLabel::AcceptanceCriteria)));
        labeled.extend(story.attachments.iter().map(|a| (a.clone(), PatternLabel::Attachments)));
        let fields = corpus::PatternFields {
            title: story.title.clone(),
            persona: story.persona.clone(),
            what: story.what.clone(),
            why: story.why.clone(),
            acceptance_criteria: story.acceptance_criteria.clone(),
            attachments: story.attachments.clone(),
        };
        labeled.extend(
            corpus::unmatched_segments(&story.raw_text, &fields).into_iter().map(|s| (s.to_owned(), PatternLabel::None)),
        );
    }
    let mut counts = std::collections::BTreeMap::new();
    for (_, label) in &labeled {
        *counts.entry(*label).or_insert(0usize) += 1;
    }
    labeled.retain(|(_, l)| counts[l] >= classifier_config.min_examples_per_class);
    PatternClassifier::train(&labeled, &classifier_config).ok()
}

/// Re-cleans the story text; cleaning is idempotent so imported stories are unchanged.
fn normalize_story(story: &UserStory) -> UserStory {
    let mut s = story.clone();
    s.raw_text = corpus::clean_text(&s.raw_text);
    s
}

/// Resolves a scoring input into a parsed story.
pub fn prepare_story(bundle: &ModelBundle, input: &StoryInput) -> UserStory {
    match input {
        StoryInput::Text { id, text } => UserStory::from_text_with(
            id.clone().unwrap_or_default(),
            text,
            &bundle.config.mapping,
            bundle.segment_classifier(),
        ),
        StoryInput::Story(story) => normalize_story(story),
    }
}

pub fn score_raw(bundle: &ModelBundle, input: &StoryInput) -> RawScores {
    score_all(&prepare_story(bundle, input), &bundle.context())
}

pub fn score(bundle: &ModelBundle, input: &StoryInput) -> QualityReport {
    assemble_report(&score_raw(bundle, input), &bundle.bands, bundle.bundle_version)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backlog() -> Backlog {
        let texts = [
            "Als Arzt möchte ich Medikamente suchen, damit ich schneller verschreibe.",
            "Als Arzt möchte ich Rezepte signieren, damit die Apotheke sie erhält.",
            "Als Pflegekraft möchte ich den Stationsplan sehen, damit ich Dienste plane.",
            "Als Pflegekraft möchte ich Dienste tauschen. AK: Tausch wird bestätigt.",
            "Bibliothek aktualisieren.",
            "Als Patient möchte ich Termine buchen, damit ich nicht anrufen muss.",
        ];
        let stories = texts.iter().enumerate().map(|(i, t)| UserStory::from_text(format!("S-{i}"), t)).collect();
        Backlog::new("demo", stories).unwrap()
    }

    #[test]
    fn train_produces_eight_bands() {
        let bundle = train(&backlog(), &ProjectConfig::default()).unwrap();
        assert_eq!(bundle.bands.metrics.len(), 8);
        assert_eq!(bundle.topics.k, 2);
        assert_eq!(bundle.stats.mf, 206.835);
    }

    #[test]
    fn backlog_story_scores_match_training_values() {
        let b = backlog();
        let bundle = train(&b, &ProjectConfig::default()).unwrap();
        let recorded = score_backlog(&bundle, &b);
        for (story, expected) in b.stories.iter().zip(&recorded) {
            assert_eq!(&score_raw(&bundle, &StoryInput::Story(story.clone())), expected);
        }
    }

    #[test]
    fn oov_text_is_independent_and_off_glossary() {
        let bundle = train(&backlog(), &ProjectConfig::default()).unwrap();
        let report = score(&bundle, &StoryInput::text("xylophon zebrastreifen quux"));
        assert_eq!(report.value(crate::metrics::Metric::Independent), Some(1.0));
        assert_eq!(report.value(crate::metrics::Metric::CustomerSpeak), Some(0.0));
    }

    #[test]
    fn config_validation_and_toml() {
        let cfg = ProjectConfig::from_toml("seed = 7\nk = 3\nthr = 0.3\nreadability = \"german\"\n").unwrap();
        assert_eq!((cfg.seed, cfg.k, cfg.thr), (7, Some(3), 0.3));
        assert_eq!(cfg.readability, ReadabilityProfile::German);
        assert!(ProjectConfig::from_toml("thr = 1.5").is_err());
        assert!(ProjectConfig::from_toml("k = 1").is_err());
        assert!(ProjectConfig::from_toml("bogus = 1").is_err());
        let cfg = ProjectConfig::from_toml("[mapping]\nid_column = \"key\"\nbody_column = \"text\"\n").unwrap();
        assert_eq!(cfg.mapping.id_column, "key");
        assert!(!cfg.mapping.what_markers.is_empty());
    }

    #[test]
    fn too_few_documents_for_topics() {
        let b = Backlog::new("p", vec![UserStory::from_text("1", "Eine Story.")]).unwrap();
        let cfg = ProjectConfig { k: Some(2), ..ProjectConfig::default() };
        assert!(matches!(train(&b, &cfg), Err(PipelineError::Model(ModelError::TooFewDocuments { .. }))));
    }
}
