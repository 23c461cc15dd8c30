//! Backlog import, text cleaning and Connextra pattern parsing.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("no stories survived the import")]
    EmptyBacklog,
    #[error("invalid import mapping: {0}")]
    InvalidMapping(String),
}

/// The six slots of the Connextra story card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Title,
    Persona,
    What,
    Why,
    AcceptanceCriteria,
    Attachments,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::Title,
        Pattern::Persona,
        Pattern::What,
        Pattern::Why,
        Pattern::AcceptanceCriteria,
        Pattern::Attachments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Title => "title",
            Pattern::Persona => "persona",
            Pattern::What => "what",
            Pattern::Why => "why",
            Pattern::AcceptanceCriteria => "acs",
            Pattern::Attachments => "attachments",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One backlog item.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UserStory {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub persona: String,
    #[serde(default)]
    pub what: String,
    #[serde(default)]
    pub why: String,
    #[serde(default)]
    pub acceptance_criteria: Vec<String>,
    #[serde(default)]
    pub attachments: Vec<String>,
    pub raw_text: String,
    #[serde(default = "default_language")]
    pub language: String,
}

fn default_language() -> String {
    "de".to_owned()
}

impl UserStory {
    /// Cleans `text` and parses its patterns with the default markers.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        Self::from_text_with(id, text, &ImportMapping::default(), None)
    }

    pub fn from_text_with(
        id: impl Into<String>,
        text: &str,
        mapping: &ImportMapping,
        classifier: Option<&dyn SegmentClassifier>,
    ) -> Self {
        let raw_text = clean_text(text);
        let fields = parse_patterns(&raw_text, mapping, classifier);
        let mut story = UserStory {
            id: id.into(),
            raw_text,
            language: mapping.language.clone(),
            ..Default::default()
        };
        story.set_patterns(fields);
        story
    }

    pub fn set_patterns(&mut self, fields: PatternFields) {
        self.title = fields.title;
        self.persona = fields.persona;
        self.what = fields.what;
        self.why = fields.why;
        self.acceptance_criteria = fields.acceptance_criteria;
        self.attachments = fields.attachments;
    }

    /// Whether a pattern carries any non-whitespace text.
    pub fn has_pattern(&self, pattern: Pattern) -> bool {
        let filled = |s: &String| !s.trim().is_empty();
        match pattern {
            Pattern::Title => filled(&self.title),
            Pattern::Persona => filled(&self.persona),
            Pattern::What => filled(&self.what),
            Pattern::Why => filled(&self.why),
            Pattern::AcceptanceCriteria => self.acceptance_criteria.iter().any(filled),
            Pattern::Attachments => self.attachments.iter().any(filled),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Backlog {
    pub project_id: String,
    pub stories: Vec<UserStory>,
}

impl Backlog {
    pub fn new(project_id: impl Into<String>, stories: Vec<UserStory>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for story in &stories {
            if !seen.insert(story.id.as_str()) {
                return Err(CorpusError::InvalidMapping(format!("duplicate story id `{}`", story.id)));
            }
        }
        Ok(Self { project_id: project_id.into(), stories })
    }

    pub fn len(&self) -> usize {
        self.stories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stories.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&UserStory> {
        self.stories.iter().find(|s| s.id == id)
    }
}

/// Pattern fields produced by [`parse_patterns`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternFields {
    pub title: String,
    pub persona: String,
    pub what: String,
    pub why: String,
    pub acceptance_criteria: Vec<String>,
    pub attachments: Vec<String>,
}

impl PatternFields {
    pub fn is_empty(&self) -> bool {
        self.title.is_empty()
            && self.persona.is_empty()
            && self.what.is_empty()
            && self.why.is_empty()
            && self.acceptance_criteria.is_empty()
            && self.attachments.is_empty()
    }

    /// Every non-empty field, in pattern order.
    pub fn segments(&self) -> Vec<&str> {
        let mut out: Vec<&str> = [&self.title, &self.persona, &self.what, &self.why]
            .into_iter()
            .map(String::as_str)
            .collect();
        out.extend(self.acceptance_criteria.iter().map(String::as_str));
        out.extend(self.attachments.iter().map(String::as_str));
        out.retain(|s| !s.is_empty());
        out
    }
}

/// Assigns a pattern to text segments the template did not cover.
pub trait SegmentClassifier {
    /// `None` means the segment belongs to no pattern.
    fn classify(&self, segment: &str) -> Option<Pattern>;
}

/// Column names and localized markers used to read a backlog export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportMapping {
    pub id_column: String,
    /// Optional; when the column is absent titles are parsed from the body.
    pub title_column: Option<String>,
    pub body_column: String,
    pub language: String,
    pub persona_markers: Vec<String>,
    pub what_markers: Vec<String>,
    pub why_markers: Vec<String>,
    pub ac_markers: Vec<String>,
    pub attachment_markers: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for ImportMapping {
    fn default() -> Self {
        Self {
            id_column: "id".into(),
            title_column: Some("title".into()),
            body_column: "description".into(),
            language: "de".into(),
            persona_markers: strings(&["as", "als"]),
            what_markers: strings(&[
                "i want to",
                "i want",
                "i will",
                "i would like to",
                "i'd like to",
                "i need to",
                "i need",
                "i wish to",
                "i should be able to",
                "i can",
                "ich möchte",
                "möchte ich",
                "ich will",
                "will ich",
                "ich muss",
                "muss ich",
                "ich kann",
                "kann ich",
                "ich brauche",
                "brauche ich",
                "ich benötige",
                "benötige ich",
                "würde ich gerne",
                "hätte ich gerne",
            ]),
            why_markers: strings(&["so that", "in order to", "such that", "so dass", "sodass", "damit", ", um"]),
            ac_markers: strings(&["acceptance criteria:", "akzeptanzkriterien:", "ac:", "ak:"]),
            attachment_markers: strings(&["attachments:", "attachment:", "anhänge:", "anhang:", "anlagen:", "anlage:"]),
        }
    }
}

impl ImportMapping {
    /// Column names of a Jira CSV export.
    pub fn jira() -> Self {
        Self {
            id_column: "Issue key".into(),
            title_column: Some("Summary".into()),
            body_column: "Description".into(),
            ..Self::default()
        }
    }

    pub fn with_columns(id: &str, title: Option<&str>, body: &str) -> Self {
        Self {
            id_column: id.into(),
            title_column: title.map(Into::into),
            body_column: body.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.id_column.trim().is_empty() || self.body_column.trim().is_empty() {
            return Err(CorpusError::InvalidMapping("id and body columns must be named".into()));
        }
        if self.id_column == self.body_column {
            return Err(CorpusError::InvalidMapping("id and body columns must be distinct".into()));
        }
        Ok(())
    }
}

/// A data row that was not imported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportOutcome {
    pub backlog: Backlog,
    /// Rows whose body was empty after cleaning.
    pub skipped_count: usize,
    pub rejected: Vec<RejectedRow>,
}

/// Reads a CSV export into a backlog.
///
/// Rows are handled independently: an empty body skips the row, a row with
/// the wrong field count, an empty or duplicate id rejects only that row.
/// The import fails with `MalformedCsv` when the header is unreadable or when
/// every data row is rejected.
pub fn import_csv(bytes: &[u8], mapping: &ImportMapping, project_id: &str) -> Result<ImportOutcome, CorpusError> {
    import_csv_with(bytes, mapping, project_id, None)
}

pub fn import_csv_with(
    bytes: &[u8],
    mapping: &ImportMapping,
    project_id: &str,
    classifier: Option<&dyn SegmentClassifier>,
) -> Result<ImportOutcome, CorpusError> {
    mapping.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedCsv { line: 1, message: e.to_string() })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().trim_start_matches('\u{feff}') == name);
    let id_col = column(&mapping.id_column).ok_or_else(|| CorpusError::MissingColumn(mapping.id_column.clone()))?;
    let body_col =
        column(&mapping.body_column).ok_or_else(|| CorpusError::MissingColumn(mapping.body_column.clone()))?;
    let title_col = mapping.title_column.as_deref().and_then(column);

    let mut stories = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped_count = 0;
    let mut rejected = Vec::new();
    let mut first_error: Option<CorpusError> = None;

    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                first_error.get_or_insert(CorpusError::MalformedCsv { line, message: e.to_string() });
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(id_col).unwrap_or_default().trim().to_owned();
        let body = clean_text(record.get(body_col).unwrap_or_default());
        if body.is_empty() {
            skipped_count += 1;
            continue;
        }
        if id.is_empty() {
            rejected.push(RejectedRow { line, reason: "empty id".into() });
            continue;
        }
        if !seen.insert(id.clone()) {
            rejected.push(RejectedRow { line, reason: format!("duplicate id `{id}`") });
            continue;
        }
        let mut story = UserStory::from_text_with(id, &body, mapping, classifier);
        if let Some(title) = title_col.and_then(|c| record.get(c)).map(clean_text) {
            if !title.is_empty() {
                story.title = title;
            }
        }
        stories.push(story);
    }

    if stories.is_empty() {
        if skipped_count == 0 {
            if let Some(err) = first_error {
                return Err(err);
            }
        }
        return Err(CorpusError::EmptyBacklog);
    }
    Ok(ImportOutcome {
        backlog: Backlog { project_id: project_id.to_owned(), stories },
        skipped_count,
        rejected,
    })
}

/// Writes `backlog` as CSV readable by [`import_csv`] with `mapping`.
pub fn export_csv(backlog: &Backlog, mapping: &ImportMapping) -> Result<Vec<u8>, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    match &mapping.title_column {
        Some(title) => writer.write_record([&mapping.id_column, title, &mapping.body_column])?,
        None => writer.write_record([&mapping.id_column, &mapping.body_column])?,
    }
    for story in &backlog.stories {
        match mapping.title_column {
            Some(_) => writer.write_record([&story.id, &story.title, &story.raw_text])?,
            None => writer.write_record([&story.id, &story.raw_text])?,
        }
    }
    writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^<>]*>").unwrap())
}

fn monospace_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([^{}]*)\}\}").unwrap())
}

fn wiki_macro_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{[A-Za-z]+(:[^{}]*)?\}").unwrap())
}

const ENTITIES: &[(&str, &str)] = &[
    ("&nbsp;", " "),
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", "\""),
    ("&#39;", "'"),
    ("&apos;", "'"),
    ("&amp;", "&"),
];

/// Removes markup and control characters and normalizes whitespace.
pub fn clean_text(raw: &str) -> String {
    let mut current = raw.to_owned();
    loop {
        let next = clean_pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn clean_pass(text: &str) -> String {
    let mut s = text.to_owned();
    for (entity, replacement) in ENTITIES {
        if s.contains(entity) {
            s = s.replace(entity, replacement);
        }
    }
    let s = tag_re().replace_all(&s, " ");
    let s = monospace_re().replace_all(&s, "$1");
    let s = wiki_macro_re().replace_all(&s, " ");
    let filtered: String = s
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() || matches!(c, '\u{200b}' | '\u{200c}' | '\u{200d}' | '\u{feff}' | '`' | '^' | '~' | '\\')
            {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    filtered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte range of a match inside the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    start: usize,
    end: usize,
}

/// Case-insensitive search for `needle` in `hay[from..]`, respecting word
/// boundaries at alphanumeric needle edges. Returns byte offsets into `hay`.
fn find_marker(hay: &str, needle: &str, from: usize) -> Option<Span> {
    let needle: Vec<char> = needle.chars().collect();
    if needle.is_empty() {
        return None;
    }
    for (start, _) in hay[from..].char_indices().map(|(i, c)| (i + from, c)) {
        if needle[0].is_alphanumeric() && hay[..start].chars().next_back().is_some_and(char::is_alphanumeric) {
            continue;
        }
        let mut end = start;
        let mut matched = true;
        let mut hay_chars = hay[start..].chars();
        for &n in &needle {
            match hay_chars.next() {
                Some(h) if lower(h) == lower(n) => end += h.len_utf8(),
                _ => {
                    matched = false;
                    break;
                }
            }
        }
        if !matched {
            continue;
        }
        if needle.last().is_some_and(|c| c.is_alphanumeric()) && hay[end..].chars().next().is_some_and(char::is_alphanumeric)
        {
            continue;
        }
        return Some(Span { start, end });
    }
    None
}

fn lower(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Earliest match of any marker; ties go to the longest marker.
fn find_any(hay: &str, markers: &[String], from: usize, until: usize) -> Option<Span> {
    markers
        .iter()
        .filter_map(|m| find_marker(&hay[..until], m, from))
        .min_by_key(|s| (s.start, std::cmp::Reverse(s.end)))
}

fn find_any_where(hay: &str, markers: &[String], from: usize, until: usize, ok: impl Fn(usize) -> bool) -> Option<Span> {
    let mut cursor = from;
    while cursor < until {
        let span = find_any(hay, markers, cursor, until)?;
        if ok(span.start) {
            return Some(span);
        }
        cursor = span.start + hay[span.start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}

/// Offset of the first sentence end (`.`, `!`, `?` before whitespace or end) at or after `from`.
fn sentence_end(hay: &str, from: usize, until: usize) -> usize {
    let region = &hay[from..until];
    let mut iter = region.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') && iter.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
            return from + i;
        }
    }
    until
}

const CLAUSE_TRIM: &[char] = &[' ', ',', ';', '.', '!', '?', ':', '-', '–', '—', '|'];

/// `hay[start..end]` trimmed of clause punctuation, as a span.
fn trimmed(hay: &str, start: usize, end: usize) -> Option<Span> {
    let piece = &hay[start..end];
    let left = piece.len() - piece.trim_start_matches(CLAUSE_TRIM).len();
    let right = piece.trim_end_matches(CLAUSE_TRIM).len();
    (right > left).then(|| Span { start: start + left, end: start + right })
}

fn allowed_clause_start(hay: &str, pos: usize) -> bool {
    let before = hay[..pos].trim_end();
    before.is_empty() || before.ends_with(['.', '!', '?', ':', ';', '-', '–', '—', '|', ')'])
}

/// Splits an acceptance-criteria section into entries: sentences, `;`
/// separated items and bullet items each become one entry.
fn split_entries(section: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for sentence in textproc::split_sentences(section) {
        for item in sentence.split(';') {
            let mut rest = item;
            loop {
                let bullet = [" - ", " * ", " • "]
                    .iter()
                    .filter_map(|b| rest.find(b).map(|i| (i, b.len())))
                    .min();
                let (head, tail) = match bullet {
                    Some((i, len)) => (&rest[..i], Some(&rest[i + len..])),
                    None => (rest, None),
                };
                let head = head.trim().trim_start_matches(['-', '*', '•']).trim();
                if head.chars().any(char::is_alphanumeric) {
                    out.push(head);
                }
                match tail {
                    Some(t) => rest = t,
                    None => break,
                }
            }
        }
    }
    out
}

fn slice(hay: &str, span: Option<Span>) -> String {
    span.map(|s| hay[s.start..s.end].to_owned()).unwrap_or_default()
}

/// Parses a cleaned story body into its Connextra patterns.
///
/// The template is tried first; body sentences that it does not cover are
/// handed to `classifier` when one is provided. Every returned field is a
/// substring of `body` or empty.
pub fn parse_patterns(body: &str, mapping: &ImportMapping, classifier: Option<&dyn SegmentClassifier>) -> PatternFields {
    let mut fields = PatternFields::default();
    if body.trim().is_empty() {
        return fields;
    }
    let len = body.len();
    let mut covered: Vec<Span> = Vec::new();

    let ac = find_any(body, &mapping.ac_markers, 0, len);
    let attachment = find_any(body, &mapping.attachment_markers, 0, len);
    let story_end = [ac, attachment].iter().flatten().map(|s| s.start).min().unwrap_or(len);

    let persona = find_any_where(body, &mapping.persona_markers, 0, story_end, |p| allowed_clause_start(body, p));
    let what_from = persona.map_or(0, |p| p.end);
    let what = find_any(body, &mapping.what_markers, what_from, story_end);

    let mut clause_start = None;
    let mut clause_end = 0;
    if let Some(p) = persona {
        let persona_end = match what {
            Some(w) => w.start,
            None => {
                let comma = body[p.end..story_end].find(',').map_or(story_end, |i| p.end + i);
                comma.min(sentence_end(body, p.end, story_end))
            }
        };
        fields.persona = slice(body, trimmed(body, p.end, persona_end));
        clause_start = Some(p.start);
        clause_end = persona_end;
    }
    if let Some(w) = what {
        let stop = sentence_end(body, w.end, story_end);
        let why = find_any(body, &mapping.why_markers, w.end, stop);
        let what_end = why.map_or(stop, |y| y.start);
        fields.what = slice(body, trimmed(body, w.end, what_end));
        clause_start.get_or_insert(w.start);
        clause_end = what_end;
        if let Some(y) = why {
            fields.why = slice(body, trimmed(body, y.end, stop));
            clause_end = stop;
        }
    }
    if let Some(start) = clause_start {
        covered.push(Span { start, end: clause_end });
        if let Some(t) = trimmed(body, 0, start) {
            fields.title = slice(body, Some(t));
            covered.push(Span { start: 0, end: start });
        }
    } else if story_end > 0 {
        let end = sentence_end(body, 0, story_end);
        let end = (end + 1).min(story_end);
        if let Some(t) = trimmed(body, 0, end) {
            fields.title = slice(body, Some(t));
            covered.push(Span { start: 0, end });
        }
    }

    if let Some(a) = ac {
        let end = attachment.filter(|t| t.start > a.start).map_or(len, |t| t.start);
        fields.acceptance_criteria = split_entries(&body[a.end..end]).into_iter().map(str::to_owned).collect();
        covered.push(Span { start: a.start, end });
    }
    if let Some(t) = attachment {
        let end = ac.filter(|a| a.start > t.start).map_or(len, |a| a.start);
        if let Some(s) = trimmed(body, t.end, end) {
            fields.attachments.push(slice(body, Some(s)));
        }
        covered.push(Span { start: t.start, end });
    }

    if let Some(classifier) = classifier {
        for segment in uncovered_segments(body, &covered) {
            match classifier.classify(segment) {
                Some(Pattern::Title) if fields.title.is_empty() => fields.title = segment.to_owned(),
                Some(Pattern::Persona) if fields.persona.is_empty() => fields.persona = segment.to_owned(),
                Some(Pattern::What) if fields.what.is_empty() => fields.what = segment.to_owned(),
                Some(Pattern::Why) if fields.why.is_empty() => fields.why = segment.to_owned(),
                Some(Pattern::AcceptanceCriteria) => fields.acceptance_criteria.push(segment.to_owned()),
                Some(Pattern::Attachments) => fields.attachments.push(segment.to_owned()),
                _ => {}
            }
        }
    }
    fields
}

/// Sentences of `body` that do not overlap any covered span.
fn uncovered_segments<'a>(body: &'a str, covered: &[Span]) -> Vec<&'a str> {
    let base = body.as_ptr() as usize;
    textproc::split_sentences(body)
        .into_iter()
        .filter(|s| {
            let start = s.as_ptr() as usize - base;
            let end = start + s.len();
            !covered.iter().any(|c| start < c.end && c.start < end)
        })
        .collect()
}

/// Sentences not captured by the template; the training input for a
/// pattern classifier's "none" class.
pub fn unmatched_segments<'a>(body: &'a str, fields: &PatternFields) -> Vec<&'a str> {
    let segments = fields.segments();
    textproc::split_sentences(body)
        .into_iter()
        .filter(|s| !segments.iter().any(|seg| s.contains(seg) || seg.contains(s)))
        .collect()
}
