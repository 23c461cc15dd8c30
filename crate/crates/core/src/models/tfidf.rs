use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ModelError, SparseVector};
use crate::corpus::Backlog;
use crate::textproc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentVector {
    pub id: String,
    pub vector: SparseVector,
}

/// TF-IDF vectorizer with smoothed idf `ln((1 + N) / (1 + df)) + 1`,
/// raw term counts and L2-normalized document vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub document_vectors: Vec<DocumentVector>,
    pub min_df: usize,
}

/// Lowercased tokens used as TF-IDF terms.
pub(crate) fn terms(text: &str) -> Vec<String> {
    textproc::word_tokens(text).into_iter().map(str::to_lowercase).collect()
}

impl TfIdfModel {
    pub fn fit(backlog: &Backlog, min_df: usize) -> Result<Self, ModelError> {
        let docs: Vec<(&str, &str)> = backlog.stories.iter().map(|s| (s.id.as_str(), s.raw_text.as_str())).collect();
        Self::fit_documents(&docs, min_df)
    }

    /// Fits on `(id, text)` pairs.
    pub fn fit_documents(docs: &[(&str, &str)], min_df: usize) -> Result<Self, ModelError> {
        if docs.is_empty() {
            return Err(ModelError::EmptyBacklog);
        }
        let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, text)| terms(text)).collect();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in &tokenized {
            let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for term in unique {
                *df.entry(term).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::new();
        for (term, count) in df.into_iter().filter(|&(_, c)| c >= min_df.max(1)) {
            vocabulary.insert(term.to_owned(), idf.len());
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
        }
        let mut model = Self { vocabulary, idf, document_vectors: Vec::new(), min_df };
        model.document_vectors = docs
            .iter()
            .zip(&tokenized)
            .map(|((id, _), tokens)| DocumentVector { id: id.to_string(), vector: model.vectorize_terms(tokens) })
            .collect();
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Embeds `text`; out-of-vocabulary terms are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        self.vectorize_terms(&terms(text))
    }

    fn vectorize_terms(&self, tokens: &[String]) -> SparseVector {
        let entries = tokens
            .iter()
            .filter_map(|t| self.vocabulary.get(t))
            .map(|&i| (i, self.idf[i]))
            .collect();
        SparseVector::from_entries(self.dim(), entries).normalized()
    }

    pub fn document(&self, id: &str) -> Option<&SparseVector> {
        self.document_vectors.iter().find(|d| d.id == id).map(|d| &d.vector)
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.vocabulary.iter().find(|&(_, &i)| i == index).map(|(t, _)| t.as_str())
    }

    /// Terms in column order.
    pub fn terms_by_index(&self) -> Vec<&str> {
        let mut out = vec![""; self.dim()];
        for (term, &i) in &self.vocabulary {
            out[i] = term;
        }
        out
    }
}
