use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TfIdfModel};
use crate::corpus::{Pattern, SegmentClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternLabel {
    Title,
    Persona,
    What,
    Why,
    #[serde(rename = "acs")]
    AcceptanceCriteria,
    Attachments,
    None,
}

impl PatternLabel {
    pub const ALL: [PatternLabel; 7] = [
        PatternLabel::Title,
        PatternLabel::Persona,
        PatternLabel::What,
        PatternLabel::Why,
        PatternLabel::AcceptanceCriteria,
        PatternLabel::Attachments,
        PatternLabel::None,
    ];

    pub fn pattern(self) -> Option<Pattern> {
        match self {
            PatternLabel::Title => Some(Pattern::Title),
            PatternLabel::Persona => Some(Pattern::Persona),
            PatternLabel::What => Some(Pattern::What),
            PatternLabel::Why => Some(Pattern::Why),
            PatternLabel::AcceptanceCriteria => Some(Pattern::AcceptanceCriteria),
            PatternLabel::Attachments => Some(Pattern::Attachments),
            PatternLabel::None => None,
        }
    }
}

impl From<Pattern> for PatternLabel {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Title => PatternLabel::Title,
            Pattern::Persona => PatternLabel::Persona,
            Pattern::What => PatternLabel::What,
            Pattern::Why => PatternLabel::Why,
            Pattern::AcceptanceCriteria => PatternLabel::AcceptanceCriteria,
            Pattern::Attachments => PatternLabel::Attachments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub min_examples_per_class: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 0.1, l2: 1e-4, seed: 42, min_examples_per_class: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: PatternLabel,
    pub margin: f64,
}

/// One-vs-rest linear classifier trained with hinge-loss SGD over its own
/// TF-IDF features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternClassifier {
    pub features: TfIdfModel,
    pub classes: Vec<PatternLabel>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl PatternClassifier {
    pub fn train(labeled: &[(String, PatternLabel)], config: &ClassifierConfig) -> Result<Self, ModelError> {
        let mut counts: BTreeMap<PatternLabel, usize> = BTreeMap::new();
        for (_, label) in labeled {
            *counts.entry(*label).or_default() += 1;
        }
        if counts.len() < 2 {
            return Err(ModelError::InsufficientLabels(format!("need at least 2 classes, got {}", counts.len())));
        }
        if let Some((label, n)) = counts.iter().find(|&(_, &n)| n < config.min_examples_per_class) {
            return Err(ModelError::InsufficientLabels(format!(
                "class {label:?} has {n} examples, need {}",
                config.min_examples_per_class
            )));
        }

        let ids: Vec<String> = (0..labeled.len()).map(|i| i.to_string()).collect();
        let docs: Vec<(&str, &str)> = ids.iter().map(String::as_str).zip(labeled.iter().map(|(t, _)| t.as_str())).collect();
        let mut features = TfIdfModel::fit_documents(&docs, 1)?;
        let vectors: Vec<_> = std::mem::take(&mut features.document_vectors).into_iter().map(|d| d.vector).collect();

        let classes = PatternLabel::ALL.to_vec();
        let dim = features.dim();
        let mut weights = vec![vec![0.0; dim]; classes.len()];
        let mut biases = vec![0.0; classes.len()];
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let lr = config.learning_rate;
        let decay = (1.0 - lr * config.l2 * labeled.len() as f64).max(0.0);

        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &idx in &order {
                let x = &vectors[idx];
                for (c, class) in classes.iter().enumerate() {
                    let y = if *class == labeled[idx].1 { 1.0 } else { -1.0 };
                    let score = x.dot_dense(&weights[c]) + biases[c];
                    if y * score < 1.0 {
                        for &(i, v) in &x.entries {
                            weights[c][i] += lr * y * v;
                        }
                        biases[c] += lr * y;
                    }
                }
            }
            for w in &mut weights {
                w.iter_mut().for_each(|v| *v *= decay);
            }
        }
        Ok(Self { features, classes, weights, biases })
    }

    /// Per-class decision values in [`PatternLabel::ALL`] order.
    pub fn scores(&self, text: &str) -> Vec<f64> {
        let x = self.features.vectorize(text);
        self.weights.iter().zip(&self.biases).map(|(w, b)| x.dot_dense(w) + b).collect()
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let scores = self.scores(text);
        let (best, margin) = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        Prediction { label: self.classes[best], margin }
    }
}

impl SegmentClassifier for PatternClassifier {
    fn classify(&self, segment: &str) -> Option<Pattern> {
        let prediction = self.predict(segment);
        if prediction.margin > 0.0 {
            prediction.label.pattern()
        } else {
            None
        }
    }
}
