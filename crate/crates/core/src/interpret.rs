//! Quartile bands that turn raw scores into author guidance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Metric, RawScores};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpretError {
    #[error("cannot compute percentiles of an empty list")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Quantile with linear interpolation between order statistics at
/// position `p·(n − 1)`. `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lower = pos.floor() as usize;
    let upper = pos.ceil() as usize;
    let frac = pos - lower as f64;
    sorted[lower] + (sorted[upper] - sorted[lower]) * frac
}

pub fn compute_percentiles(values: &[f64]) -> Result<Quartiles, InterpretError> {
    if values.is_empty() {
        return Err(InterpretError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quartiles {
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    BelowMid,
    AboveMid,
    High,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::BelowMid => "below_mid",
            Band::AboveMid => "above_mid",
            Band::High => "high",
        }
    }
}

/// Half-open classification; a value on a boundary falls into the upper band.
pub fn band_of(value: f64, q: &Quartiles) -> Band {
    if value >= q.q75 {
        Band::High
    } else if value >= q.q50 {
        Band::AboveMid
    } else if value >= q.q25 {
        Band::BelowMid
    } else {
        Band::Low
    }
}

/// Backlog quartiles per metric, frozen at training time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PercentileBands {
    pub metrics: BTreeMap<Metric, Quartiles>,
}

impl PercentileBands {
    /// Quartiles of every metric over the available values in `scores`;
    /// metrics without any value get no entry.
    pub fn from_scores(scores: &[RawScores]) -> Self {
        let metrics = Metric::ALL
            .into_iter()
            .filter_map(|m| {
                let values: Vec<f64> = scores.iter().filter_map(|s| s.get(m)).collect();
                compute_percentiles(&values).ok().map(|q| (m, q))
            })
            .collect();
        Self { metrics }
    }

    pub fn get(&self, metric: Metric) -> Option<&Quartiles> {
        self.metrics.get(&metric)
    }

    pub fn band(&self, metric: Metric, value: f64) -> Option<Band> {
        self.get(metric).map(|q| band_of(value, q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: Metric,
    pub value: Option<f64>,
    pub percent: Option<f64>,
    pub band: Option<Band>,
    pub tooltip: String,
    pub available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub story_id: String,
    pub metrics: Vec<MetricEntry>,
    pub bundle_version: u64,
}

impl QualityReport {
    pub fn value(&self, metric: Metric) -> Option<f64> {
        self.entry(metric).and_then(|e| e.value)
    }

    pub fn entry(&self, metric: Metric) -> Option<&MetricEntry> {
        self.metrics.iter().find(|e| e.name == metric)
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

pub fn tooltip(metric: Metric, quartiles: Option<&Quartiles>) -> String {
    match quartiles {
        Some(q) => format!(
            "{} Backlog quartiles: lower {}, median {}, upper {}.",
            metric.description(),
            pct(q.q25),
            pct(q.q50),
            pct(q.q75)
        ),
        None => metric.description().to_owned(),
    }
}

pub fn assemble_report(scores: &RawScores, bands: &PercentileBands, bundle_version: u64) -> QualityReport {
    let metrics = scores
        .outcomes
        .iter()
        .map(|o| {
            let quartiles = bands.get(o.metric);
            MetricEntry {
                name: o.metric,
                value: o.value,
                percent: o.value.map(|v| v * 100.0),
                band: o.value.and_then(|v| quartiles.map(|q| band_of(v, q))),
                tooltip: tooltip(o.metric, quartiles),
                available: o.value.is_some(),
            }
        })
        .collect();
    QualityReport { story_id: scores.story_id.clone(), metrics, bundle_version }
}
