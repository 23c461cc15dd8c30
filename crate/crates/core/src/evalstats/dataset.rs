use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::agreement::{weighted_kappa, Weighting, LIKERT_CATEGORIES};
use super::outliers::{iqr_outliers, DEFAULT_IQR_FACTOR};
use super::regression::{standardized_ols, Design, RegressionResult, DEFAULT_ALPHA, DEFAULT_VIF_THRESHOLD};
use super::EvalError;
use crate::metrics::Metric;

/// Expert ratings and metric vectors keyed by story id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingDataset {
    /// story id → expert id → rating
    pub ratings: BTreeMap<String, BTreeMap<String, u8>>,
    /// story id → metric values in canonical order (`None` when unavailable)
    pub metrics: BTreeMap<String, [Option<f64>; 8]>,
}

fn csv_error(e: csv::Error) -> EvalError {
    let line = e.position().map_or(0, |p| p.line());
    EvalError::Csv { line, message: e.to_string() }
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize, EvalError> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
        .ok_or_else(|| EvalError::MissingColumn(names[0].to_owned()))
}

impl RatingDataset {
    pub fn add_rating(&mut self, story_id: &str, expert_id: &str, rating: u8) -> Result<(), EvalError> {
        if !(1..=LIKERT_CATEGORIES as u8).contains(&rating) {
            return Err(EvalError::InvalidRating(rating));
        }
        let slot = self.ratings.entry(story_id.to_owned()).or_default();
        if slot.insert(expert_id.to_owned(), rating).is_some() {
            return Err(EvalError::DuplicateRating { story: story_id.to_owned(), expert: expert_id.to_owned() });
        }
        Ok(())
    }

    /// Reads `story_id, expert_id, rating` rows.
    pub fn read_ratings<R: Read>(&mut self, reader: R) -> Result<usize, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let story = column(&headers, &["story_id", "id"])?;
        let expert = column(&headers, &["expert_id", "expert"])?;
        let rating = column(&headers, &["rating"])?;
        let mut count = 0;
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let value: u8 = record[rating]
                .parse()
                .map_err(|_| EvalError::Csv { line, message: format!("rating `{}` is not an integer 1-5", &record[rating]) })?;
            self.add_rating(&record[story], &record[expert], value)?;
            count += 1;
        }
        Ok(count)
    }

    /// Reads a batch-score CSV: an id column plus one column per metric name.
    /// Extra columns (such as bands) are ignored; empty cells are unavailable.
    pub fn read_scores<R: Read>(&mut self, reader: R) -> Result<usize, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let id = column(&headers, &["id", "story_id"])?;
        let cols = Metric::ALL.map(|m| column(&headers, &[m.name()]));
        let mut indices = [0usize; 8];
        for (slot, col) in indices.iter_mut().zip(cols) {
            *slot = col?;
        }
        let mut count = 0;
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let mut values = [None; 8];
            for (value, &col) in values.iter_mut().zip(&indices) {
                let cell = &record[col];
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| EvalError::Csv { line, message: format!("`{cell}` is not a number") })?;
                *value = Some(v);
            }
            self.metrics.insert(record[id].to_owned(), values);
            count += 1;
        }
        Ok(count)
    }

    pub fn experts(&self) -> BTreeSet<&str> {
        self.ratings.values().flat_map(|m| m.keys().map(String::as_str)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierScope {
    /// Fences computed separately over each expert's ratings.
    #[default]
    PerExpert,
    /// One set of fences over all ratings.
    Pooled,
}

/// (story id, expert id) pairs whose rating falls outside the IQR fences.
/// A group with fewer than four ratings is left untouched.
pub fn rating_outliers(dataset: &RatingDataset, factor: f64, scope: OutlierScope) -> BTreeSet<(String, String)> {
    let mut groups: BTreeMap<Option<&str>, Vec<(&str, &str, f64)>> = BTreeMap::new();
    for (story, by_expert) in &dataset.ratings {
        for (expert, &rating) in by_expert {
            let key = match scope {
                OutlierScope::PerExpert => Some(expert.as_str()),
                OutlierScope::Pooled => None,
            };
            groups.entry(key).or_default().push((story, expert, f64::from(rating)));
        }
    }
    let mut dropped = BTreeSet::new();
    for entries in groups.values() {
        let values: Vec<f64> = entries.iter().map(|e| e.2).collect();
        if let Ok(mask) = iqr_outliers(&values, factor) {
            for (entry, keep) in entries.iter().zip(mask) {
                if !keep {
                    dropped.insert((entry.0.to_owned(), entry.1.to_owned()));
                }
            }
        }
    }
    dropped
}

/// Mean expert rating per story. A story with any dropped rating is
/// excluded entirely.
pub fn mean_ratings(dataset: &RatingDataset, dropped: &BTreeSet<(String, String)>) -> BTreeMap<String, f64> {
    dataset
        .ratings
        .iter()
        .filter(|(_, by_expert)| !by_expert.is_empty())
        .filter(|(story, by_expert)| by_expert.keys().all(|e| !dropped.contains(&((*story).clone(), e.clone()))))
        .map(|(story, by_expert)| {
            let sum: f64 = by_expert.values().map(|&r| f64::from(r)).sum();
            (story.clone(), sum / by_expert.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iqr_factor: f64,
    pub outlier_scope: OutlierScope,
    /// Skip outlier removal entirely.
    pub keep_outliers: bool,
    pub weighting: Weighting,
    pub alpha: f64,
    pub vif_threshold: f64,
    /// Predictors to regress on; all eight when `None`.
    pub predictors: Option<Vec<Metric>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iqr_factor: DEFAULT_IQR_FACTOR,
            outlier_scope: OutlierScope::PerExpert,
            keep_outliers: false,
            weighting: Weighting::Quadratic,
            alpha: DEFAULT_ALPHA,
            vif_threshold: DEFAULT_VIF_THRESHOLD,
            predictors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAgreement {
    pub expert_a: String,
    pub expert_b: String,
    pub shared_stories: usize,
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub stories_rated: usize,
    pub ratings_dropped: usize,
    pub stories_excluded: Vec<String>,
    pub agreement: Vec<PairAgreement>,
    pub regression: RegressionResult,
}

fn pairwise_agreement(dataset: &RatingDataset, weighting: Weighting) -> Vec<PairAgreement> {
    let experts: Vec<&str> = dataset.experts().into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in experts.iter().enumerate() {
        for b in &experts[i + 1..] {
            let (ra, rb): (Vec<u8>, Vec<u8>) = dataset
                .ratings
                .values()
                .filter_map(|m| Some((*m.get(*a)?, *m.get(*b)?)))
                .unzip();
            let result = weighted_kappa(&ra, &rb, weighting);
            out.push(PairAgreement {
                expert_a: (*a).to_owned(),
                expert_b: (*b).to_owned(),
                shared_stories: ra.len(),
                kappa: result.as_ref().ok().copied(),
                error: result.err().map(|e| e.to_string()),
            });
        }
    }
    out
}

/// Outlier removal, inter-rater agreement, and the standardized regression
/// of mean ratings on the metric vector.
pub fn evaluate(dataset: &RatingDataset, options: &EvalOptions) -> Result<EvaluationReport, EvalError> {
    let dropped = if options.keep_outliers {
        BTreeSet::new()
    } else {
        rating_outliers(dataset, options.iqr_factor, options.outlier_scope)
    };
    let means = mean_ratings(dataset, &dropped);
    let predictors = options.predictors.clone().unwrap_or_else(|| Metric::ALL.to_vec());

    let mut excluded: Vec<String> = dataset.ratings.keys().filter(|s| !means.contains_key(*s)).cloned().collect();
    let mut y = Vec::new();
    let mut columns = vec![Vec::new(); predictors.len()];
    for (story, &mean) in &means {
        let row = dataset.metrics.get(story).and_then(|values| {
            predictors.iter().map(|m| values[m.index()]).collect::<Option<Vec<f64>>>()
        });
        match row {
            Some(row) => {
                y.push(mean);
                for (col, v) in columns.iter_mut().zip(row) {
                    col.push(v);
                }
            }
            None => excluded.push(story.clone()),
        }
    }
    excluded.sort();
    if y.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let names = predictors.iter().map(|m| m.name().to_owned()).collect();
    let regression = standardized_ols(&Design::new(names, columns)?, &y, options.alpha, options.vif_threshold)?;
    Ok(EvaluationReport {
        stories_rated: dataset.ratings.len(),
        ratings_dropped: dropped.len(),
        stories_excluded: excluded,
        agreement: pairwise_agreement(dataset, options.weighting),
        regression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[(&str, &str, u8)]) -> RatingDataset {
        let mut d = RatingDataset::default();
        for &(s, e, r) in rows {
            d.add_rating(s, e, r).unwrap();
        }
        d
    }

    #[test]
    fn means() {
        let d = dataset(&[("s1", "a", 3), ("s1", "b", 5), ("s2", "a", 2)]);
        let m = mean_ratings(&d, &BTreeSet::new());
        assert_eq!(m["s1"], 4.0);
        assert_eq!(m["s2"], 2.0);
    }

    #[test]
    fn dropped_rating_excludes_story() {
        let d = dataset(&[("s1", "a", 3), ("s1", "b", 5), ("s2", "a", 2)]);
        let dropped = BTreeSet::from([("s1".to_owned(), "b".to_owned())]);
        let m = mean_ratings(&d, &dropped);
        assert!(!m.contains_key("s1"));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn per_expert_and_pooled_fences() {
        let mut rows = vec![];
        let ids: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
        for (i, id) in ids.iter().enumerate() {
            rows.push((id.as_str(), "a", if i == 7 { 1 } else { 4 }));
            rows.push((id.as_str(), "b", if i % 2 == 0 { 1 } else { 5 }));
        }
        let d = dataset(&rows);
        let per = rating_outliers(&d, 1.5, OutlierScope::PerExpert);
        assert_eq!(per, BTreeSet::from([("s7".to_owned(), "a".to_owned())]));
        let pooled = rating_outliers(&d, 1.5, OutlierScope::Pooled);
        assert!(pooled.is_empty());
    }

    #[test]
    fn reads_csv_inputs() {
        let mut d = RatingDataset::default();
        d.read_ratings("story_id,expert_id,rating\ns1,a,3\ns1,b,4\n".as_bytes()).unwrap();
        let header = format!("id,{}", Metric::ALL.map(|m| m.name()).join(","));
        let scores = format!("{header}\ns1,0.5,0.1,0.2,0.3,0.4,0.5,0.6,\n");
        d.read_scores(scores.as_bytes()).unwrap();
        assert_eq!(d.metrics["s1"][0], Some(0.5));
        assert_eq!(d.metrics["s1"][7], None);
        assert!(matches!(
            d.read_ratings("story_id,expert_id,rating\ns1,a,9\n".as_bytes()),
            Err(EvalError::InvalidRating(9))
        ));
        assert!(matches!(
            RatingDataset::default().read_ratings("story,expert_id,rating\n".as_bytes()),
            Err(EvalError::MissingColumn(_))
        ));
    }
}
