use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, SparseVector, TfIdfModel};
use crate::corpus::Backlog;

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-6;
/// Independent k-means++ initializations; the lowest final objective wins.
const RESTARTS: usize = 30;

/// Topic centroids found by spherical k-means over TF-IDF document vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub k: usize,
    /// Unit-length centroids in TF-IDF space.
    pub centroids: Vec<Vec<f64>>,
    /// Probability at or above which a topic counts as present.
    pub threshold: f64,
    pub seed: u64,
    pub iterations: usize,
}

impl TopicModel {
    /// Index of the most similar centroid; ties go to the lowest index.
    pub fn nearest(&self, vector: &SparseVector) -> usize {
        nearest(&self.centroids, vector).0
    }
}

pub fn default_topic_count(backlog_size: usize) -> usize {
    ((backlog_size as f64 / 2.0).sqrt().round() as usize).max(2)
}

pub fn fit_topics(
    tfidf: &TfIdfModel,
    backlog: &Backlog,
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<TopicModel, ModelError> {
    fit_topics_traced(tfidf, backlog, k, seed, threshold).map(|(model, _)| model)
}

/// Like [`fit_topics`], also returning the clustering objective (sum of
/// cosine distances to the assigned centroid) after every assignment step
/// of the winning restart.
pub fn fit_topics_traced(
    tfidf: &TfIdfModel,
    backlog: &Backlog,
    k: usize,
    seed: u64,
    threshold: f64,
) -> Result<(TopicModel, Vec<f64>), ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidParameter(format!("topic count must be at least 2, got {k}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ModelError::InvalidParameter(format!("topic threshold must lie in (0, 1), got {threshold}")));
    }
    if backlog.len() < k {
        return Err(ModelError::TooFewDocuments { needed: k, found: backlog.len() });
    }
    let points: Vec<SparseVector> = backlog
        .stories
        .iter()
        .map(|s| tfidf.document(&s.id).cloned().unwrap_or_else(|| tfidf.vectorize(&s.raw_text)))
        .filter(|v| !v.is_zero())
        .collect();
    let mut distinct: Vec<&SparseVector> = Vec::new();
    for p in &points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    if distinct.len() < k {
        return Err(ModelError::TooFewDocuments { needed: k, found: distinct.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Refined)> = None;
    for _ in 0..RESTARTS {
        let refined = refine(&points, seed_centroids(&points, k, &mut rng), tfidf.dim());
        let objective: f64 = points.iter().map(|p| 1.0 - nearest(&refined.0, p).1).sum();
        if best.as_ref().is_none_or(|b| objective < b.0 - 1e-12) {
            best = Some((objective, refined));
        }
    }
    let (_, (centroids, trace, iterations)) = best.expect("at least one restart");
    Ok((TopicModel { k, centroids, threshold, seed, iterations }, trace))
}

/// Centroids, objective trace and iteration count.
type Refined = (Vec<Vec<f64>>, Vec<f64>, usize);

fn lloyd(points: &[SparseVector], mut centroids: Vec<Vec<f64>>, dim: usize) -> Refined {
    let k = centroids.len();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut objective = 0.0;
        for p in points {
            let (best, sim) = nearest(&centroids, p);
            objective += 1.0 - sim;
            for &(i, v) in &p.entries {
                sums[best][i] += v;
            }
        }
        trace.push(objective);
        let mut movement: f64 = 0.0;
        for (centroid, sum) in centroids.iter_mut().zip(sums) {
            let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let updated: Vec<f64> = sum.iter().map(|v| v / norm).collect();
            let shift = centroid.iter().zip(&updated).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            movement = movement.max(shift);
            *centroid = updated;
        }
        if movement < TOLERANCE {
            break;
        }
    }
    (centroids, trace, iterations)
}

/// Alternates Lloyd iterations with single-point moves until neither lowers
/// the objective.
fn refine(points: &[SparseVector], centroids: Vec<Vec<f64>>, dim: usize) -> Refined {
    let (mut centroids, mut trace, mut iterations) = lloyd(points, centroids, dim);
    for _ in 0..MAX_ITERATIONS {
        let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        for (p, &l) in points.iter().zip(&labels) {
            for &(i, v) in &p.entries {
                sums[l][i] += v;
            }
        }
        let Some(objective) = first_variation(points, &mut labels, &mut sums) else {
            break;
        };
        trace.push(objective);
        for (centroid, sum) in centroids.iter_mut().zip(&sums) {
            let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                *centroid = sum.iter().map(|v| v / norm).collect();
            }
        }
        let (c, t, i) = lloyd(points, centroids, dim);
        centroids = c;
        trace.extend(t);
        iterations += i;
    }
    (centroids, trace, iterations)
}

/// Moves single points between clusters while a move strictly lowers
/// `n − Σ‖s_c‖`, the objective in terms of cluster sums. Returns the new
/// objective, or `None` when no move helped.
fn first_variation(points: &[SparseVector], labels: &mut [usize], sums: &mut [Vec<f64>]) -> Option<f64> {
    let k = sums.len();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut sq: Vec<f64> = sums.iter().map(|s| s.iter().map(|v| v * v).sum()).collect();
    let mut moved = false;
    loop {
        let mut improved = false;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let from = *label;
            if sizes[from] < 2 {
                continue;
            }
            let pp = p.entries.iter().map(|(_, v)| v * v).sum::<f64>();
            let from_after = (sq[from] - 2.0 * p.dot_dense(&sums[from]) + pp).max(0.0);
            let loss = sq[from].sqrt() - from_after.sqrt();
            let mut best: Option<(usize, f64, f64)> = None;
            for to in (0..k).filter(|&c| c != from) {
                let to_after = sq[to] + 2.0 * p.dot_dense(&sums[to]) + pp;
                let gain = to_after.sqrt() - sq[to].sqrt() - loss;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.1) {
                    best = Some((to, gain, to_after));
                }
            }
            if let Some((to, _, to_after)) = best {
                for &(i, v) in &p.entries {
                    sums[from][i] -= v;
                    sums[to][i] += v;
                }
                sq[from] = sums[from].iter().map(|v| v * v).sum();
                sq[to] = to_after;
                sizes[from] -= 1;
                sizes[to] += 1;
                *label = to;
                improved = true;
                moved = true;
            }
        }
        if !improved {
            break;
        }
    }
    moved.then(|| points.len() as f64 - sq.iter().map(|s| s.sqrt()).sum::<f64>())
}

/// k-means++ seeding with cosine distance.
fn seed_centroids(points: &[SparseVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].to_dense()];
    let mut distance: Vec<f64> = points.iter().map(|p| cosine_distance(&centroids[0], p)).collect();
    while centroids.len() < k {
        let weights: Vec<f64> = distance.iter().map(|d| d * d).collect();
        let total: f64 = weights.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            distance
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map_or(0, |(i, _)| i)
        };
        let centroid = points[chosen].to_dense();
        for (d, p) in distance.iter_mut().zip(points) {
            *d = d.min(cosine_distance(&centroid, p));
        }
        centroids.push(centroid);
    }
    centroids
}

fn cosine_distance(centroid: &[f64], p: &SparseVector) -> f64 {
    (1.0 - p.dot_dense(centroid)).max(0.0)
}

fn nearest(centroids: &[Vec<f64>], p: &SparseVector) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let sim = p.dot_dense(c);
        if sim > best.1 {
            best = (i, sim);
        }
    }
    best
}

/// Per-topic probabilities: positive cosine similarities normalized to sum
/// to one; uniform when the story is similar to no topic at all.
pub fn topic_probabilities(model: &TopicModel, story: &SparseVector) -> Vec<f64> {
    let uniform = vec![1.0 / model.k as f64; model.k];
    let norm = story.norm();
    if norm == 0.0 {
        return uniform;
    }
    let sims: Vec<f64> = model.centroids.iter().map(|c| (story.dot_dense(c) / norm).max(0.0)).collect();
    let total: f64 = sims.iter().sum();
    if total <= 0.0 {
        return uniform;
    }
    sims.into_iter().map(|s| s / total).collect()
}
