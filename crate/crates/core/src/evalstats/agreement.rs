use serde::{Deserialize, Serialize};

use super::EvalError;

pub const LIKERT_CATEGORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Linear,
    #[default]
    Quadratic,
}

impl Weighting {
    /// Disagreement weight between categories `i` and `j`.
    pub fn weight(self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j) as f64;
        match self {
            Weighting::Linear => d,
            Weighting::Quadratic => d * d,
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(format!("unknown weighting `{other}`")),
        }
    }
}

/// Weighted kappa of two raters on the 1–5 Likert scale:
/// `1 − Σ w·O / Σ w·E` with `E` the outer product of the marginals.
pub fn weighted_kappa(a: &[u8], b: &[u8], weighting: Weighting) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewValues { needed: 2, found: a.len() });
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&r| !(1..=LIKERT_CATEGORIES as u8).contains(&r)) {
        return Err(EvalError::InvalidRating(bad));
    }
    let k = LIKERT_CATEGORIES;
    let n = a.len() as f64;
    let mut observed = vec![vec![0.0; k]; k];
    let mut row = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (&x, &y) in a.iter().zip(b) {
        let (i, j) = (x as usize - 1, y as usize - 1);
        observed[i][j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }
    let used = |m: &[f64]| m.iter().filter(|&&p| p > 0.0).count();
    if used(&row) < 2 || used(&col) < 2 {
        return Err(EvalError::DegenerateMarginals);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = weighting.weight(i, j);
            num += w * observed[i][j];
            den += w * row[i] * col[j];
        }
    }
    Ok(1.0 - num / den)
}
