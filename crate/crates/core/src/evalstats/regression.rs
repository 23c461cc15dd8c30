use serde::{Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::linalg::{cross, gram, residual_ss, standardize, PivotedCholesky};
use super::EvalError;

/// Relative pivot tolerance below which a predictor counts as a linear
/// combination of the others.
const COLLINEARITY_TOL: f64 = 1e-10;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_VIF_THRESHOLD: f64 = 4.0;

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Named predictor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        if names.len() != columns.len() {
            return Err(EvalError::LengthMismatch { left: names.len(), right: columns.len() });
        }
        if let Some(first) = columns.first() {
            if let Some(bad) = columns.iter().find(|c| c.len() != first.len()) {
                return Err(EvalError::LengthMismatch { left: first.len(), right: bad.len() });
            }
        }
        Ok(Self { names, columns })
    }

    /// Builds a design from column vectors named `x1..xp`.
    pub fn unnamed(columns: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let names = (1..=columns.len()).map(|i| format!("x{i}")).collect();
        Self::new(names, columns)
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifEntry {
    pub name: String,
    #[serde(serialize_with = "finite_or_null")]
    pub value: f64,
    pub infinite: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorStat {
    pub name: String,
    pub beta: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub std_error: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub t: f64,
    pub p_value: f64,
    pub significant: bool,
    pub vif: Option<VifEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub r_squared: f64,
    pub n_used: usize,
    pub df_residual: usize,
    pub alpha: f64,
    pub predictors: Vec<PredictorStat>,
    /// Zero-variance predictors removed before fitting.
    pub dropped: Vec<String>,
}

impl RegressionResult {
    pub fn predictor(&self, name: &str) -> Option<&PredictorStat> {
        self.predictors.iter().find(|p| p.name == name)
    }
}

/// Variance inflation factors `1 / (1 − R²_j)`, each column regressed on
/// all others. Exact collinearity yields an infinite, flagged entry.
pub fn vif(design: &Design, threshold: f64) -> Result<Vec<VifEntry>, EvalError> {
    let p = design.columns.len();
    let n = design.rows();
    if p < 2 {
        return Err(EvalError::TooFewPredictors(p));
    }
    if n <= p {
        return Err(EvalError::InsufficientRows { rows: n, needed: p + 1 });
    }
    let standardized: Vec<Option<Vec<f64>>> = design.columns.iter().map(|c| standardize(c)).collect();
    let entries = (0..p)
        .map(|j| {
            let r2 = match &standardized[j] {
                None => 1.0,
                Some(target) => {
                    let others: Vec<Vec<f64>> = standardized
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != j)
                        .filter_map(|(_, c)| c.clone())
                        .collect();
                    auxiliary_r_squared(&others, target)
                }
            };
            let tolerance = 1.0 - r2;
            let (value, infinite) = if tolerance <= COLLINEARITY_TOL { (f64::INFINITY, true) } else { (1.0 / tolerance, false) };
            VifEntry { name: design.names[j].clone(), value, infinite, flagged: infinite || value > threshold }
        })
        .collect();
    Ok(entries)
}

/// R² of a rank-revealing least-squares fit of `y` on standardized columns.
fn auxiliary_r_squared(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    if columns.is_empty() {
        return 0.0;
    }
    let chol = PivotedCholesky::factor(&gram(columns), COLLINEARITY_TOL);
    let beta = chol.solve(&cross(columns, y));
    let sst: f64 = y.iter().map(|v| v * v).sum();
    (1.0 - residual_ss(columns, &beta, y) / sst).clamp(0.0, 1.0)
}

/// Multiple regression on z-scored predictors and response, returning
/// standardized betas with two-tailed t tests and per-predictor VIF.
pub fn standardized_ols(design: &Design, y: &[f64], alpha: f64, vif_threshold: f64) -> Result<RegressionResult, EvalError> {
    let n = y.len();
    if design.rows() != n {
        return Err(EvalError::LengthMismatch { left: design.rows(), right: n });
    }
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut raw_kept = Vec::new();
    let mut dropped = Vec::new();
    for (name, column) in design.names.iter().zip(&design.columns) {
        match standardize(column) {
            Some(z) => {
                names.push(name.clone());
                columns.push(z);
                raw_kept.push(column.clone());
            }
            None => dropped.push(name.clone()),
        }
    }
    let p = columns.len();
    if p == 0 {
        return Err(EvalError::TooFewPredictors(0));
    }
    if n <= p + 1 {
        return Err(EvalError::InsufficientRows { rows: n, needed: p + 2 });
    }
    let y_z = standardize(y).ok_or(EvalError::ConstantResponse)?;

    let chol = PivotedCholesky::factor(&gram(&columns), COLLINEARITY_TOL);
    if !chol.is_full_rank() {
        let dependent: Vec<String> = chol.perm[chol.rank..].iter().map(|&i| names[i].clone()).collect();
        return Err(EvalError::SingularDesign(dependent));
    }
    let beta = chol.solve(&cross(&columns, &y_z));
    let ssr = residual_ss(&columns, &beta, &y_z);
    let sst: f64 = y_z.iter().map(|v| v * v).sum();
    let r_squared = (1.0 - ssr / sst).clamp(0.0, 1.0);
    let df = n - p - 1;
    let sigma2 = ssr / df as f64;
    let inv_diag = chol.inverse_diagonal();
    let t_dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| EvalError::Numeric(e.to_string()))?;

    let vifs = if p >= 2 { Some(vif(&Design { names: names.clone(), columns: raw_kept }, vif_threshold)?) } else { None };
    let predictors = (0..p)
        .map(|j| {
            let se = (sigma2 * inv_diag[j]).max(0.0).sqrt();
            let t = if se > 0.0 {
                beta[j] / se
            } else if beta[j] == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(beta[j])
            };
            let p_value = if t.is_finite() { (2.0 * (1.0 - t_dist.cdf(t.abs()))).clamp(0.0, 1.0) } else { 0.0 };
            PredictorStat {
                name: names[j].clone(),
                beta: beta[j],
                std_error: se,
                t,
                p_value,
                significant: p_value < alpha,
                vif: vifs.as_ref().map(|v| v[j].clone()),
            }
        })
        .collect();
    Ok(RegressionResult { r_squared, n_used: n, df_residual: df, alpha, predictors, dropped })
}
