use super::EvalError;
use crate::interpret::quantile_sorted;

pub const DEFAULT_IQR_FACTOR: f64 = 1.5;

/// Lower and upper Tukey fences `q25 − f·IQR` and `q75 + f·IQR`.
pub fn iqr_fences(values: &[f64], factor: f64) -> Result<(f64, f64), EvalError> {
    if values.len() < 4 {
        return Err(EvalError::TooFewValues { needed: 4, found: values.len() });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&sorted, 0.25);
    let q75 = quantile_sorted(&sorted, 0.75);
    let iqr = q75 - q25;
    Ok((q25 - factor * iqr, q75 + factor * iqr))
}

/// Keep mask: `true` for values inside the fences.
pub fn iqr_outliers(values: &[f64], factor: f64) -> Result<Vec<bool>, EvalError> {
    let (low, high) = iqr_fences(values, factor)?;
    Ok(values.iter().map(|&v| v >= low && v <= high).collect())
}
