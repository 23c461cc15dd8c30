//! Evaluation statistics: IQR outlier removal, weighted kappa, and
//! standardized multiple regression with VIF diagnostics.

mod agreement;
mod dataset;
mod linalg;
mod outliers;
mod regression;

use thiserror::Error;

pub use agreement::{weighted_kappa, Weighting, LIKERT_CATEGORIES};
pub use dataset::{
    evaluate, mean_ratings, rating_outliers, EvalOptions, EvaluationReport, OutlierScope, PairAgreement, RatingDataset,
};
pub use outliers::{iqr_fences, iqr_outliers, DEFAULT_IQR_FACTOR};
pub use regression::{
    standardized_ols, vif, Design, PredictorStat, RegressionResult, VifEntry, DEFAULT_ALPHA, DEFAULT_VIF_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} values, found {found}")]
    TooFewValues { needed: usize, found: usize },
    #[error("rating {0} is outside 1-5")]
    InvalidRating(u8),
    #[error("a rater used a single category only; kappa is undefined")]
    DegenerateMarginals,
    #[error("design matrix is singular; dependent predictors: {0:?}")]
    SingularDesign(Vec<String>),
    #[error("{rows} rows are too few, need at least {needed}")]
    InsufficientRows { rows: usize, needed: usize },
    #[error("too few usable predictors: {0}")]
    TooFewPredictors(usize),
    #[error("response has zero variance")]
    ConstantResponse,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("CSV error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("story `{story}` rated twice by expert `{expert}`")]
    DuplicateRating { story: String, expert: String },
    #[error("no story has both ratings and metric scores")]
    NoOverlap,
}
