//! Correlation, regression, binning, censoring, census, and wash-trade
//! analyses over market snapshots.
//!
//! Sign conventions used throughout: rarity ranks are dense with 1 = rarest,
//! so a rare-sells-high market shows a NEGATIVE rank-price correlation;
//! visual distinctiveness is a distance, so the same market shows a POSITIVE
//! distance-price correlation. Rarity quantiles q = rank/population put
//! small q on the rare end. Binning and censoring expect predictors oriented
//! so larger means rarer/more distinctive; negate ranks before passing them.

pub mod bins;
pub mod census;
pub mod correlate;
pub mod fixed_effect;
pub mod wash;

use thiserror::Error;

use crate::embeddings::EmbeddingsError;
use crate::rarity::RarityError;

pub use bins::{
    censored_correlation, quantile_bins, QuantileBin, DEFAULT_BIN_COUNT, DEFAULT_CENSOR_FRACTION,
};
pub use census::{
    correlation_census, sales_count_correlation, select_case_studies,
    variance_explained_comparison, CaseStudyConfig, CaseStudySelection, CategoryFilter, Census,
    CensusRow, CollectionCorrelation, ComparisonReport, CorrelationOutcome, ExclusionReason,
    FilterStep, Predictor, R2Comparison, ResponseKind, SpearmanTieBreak,
};
pub use correlate::{
    mid_ranks, pearson, spearman, univariate_ols, CorrelationResult, Method, OlsFit,
};
pub use fixed_effect::{fixed_effect_fit, rarity_quantiles, FixedEffectFit, FixedEffectMode};
pub use wash::{detect_wash_trades, WashFlag};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {required} points, found {found}")]
    TooFewPoints { required: usize, found: usize },
    #[error("correlation is undefined for constant input")]
    ConstantInput,
    #[error("fraction {0} outside the valid range")]
    BadFraction(f64),
    #[error(transparent)]
    Rarity(#[from] RarityError),
    #[error(transparent)]
    Embeddings(#[from] EmbeddingsError),
}
