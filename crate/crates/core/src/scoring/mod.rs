//! Proper scoring rules for quantile forecasts.
//!
//! The weighted interval score (WIS) combines the absolute error of the median with
//! interval scores of the central prediction intervals implied by a symmetric level set:
//!
//! ```text
//! WIS = (w0 |y - m| + sum_k (alpha_k / 2) IS_alpha_k) / (K + 1/2)
//! IS_alpha = (u - l) + (2 / alpha)(l - y) 1[y < l] + (2 / alpha)(y - u) 1[y > u]
//! ```
//!
//! with `w0 = 1/2`. As the number of equally spaced intervals grows, WIS approaches the
//! CRPS of the underlying distribution; [`crps_numeric`] provides that reference value.

mod crps;
mod ttest;

pub use crps::crps_numeric;
pub use ttest::{paired_t_test_one_sided, student_t_cdf, PairedTestResult};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ForecastMatrix;
use crate::types::{QuantileForecast, QuantileLevelSet, Target, TruthSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("invalid interval: lower bound {lower} exceeds upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("alpha {0} is outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("non-finite input to a score")]
    NonFinite,
    #[error("level set has no 0.5 level")]
    MissingMedian,
    #[error("level {level} has no symmetric partner")]
    Asymmetric { level: f64 },
    #[error("expected {expected} quantile values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("cdf is not non-decreasing near x = {x}")]
    NonMonotoneCdf { x: f64 },
    #[error("invalid integration domain")]
    InvalidDomain,
    #[error("paired samples need equal lengths ({0} vs {1})")]
    UnequalLengths(usize, usize),
    #[error("paired test needs at least two pairs, got {0}")]
    InsufficientData(usize),
    #[error("paired differences have zero variance")]
    DegenerateSample,
}

/// Interval score of the central `(1 - alpha)` interval `[lower, upper]`.
pub fn interval_score(lower: f64, upper: f64, alpha: f64, y: f64) -> Result<f64, ScoringError> {
    if !(lower.is_finite() && upper.is_finite() && y.is_finite()) {
        return Err(ScoringError::NonFinite);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScoringError::InvalidAlpha(alpha));
    }
    if lower > upper {
        return Err(ScoringError::InvalidInterval { lower, upper });
    }
    Ok(interval_score_unchecked(lower, upper, alpha, y))
}

#[inline]
fn interval_score_unchecked(lower: f64, upper: f64, alpha: f64, y: f64) -> f64 {
    let mut score = upper - lower;
    if y < lower {
        score += 2.0 / alpha * (lower - y);
    } else if y > upper {
        score += 2.0 / alpha * (y - upper);
    }
    score
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPair {
    pub lower_index: usize,
    pub upper_index: usize,
    pub alpha: f64,
}

/// Median position plus central intervals, ordered by decreasing alpha (innermost first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralIntervalDecomposition {
    pub median_index: usize,
    pub pairs: Vec<IntervalPair>,
}

impl CentralIntervalDecomposition {
    pub fn new(levels: &QuantileLevelSet) -> Result<Self, ScoringError> {
        let median_index = levels.median_index().ok_or(ScoringError::MissingMedian)?;
        let p = levels.levels();
        let n = p.len();
        if median_index * 2 + 1 != n {
            let level = if median_index * 2 + 1 > n {
                p[0]
            } else {
                p[n - 1]
            };
            return Err(ScoringError::Asymmetric { level });
        }
        let mut pairs = Vec::with_capacity(median_index);
        for lower_index in (0..median_index).rev() {
            let upper_index = n - 1 - lower_index;
            if (p[lower_index] + p[upper_index] - 1.0).abs() > crate::types::LEVEL_TOLERANCE {
                return Err(ScoringError::Asymmetric {
                    level: p[lower_index],
                });
            }
            pairs.push(IntervalPair {
                lower_index,
                upper_index,
                alpha: 2.0 * p[lower_index],
            });
        }
        Ok(Self {
            median_index,
            pairs,
        })
    }

    pub fn n_intervals(&self) -> usize {
        self.pairs.len()
    }

    /// WIS of quantile `values` (in level order) against `y`.
    pub fn wis(&self, values: &[f64], y: f64, config: &ScoreConfig) -> Result<f64, ScoringError> {
        let expected = 2 * self.pairs.len() + 1;
        if values.len() != expected {
            return Err(ScoringError::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        let median = values[self.median_index];
        if !median.is_finite() || !y.is_finite() {
            return Err(ScoringError::NonFinite);
        }
        let mut total = config.w0 * (y - median).abs();
        for pair in &self.pairs {
            let is = interval_score(values[pair.lower_index], values[pair.upper_index], pair.alpha, y)?;
            total += pair.alpha / 2.0 * is;
        }
        Ok(total / (self.pairs.len() as f64 + 0.5))
    }
}

/// Weight of the median term; interval weights are always `alpha / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub w0: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { w0: 0.5 }
    }
}

/// WIS of `values` at `levels`, with the default weights.
pub fn wis(levels: &QuantileLevelSet, values: &[f64], y: f64) -> Result<f64, ScoringError> {
    CentralIntervalDecomposition::new(levels)?.wis(values, y, &ScoreConfig::default())
}

pub fn weighted_interval_score(forecast: &QuantileForecast, y: f64) -> Result<f64, ScoringError> {
    wis(&forecast.levels, &forecast.values, y)
}

/// Per-model, per-target scores; `None` where a forecast or truth is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub models: Vec<String>,
    pub targets: Vec<Target>,
    pub scores: Vec<Vec<Option<f64>>>,
}

impl ScoreMatrix {
    pub fn get(&self, model: usize, target: usize) -> Option<f64> {
        self.scores[model][target]
    }

    /// Mean over the present scores of one model.
    pub fn mean_for_model(&self, model: usize) -> Option<f64> {
        mean_present(self.scores[model].iter().copied())
    }

    /// Mean of each model's present scores.
    pub fn model_means(&self) -> Vec<Option<f64>> {
        (0..self.models.len()).map(|m| self.mean_for_model(m)).collect()
    }
}

pub(crate) fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every present forecast in `matrix` that has a truth.
pub fn score_all(matrix: &ForecastMatrix, truths: &TruthSet) -> Result<ScoreMatrix, ScoringError> {
    let config = ScoreConfig::default();
    let decomps = matrix
        .blocks()
        .iter()
        .map(|b| CentralIntervalDecomposition::new(&b.levels))
        .collect::<Result<Vec<_>, _>>()?;
    let ys: Vec<Option<f64>> = matrix.targets().map(|t| truths.get(t)).collect();
    let scores = (0..matrix.n_models())
        .into_par_iter()
        .map(|m| {
            (0..matrix.n_targets())
                .map(|t| match (matrix.block(m, t), ys[t]) {
                    (Some(values), Some(y)) => decomps[t].wis(values, y, &config).map(Some),
                    _ => Ok(None),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreMatrix {
        models: matrix.model_ids().map(String::from).collect(),
        targets: matrix.targets().cloned().collect(),
        scores,
    })
}
