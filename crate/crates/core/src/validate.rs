//! Format checks for incoming quantile forecasts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{QuantileForecast, QuantileLevelSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    LevelSetMismatch { expected: usize, found: usize },
    LengthMismatch { levels: usize, values: usize },
    NonMonotone { index: usize },
    Negative { index: usize },
    NonFinite { index: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::LevelSetMismatch { expected, found } => {
                write!(f, "level-set mismatch (expected {expected} levels, found {found})")
            }
            Finding::LengthMismatch { levels, values } => {
                write!(f, "length mismatch ({levels} levels, {values} values)")
            }
            Finding::NonMonotone { index } => write!(f, "non-monotone at index {index}"),
            Finding::Negative { index } => write!(f, "negative count at index {index}"),
            Finding::NonFinite { index } => write!(f, "non-finite value at index {index}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Lists every format problem in `forecast`; an empty report means the forecast is usable.
pub fn validate_quantile_forecast(
    forecast: &QuantileForecast,
    required: &QuantileLevelSet,
) -> ValidationReport {
    let mut findings = Vec::new();
    if !forecast.levels.matches(required) {
        findings.push(Finding::LevelSetMismatch {
            expected: required.len(),
            found: forecast.levels.len(),
        });
    }
    if forecast.values.len() != forecast.levels.len() {
        findings.push(Finding::LengthMismatch {
            levels: forecast.levels.len(),
            values: forecast.values.len(),
        });
    }
    let count = forecast.target.variable.is_count();
    for (i, &v) in forecast.values.iter().enumerate() {
        if !v.is_finite() {
            findings.push(Finding::NonFinite { index: i });
            continue;
        }
        if i > 0 && v < forecast.values[i - 1] {
            findings.push(Finding::NonMonotone { index: i });
        }
        if count && v < 0.0 {
            findings.push(Finding::Negative { index: i });
        }
    }
    ValidationReport { findings }
}
