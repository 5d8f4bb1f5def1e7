//! Weighted quantile averaging and performance-based weight fitting.

mod de;
mod fit;

pub use de::{differential_evolution_minimize, DeConfig, DeOutcome, DeUpdate};
pub use fit::{fit_performance_weights, PerformanceFit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ForecastMatrix;
use crate::types::{Provenance, QuantileForecast, QuantileLevelSet, Target};

/// Tolerance on the sum of simplex weights.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("weight vector is not on the simplex: {0}")]
    NotOnSimplex(String),
    #[error("{weights} weights for {models} models")]
    LengthMismatch { weights: usize, models: usize },
    #[error("forecast from `{model}` for {target} is missing; impute first")]
    MustImputeFirst { model: String, target: Target },
    #[error("optimization dimension must be positive")]
    ZeroDimension,
    #[error("invalid differential evolution configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
}

/// Non-negative model weights summing to one, aligned with matrix rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, EnsembleError> {
        if weights.is_empty() {
            return Err(EnsembleError::NotOnSimplex("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(EnsembleError::NotOnSimplex(format!("entry {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(EnsembleError::NotOnSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn equal(m: usize) -> Result<Self, EnsembleError> {
        if m == 0 {
            return Err(EnsembleError::ZeroDimension);
        }
        Ok(Self(vec![1.0 / m as f64; m]))
    }

    /// Unit vector on model `index`.
    pub fn vertex(m: usize, index: usize) -> Self {
        let mut w = vec![0.0; m];
        w[index] = 1.0;
        Self(w)
    }

    /// Projects a raw vector onto the simplex: negatives clip to zero, then the vector
    /// is divided by its sum. An all-zero vector becomes equal weights.
    pub fn from_raw(raw: &[f64]) -> Result<Self, EnsembleError> {
        if raw.is_empty() {
            return Err(EnsembleError::ZeroDimension);
        }
        let clipped: Vec<f64> = raw
            .iter()
            .map(|&v| if v.is_finite() && v > 0.0 { v } else { 0.0 })
            .collect();
        let sum: f64 = clipped.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Self::equal(raw.len());
        }
        Ok(Self(clipped.iter().map(|v| (v / sum).min(1.0)).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = EnsembleError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(value: WeightVector) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleLabel {
    Computational,
    Human,
    Chimeric,
}

impl EnsembleLabel {
    pub const ALL: [EnsembleLabel; 3] = [
        EnsembleLabel::Computational,
        EnsembleLabel::Human,
        EnsembleLabel::Chimeric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnsembleLabel::Computational => "computational",
            EnsembleLabel::Human => "human",
            EnsembleLabel::Chimeric => "chimeric",
        }
    }

    /// Whether rows of this provenance belong to the ensemble.
    pub fn admits(self, provenance: Provenance) -> bool {
        match self {
            EnsembleLabel::Computational => !provenance.is_human(),
            EnsembleLabel::Human => provenance.is_human(),
            EnsembleLabel::Chimeric => true,
        }
    }
}

impl std::fmt::Display for EnsembleLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnsembleLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown ensemble label `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTarget {
    pub target: Target,
    pub levels: QuantileLevelSet,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub label: EnsembleLabel,
    pub models: Vec<String>,
    pub weights_used: WeightVector,
    pub targets: Vec<EnsembleTarget>,
}

impl EnsembleForecast {
    pub fn get(&self, target: &Target) -> Option<&EnsembleTarget> {
        self.targets.iter().find(|t| &t.target == target)
    }

    /// The ensemble as ordinary forecasts under the given model id.
    pub fn to_forecasts(&self, model_id: &str) -> Vec<QuantileForecast> {
        self.targets
            .iter()
            .map(|t| QuantileForecast {
                model_id: model_id.to_string(),
                target: t.target.clone(),
                levels: t.levels.clone(),
                values: t.values.clone(),
                provenance: Provenance::Computational,
            })
            .collect()
    }
}

/// Weighted sum of one quantile column; zero weights are skipped so a unit weight
/// reproduces its row exactly.
#[inline]
pub(crate) fn combine(weights: &[f64], value: impl Fn(usize) -> f64) -> f64 {
    let mut acc: Option<f64> = None;
    for (m, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let term = w * value(m);
        acc = Some(acc.map_or(term, |a| a + term));
    }
    acc.unwrap_or(0.0)
}

/// Convex combination of the matrix rows, quantile by quantile.
pub fn quantile_average(
    matrix: &ForecastMatrix,
    weights: &WeightVector,
    label: EnsembleLabel,
) -> Result<EnsembleForecast, EnsembleError> {
    if weights.len() != matrix.n_models() {
        return Err(EnsembleError::LengthMismatch {
            weights: weights.len(),
            models: matrix.n_models(),
        });
    }
    let w = weights.as_slice();
    let mut targets = Vec::with_capacity(matrix.n_targets());
    for (t, block) in matrix.blocks().iter().enumerate() {
        if let Some(m) = (0..matrix.n_models()).find(|&m| !matrix.is_present(m, t)) {
            return Err(EnsembleError::MustImputeFirst {
                model: matrix.models()[m].id.clone(),
                target: block.target.clone(),
            });
        }
        let values = (0..block.levels.len())
            .map(|k| combine(w, |m| matrix.block_cells(m, t)[k]))
            .collect();
        targets.push(EnsembleTarget {
            target: block.target.clone(),
            levels: block.levels.clone(),
            values,
        });
    }
    Ok(EnsembleForecast {
        label,
        models: matrix.model_ids().map(String::from).collect(),
        weights_used: weights.clone(),
        targets,
    })
}
