//! Human forecasts: logistic mixtures and binned interval probabilities converted to
//! quantiles, and selection of each forecaster's operative revision.

mod histogram;
mod logistic;

pub use histogram::IntervalHistogram;
pub use logistic::{LogisticComponent, LogisticMixture};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Provenance, QuantileForecast, QuantileLevelSet, Target};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElicitationError {
    #[error("a mixture needs between 1 and 5 components, got {0}")]
    ComponentCount(usize),
    #[error("component {0} has a non-positive or non-finite scale")]
    InvalidScale(usize),
    #[error("mixture weights must be non-negative and sum to 1 (sum = {0})")]
    InvalidWeights(f64),
    #[error("bounds must satisfy lower < upper")]
    InvalidBounds,
    #[error("distribution puts no mass inside its bounds")]
    DegenerateDistribution,
    #[error("histogram needs n + 1 ascending breakpoints for n probabilities")]
    InvalidBreakpoints,
    #[error("histogram probabilities must be non-negative and sum to 1 (sum = {0})")]
    InvalidProbabilities(f64),
    #[error("submissions for one forecaster and target must have increasing timestamps")]
    UnorderedStream,
}

/// A submitted predictive distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ElicitedDistribution {
    LogisticMixture(LogisticMixture),
    IntervalHistogram(IntervalHistogram),
}

impl ElicitedDistribution {
    pub fn to_quantiles(&self, levels: &QuantileLevelSet) -> Result<Vec<f64>, ElicitationError> {
        match self {
            ElicitedDistribution::LogisticMixture(m) => logistic_mixture_to_quantiles(m, levels),
            ElicitedDistribution::IntervalHistogram(h) => interval_histogram_to_quantiles(h, levels),
        }
    }

    /// Mixtures come from Metaculus, histograms from Good Judgment Open.
    pub fn provenance(&self) -> Provenance {
        match self {
            ElicitedDistribution::LogisticMixture(_) => Provenance::Metaculus,
            ElicitedDistribution::IntervalHistogram(_) => Provenance::Gjo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub forecaster_id: String,
    pub target: Target,
    pub distribution: ElicitedDistribution,
    pub submitted_at: DateTime<Utc>,
}

impl Submission {
    /// The submission as a quantile forecast at `levels`; the forecaster is the model.
    pub fn to_forecast(&self, levels: &QuantileLevelSet) -> Result<QuantileForecast, ElicitationError> {
        Ok(QuantileForecast {
            model_id: self.forecaster_id.clone(),
            target: self.target.clone(),
            levels: levels.clone(),
            values: self.distribution.to_quantiles(levels)?,
            provenance: self.distribution.provenance(),
        })
    }
}

pub fn logistic_mixture_to_quantiles(
    mixture: &LogisticMixture,
    levels: &QuantileLevelSet,
) -> Result<Vec<f64>, ElicitationError> {
    mixture.quantiles(levels.levels())
}

pub fn interval_histogram_to_quantiles(
    hist: &IntervalHistogram,
    levels: &QuantileLevelSet,
) -> Result<Vec<f64>, ElicitationError> {
    Ok(levels.levels().iter().map(|&p| hist.quantile(p)).collect())
}

/// Checks that timestamps strictly increase along a (forecaster, target) stream.
pub fn check_stream_order(stream: &[Submission]) -> Result<(), ElicitationError> {
    if stream.windows(2).all(|w| w[0].submitted_at < w[1].submitted_at) {
        Ok(())
    } else {
        Err(ElicitationError::UnorderedStream)
    }
}

/// The latest submission made at or before `cutoff`.
pub fn select_cutoff_submission(stream: &[Submission], cutoff: DateTime<Utc>) -> Option<&Submission> {
    stream
        .iter()
        .filter(|s| s.submitted_at <= cutoff)
        .max_by_key(|s| s.submitted_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Variable;
    use chrono::{NaiveDate, TimeZone};

    fn sub(hour: u32) -> Submission {
        Submission {
            forecaster_id: "h1".into(),
            target: Target::new(Variable::IncidentCases, "US", NaiveDate::from_ymd_opt(2021, 1, 23).unwrap(), 2)
                .unwrap(),
            distribution: ElicitedDistribution::IntervalHistogram(
                IntervalHistogram::new(vec![0.0, f64::from(hour) + 1.0], vec![1.0]).unwrap(),
            ),
            submitted_at: Utc.with_ymd_and_hms(2021, 1, 11, hour, 0, 0).unwrap(),
        }
    }

    #[test]
    fn latest_before_cutoff() {
        let stream = vec![sub(1), sub(5), sub(9)];
        let cutoff = Utc.with_ymd_and_hms(2021, 1, 11, 6, 0, 0).unwrap();
        assert_eq!(select_cutoff_submission(&stream, cutoff), Some(&stream[1]));
    }

    #[test]
    fn nothing_before_cutoff() {
        let stream = vec![sub(5)];
        let cutoff = Utc.with_ymd_and_hms(2021, 1, 11, 4, 0, 0).unwrap();
        assert_eq!(select_cutoff_submission(&stream, cutoff), None);
    }

    #[test]
    fn cutoff_is_inclusive() {
        let stream = vec![sub(1), sub(5)];
        let cutoff = Utc.with_ymd_and_hms(2021, 1, 11, 5, 0, 0).unwrap();
        assert_eq!(select_cutoff_submission(&stream, cutoff), Some(&stream[1]));
    }

    #[test]
    fn stream_order() {
        assert!(check_stream_order(&[sub(1), sub(2)]).is_ok());
        assert_eq!(check_stream_order(&[sub(2), sub(2)]), Err(ElicitationError::UnorderedStream));
    }

    #[test]
    fn submission_converts_with_provenance() {
        let f = sub(3).to_forecast(&QuantileLevelSet::case()).unwrap();
        assert_eq!(f.provenance, Provenance::Gjo);
        assert_eq!(f.values[3], 2.0);
    }
}
