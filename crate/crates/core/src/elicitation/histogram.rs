use serde::{Deserialize, Serialize};

use super::ElicitationError;

const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Probabilities on a partition of the question range, uniform within each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHistogram", into = "RawHistogram")]
pub struct IntervalHistogram {
    breakpoints: Vec<f64>,
    probabilities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawHistogram {
    breakpoints: Vec<f64>,
    probabilities: Vec<f64>,
}

impl TryFrom<RawHistogram> for IntervalHistogram {
    type Error = ElicitationError;

    fn try_from(raw: RawHistogram) -> Result<Self, Self::Error> {
        Self::new(raw.breakpoints, raw.probabilities)
    }
}

impl From<IntervalHistogram> for RawHistogram {
    fn from(h: IntervalHistogram) -> Self {
        RawHistogram {
            breakpoints: h.breakpoints,
            probabilities: h.probabilities,
        }
    }
}

impl IntervalHistogram {
    pub fn new(breakpoints: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, ElicitationError> {
        if probabilities.is_empty()
            || breakpoints.len() != probabilities.len() + 1
            || breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ElicitationError::InvalidBreakpoints);
        }
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(ElicitationError::InvalidProbabilities(sum));
        }
        Ok(Self {
            breakpoints,
            probabilities,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Piecewise-linear CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut cum = 0.0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            if x < b {
                if x > a {
                    cum += p * (x - a) / (b - a);
                }
                return cum.min(1.0);
            }
            cum += p;
        }
        1.0
    }

    /// Leftmost x whose CDF reaches `level`; flat stretches from empty bins are skipped.
    pub fn quantile(&self, level: f64) -> f64 {
        let mut cum = 0.0;
        let mut last_positive_edge = self.breakpoints[0];
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            if cum + p >= level {
                let frac = ((level - cum) / p).clamp(0.0, 1.0);
                return a + frac * (b - a);
            }
            cum += p;
            last_positive_edge = b;
        }
        // Only reached when rounding leaves the total a hair under `level`.
        last_positive_edge
    }
}
