use serde::{Deserialize, Serialize};

use super::ElicitationError;

const MAX_COMPONENTS: usize = 5;
const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticComponent {
    pub location: f64,
    pub scale: f64,
    pub weight: f64,
}

/// Mixture of up to five logistic densities on a closed question range.
///
/// The mixture is truncated to `[lower, upper]` and renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct LogisticMixture {
    components: Vec<LogisticComponent>,
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    components: Vec<LogisticComponent>,
    lower: f64,
    upper: f64,
}

impl TryFrom<RawMixture> for LogisticMixture {
    type Error = ElicitationError;

    fn try_from(raw: RawMixture) -> Result<Self, Self::Error> {
        Self::new(raw.components, raw.lower, raw.upper)
    }
}

impl From<LogisticMixture> for RawMixture {
    fn from(m: LogisticMixture) -> Self {
        RawMixture {
            components: m.components,
            lower: m.lower,
            upper: m.upper,
        }
    }
}

/// P(a < Z <= b) for a standard logistic Z, using whichever tail is more precise.
fn logistic_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        sigmoid(-a) - sigmoid(-b)
    } else if b <= 0.0 {
        sigmoid(b) - sigmoid(a)
    } else {
        1.0 - sigmoid(a) - sigmoid(-b)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticMixture {
    pub fn new(components: Vec<LogisticComponent>, lower: f64, upper: f64) -> Result<Self, ElicitationError> {
        if components.is_empty() || components.len() > MAX_COMPONENTS {
            return Err(ElicitationError::ComponentCount(components.len()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(ElicitationError::InvalidBounds);
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.scale.is_finite() && c.scale > 0.0 && c.location.is_finite()) {
                return Err(ElicitationError::InvalidScale(i));
            }
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0)) || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(ElicitationError::InvalidWeights(sum));
        }
        Ok(Self {
            components,
            lower,
            upper,
        })
    }

    pub fn components(&self) -> &[LogisticComponent] {
        &self.components
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Untruncated mass in `(self.lower, x]`.
    fn mass_from_lower(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                c.weight
                    * logistic_mass((self.lower - c.location) / c.scale, (x - c.location) / c.scale)
            })
            .sum()
    }

    /// CDF of the truncated, renormalized mixture.
    pub fn cdf(&self, x: f64) -> Result<f64, ElicitationError> {
        let total = self.mass_from_lower(self.upper);
        if !(total > 0.0) {
            return Err(ElicitationError::DegenerateDistribution);
        }
        Ok((self.mass_from_lower(x.clamp(self.lower, self.upper)) / total).clamp(0.0, 1.0))
    }

    /// Quantiles by bisection on the truncated CDF.
    ///
    /// Each quantile is the leftmost point (to floating-point resolution) whose CDF
    /// reaches the level, which is well inside `1e-9 * (upper - lower)`.
    pub fn quantiles(&self, levels: &[f64]) -> Result<Vec<f64>, ElicitationError> {
        let total = self.mass_from_lower(self.upper);
        if !(total > 0.0) || !total.is_finite() {
            return Err(ElicitationError::DegenerateDistribution);
        }
        let cdf = |x: f64| self.mass_from_lower(x) / total;
        Ok(levels
            .iter()
            .map(|&p| {
                let (mut lo, mut hi) = (self.lower, self.upper);
                for _ in 0..2000 {
                    let mid = lo + (hi - lo) / 2.0;
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if cdf(mid) >= p {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            })
            .collect())
    }
}
