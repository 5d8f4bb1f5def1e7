//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing probability levels read from different sources.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("horizon must be a positive number of weeks")]
    ZeroHorizon,
    #[error("quantile levels must be non-empty")]
    EmptyLevels,
    #[error("quantile level {0} is outside (0, 1)")]
    LevelOutOfRange(f64),
    #[error("quantile levels are not strictly increasing at index {0}")]
    LevelsNotIncreasing(usize),
    #[error("forecast has {values} values for {levels} levels")]
    LengthMismatch { levels: usize, values: usize },
    #[error("duplicate truth for {0}")]
    DuplicateTruth(TargetKey),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// The forecast quantity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variable {
    IncidentCases,
    IncidentDeaths,
    Custom(String),
}

impl Variable {
    /// Incident counts can never be negative.
    pub fn is_count(&self) -> bool {
        matches!(self, Variable::IncidentCases | Variable::IncidentDeaths)
    }

    /// The hub label used inside target strings such as `2 wk ahead inc case`.
    pub fn hub_label(&self) -> &str {
        match self {
            Variable::IncidentCases => "inc case",
            Variable::IncidentDeaths => "inc death",
            Variable::Custom(label) => label,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.hub_label())
    }
}

impl FromStr for Variable {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        match norm.as_str() {
            "inc case" | "incident cases" | "cases" => Ok(Variable::IncidentCases),
            "inc death" | "incident deaths" | "deaths" => Ok(Variable::IncidentDeaths),
            "" => Err(TypeError::UnknownVariable(s.to_string())),
            _ => Ok(Variable::Custom(s.trim().to_string())),
        }
    }
}

impl From<Variable> for String {
    fn from(v: Variable) -> Self {
        v.to_string()
    }
}

impl TryFrom<String> for Variable {
    type Error = TypeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

/// Identity of a resolvable quantity, independent of when it was forecast.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetKey {
    pub target_end_date: NaiveDate,
    pub variable: Variable,
    pub location: String,
}

impl fmt::Display for TargetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.location, self.variable, self.target_end_date)
    }
}

/// One forecasting question. Field order gives the chronological-then-variable ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Target {
    pub target_end_date: NaiveDate,
    pub variable: Variable,
    pub location: String,
    pub horizon_weeks: u32,
}

impl Target {
    pub fn new(
        variable: Variable,
        location: impl Into<String>,
        target_end_date: NaiveDate,
        horizon_weeks: u32,
    ) -> Result<Self, TypeError> {
        if horizon_weeks == 0 {
            return Err(TypeError::ZeroHorizon);
        }
        Ok(Self {
            target_end_date,
            variable,
            location: location.into(),
            horizon_weeks,
        })
    }

    /// Builds the target a hub forecast made on `forecast_date` refers to.
    pub fn from_forecast_date(
        variable: Variable,
        location: impl Into<String>,
        forecast_date: NaiveDate,
        horizon_weeks: u32,
    ) -> Result<Self, TypeError> {
        if horizon_weeks == 0 {
            return Err(TypeError::ZeroHorizon);
        }
        let end = week_ending_saturday(forecast_date, horizon_weeks);
        Self::new(variable, location, end, horizon_weeks)
    }

    pub fn key(&self) -> TargetKey {
        TargetKey {
            target_end_date: self.target_end_date,
            variable: self.variable.clone(),
            location: self.location.clone(),
        }
    }

    /// True when the end date lies `horizon_weeks` after `forecast_date`, up to week rounding.
    pub fn is_consistent_with(&self, forecast_date: NaiveDate) -> bool {
        let days = (self.target_end_date - forecast_date).num_days();
        let nominal = 7 * i64::from(self.horizon_weeks);
        days > 0 && (days - nominal).abs() <= 6
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} wk ahead {} {} ending {}",
            self.horizon_weeks, self.variable, self.location, self.target_end_date
        )
    }
}

/// Hub rule: forecasts made on Sunday or Monday count the current epiweek as week one.
pub fn week_ending_saturday(forecast_date: NaiveDate, horizon_weeks: u32) -> NaiveDate {
    let dow = forecast_date.weekday().num_days_from_sunday() as i64;
    let this_saturday = forecast_date + Duration::days(6 - dow);
    let first = if matches!(forecast_date.weekday(), Weekday::Sun | Weekday::Mon) {
        this_saturday
    } else {
        this_saturday + Duration::days(7)
    };
    first + Duration::weeks(i64::from(horizon_weeks) - 1)
}

/// Ordered probability levels at which a forecast is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileLevelSet(Vec<f64>);

impl QuantileLevelSet {
    /// Levels must lie in (0, 1) and be strictly increasing.
    pub fn new(levels: Vec<f64>) -> Result<Self, TypeError> {
        if levels.is_empty() {
            return Err(TypeError::EmptyLevels);
        }
        for (i, &p) in levels.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(TypeError::LevelOutOfRange(p));
            }
            if i > 0 && p <= levels[i - 1] {
                return Err(TypeError::LevelsNotIncreasing(i));
            }
        }
        Ok(Self(levels))
    }

    /// The seven levels used for incident-case forecasts.
    pub fn case() -> Self {
        Self(vec![0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975])
    }

    /// The twenty-three levels used for incident-death forecasts.
    pub fn death() -> Self {
        let mut levels = vec![0.01, 0.025];
        levels.extend((1..=19).map(|i| f64::from(i) / 20.0));
        levels.extend([0.975, 0.99]);
        Self(levels)
    }

    /// Required level set for hub variables; custom variables have none.
    pub fn for_variable(variable: &Variable) -> Option<Self> {
        match variable {
            Variable::IncidentCases => Some(Self::case()),
            Variable::IncidentDeaths => Some(Self::death()),
            Variable::Custom(_) => None,
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Element-wise equality up to [`LEVEL_TOLERANCE`].
    pub fn matches(&self, other: &QuantileLevelSet) -> bool {
        self.len() == other.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| (a - b).abs() <= LEVEL_TOLERANCE)
    }

    pub fn median_index(&self) -> Option<usize> {
        self.0.iter().position(|p| (p - 0.5).abs() <= LEVEL_TOLERANCE)
    }

    /// Every level p has a partner 1 - p and the median is present.
    pub fn is_symmetric(&self) -> bool {
        let n = self.0.len();
        n % 2 == 1
            && self.median_index() == Some(n / 2)
            && (0..n / 2).all(|i| (self.0[i] + self.0[n - 1 - i] - 1.0).abs() <= LEVEL_TOLERANCE)
    }
}

impl TryFrom<Vec<f64>> for QuantileLevelSet {
    type Error = TypeError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<QuantileLevelSet> for Vec<f64> {
    fn from(value: QuantileLevelSet) -> Self {
        value.0
    }
}

/// Where a forecast row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Computational,
    Metaculus,
    Gjo,
}

impl Provenance {
    pub fn is_human(self) -> bool {
        !matches!(self, Provenance::Computational)
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Computational => "computational",
            Provenance::Metaculus => "metaculus",
            Provenance::Gjo => "gjo",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "computational" | "hub" => Ok(Provenance::Computational),
            "metaculus" => Ok(Provenance::Metaculus),
            "gjo" | "good judgment open" => Ok(Provenance::Gjo),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

/// One model's quantile forecast for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub model_id: String,
    pub target: Target,
    pub levels: QuantileLevelSet,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl QuantileForecast {
    pub fn new(
        model_id: impl Into<String>,
        target: Target,
        levels: QuantileLevelSet,
        values: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self, TypeError> {
        if levels.len() != values.len() {
            return Err(TypeError::LengthMismatch {
                levels: levels.len(),
                values: values.len(),
            });
        }
        Ok(Self {
            model_id: model_id.into(),
            target,
            levels,
            values,
            provenance,
        })
    }

    pub fn median(&self) -> Option<f64> {
        self.levels.median_index().map(|i| self.values[i])
    }
}

/// Realized values, at most one per target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    records: BTreeMap<TargetKey, f64>,
}

impl TruthSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: TargetKey, value: f64) -> Result<(), TypeError> {
        if self.records.contains_key(&key) {
            return Err(TypeError::DuplicateTruth(key));
        }
        self.records.insert(key, value);
        Ok(())
    }

    pub fn get(&self, target: &Target) -> Option<f64> {
        self.records.get(&target.key()).copied()
    }

    pub fn get_key(&self, key: &TargetKey) -> Option<f64> {
        self.records.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TargetKey, f64)> {
        self.records.iter().map(|(k, v)| (k, *v))
    }

    /// Keeps only the records accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&TargetKey) -> bool) -> TruthSet {
        TruthSet {
            records: self
                .records
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

impl FromIterator<(TargetKey, f64)> for TruthSet {
    /// Later duplicates are ignored; use [`TruthSet::insert`] to detect them.
    fn from_iter<I: IntoIterator<Item = (TargetKey, f64)>>(iter: I) -> Self {
        let mut records = BTreeMap::new();
        for (k, v) in iter {
            records.entry(k).or_insert(v);
        }
        TruthSet { records }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn death_levels_are_the_hub_set() {
        let levels = QuantileLevelSet::death();
        assert_eq!(levels.len(), 23);
        assert!(levels.is_symmetric());
        assert_eq!(levels.levels()[3], 0.1);
        assert_eq!(levels.levels()[5], 0.2);
        assert_eq!(levels.levels()[11], 0.5);
        assert!(QuantileLevelSet::case().is_symmetric());
    }

    #[test]
    fn level_set_rejects_bad_input() {
        assert!(QuantileLevelSet::new(vec![]).is_err());
        assert!(QuantileLevelSet::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileLevelSet::new(vec![0.5, 0.5]).is_err());
        let asym = QuantileLevelSet::new(vec![0.25, 0.5]).unwrap();
        assert!(!asym.is_symmetric());
    }

    #[test]
    fn hub_week_rule() {
        // Monday forecast: two weeks ahead is the second Saturday.
        assert_eq!(week_ending_saturday(d("2021-01-11"), 2), d("2021-01-23"));
        assert_eq!(week_ending_saturday(d("2021-01-10"), 1), d("2021-01-16"));
        assert_eq!(week_ending_saturday(d("2021-01-12"), 1), d("2021-01-23"));
        let t = Target::from_forecast_date(Variable::IncidentCases, "US", d("2021-01-11"), 2).unwrap();
        assert!(t.is_consistent_with(d("2021-01-11")));
        assert!(!t.is_consistent_with(d("2020-12-01")));
    }

    #[test]
    fn targets_sort_by_date_then_variable() {
        let a = Target::new(Variable::IncidentDeaths, "US", d("2021-01-16"), 1).unwrap();
        let b = Target::new(Variable::IncidentCases, "US", d("2021-01-23"), 2).unwrap();
        let c = Target::new(Variable::IncidentCases, "US", d("2021-01-16"), 1).unwrap();
        let mut v = vec![b.clone(), a.clone(), c.clone()];
        v.sort();
        assert_eq!(v, vec![c, a, b]);
    }

    #[test]
    fn variable_parsing() {
        assert_eq!("inc case".parse::<Variable>().unwrap(), Variable::IncidentCases);
        assert_eq!("incident-deaths".parse::<Variable>().unwrap(), Variable::IncidentDeaths);
        assert_eq!(
            "cum death".parse::<Variable>().unwrap(),
            Variable::Custom("cum death".into())
        );
    }

    #[test]
    fn truth_set_rejects_duplicates() {
        let mut truths = TruthSet::new();
        let key = Target::new(Variable::IncidentCases, "US", d("2021-01-16"), 1)
            .unwrap()
            .key();
        truths.insert(key.clone(), 1.0).unwrap();
        assert_eq!(truths.insert(key, 2.0), Err(TypeError::DuplicateTruth(truths.iter().next().unwrap().0.clone())));
    }
}
