use serde::{Deserialize, Serialize};

use super::{combine, differential_evolution_minimize, DeConfig, EnsembleError, WeightVector};
use crate::matrix::ForecastMatrix;
use crate::scoring::{CentralIntervalDecomposition, ScoreConfig};
use crate::types::TruthSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceFit {
    pub weights: WeightVector,
    /// In-sample mean WIS of the fitted ensemble; `None` when nothing was resolved.
    pub objective: Option<f64>,
    pub resolved_targets: usize,
    pub generations: usize,
}

struct ResolvedTarget<'a> {
    decomposition: CentralIntervalDecomposition,
    rows: Vec<&'a [f64]>,
    truth: f64,
}

/// Mean WIS of the weighted quantile average over resolved targets.
pub(crate) struct HistoryObjective<'a> {
    targets: Vec<ResolvedTarget<'a>>,
    config: ScoreConfig,
}

impl<'a> HistoryObjective<'a> {
    /// Targets count as resolved when they have a truth and every row is present.
    pub(crate) fn new(history: &'a ForecastMatrix, truths: &TruthSet) -> Result<Self, EnsembleError> {
        let mut targets = Vec::new();
        for (t, block) in history.blocks().iter().enumerate() {
            let Some(truth) = truths.get(&block.target) else {
                continue;
            };
            let rows: Option<Vec<&[f64]>> = (0..history.n_models()).map(|m| history.block(m, t)).collect();
            let Some(rows) = rows else {
                continue;
            };
            targets.push(ResolvedTarget {
                decomposition: CentralIntervalDecomposition::new(&block.levels)?,
                rows,
                truth,
            });
        }
        Ok(Self {
            targets,
            config: ScoreConfig::default(),
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.targets.len()
    }

    pub(crate) fn evaluate(&self, weights: &WeightVector) -> f64 {
        let w = weights.as_slice();
        let mut total = 0.0;
        let mut buf = Vec::new();
        for target in &self.targets {
            buf.clear();
            let k = target.rows[0].len();
            buf.extend((0..k).map(|j| combine(w, |m| target.rows[m][j])));
            match target.decomposition.wis(&buf, target.truth, &self.config) {
                Ok(v) => total += v,
                Err(_) => return f64::INFINITY,
            }
        }
        total / self.targets.len() as f64
    }
}

/// Fits simplex weights minimizing in-sample mean WIS over resolved history.
///
/// With no resolved target the weights are equal.
pub fn fit_performance_weights(
    history: &ForecastMatrix,
    truths: &TruthSet,
    config: &DeConfig,
) -> Result<PerformanceFit, EnsembleError> {
    let m = history.n_models();
    if m == 0 {
        return Err(EnsembleError::ZeroDimension);
    }
    let objective = HistoryObjective::new(history, truths)?;
    if objective.len() == 0 {
        return Ok(PerformanceFit {
            weights: WeightVector::equal(m)?,
            objective: None,
            resolved_targets: 0,
            generations: 0,
        });
    }
    let outcome = differential_evolution_minimize(|w| objective.evaluate(w), m, config)?;
    Ok(PerformanceFit {
        weights: outcome.weights,
        objective: Some(outcome.objective),
        resolved_targets: objective.len(),
        generations: outcome.generations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::assemble_matrices;
    use crate::types::{Provenance, QuantileForecast, QuantileLevelSet, Target, Variable};
    use chrono::NaiveDate;

    fn history(rows: &[(&str, Vec<Vec<f64>>)], truths: &[f64]) -> (ForecastMatrix, TruthSet) {
        let targets: Vec<Target> = (0..truths.len())
            .map(|i| {
                Target::new(
                    Variable::IncidentCases,
                    "US",
                    NaiveDate::from_ymd_opt(2021, 1, 2).unwrap() + chrono::Duration::weeks(i as i64),
                    1,
                )
                .unwrap()
            })
            .collect();
        let mut fs = Vec::new();
        for (id, per_target) in rows {
            for (t, values) in targets.iter().zip(per_target) {
                fs.push(
                    QuantileForecast::new(*id, t.clone(), QuantileLevelSet::case(), values.clone(), Provenance::Computational)
                        .unwrap(),
                );
            }
        }
        let truth_set = targets.iter().zip(truths).map(|(t, &y)| (t.key(), y)).collect();
        assemble_matrices(&fs, &truth_set).unwrap()
    }

    #[test]
    fn identical_models_reproduce_the_single_score() {
        let q = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]];
        let (m, truths) = history(&[("a", q.clone()), ("b", q.clone()), ("c", q.clone())], &[9.0]);
        let fit = fit_performance_weights(&m, &truths, &DeConfig::default()).unwrap();
        let single = crate::scoring::wis(&QuantileLevelSet::case(), &q[0], 9.0).unwrap();
        let sum: f64 = fit.weights.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((fit.objective.unwrap() - single).abs() < 1e-9 * single);
    }

    #[test]
    fn no_resolved_history_gives_equal_weights() {
        let q = vec![vec![1.0; 7]];
        let (m, _) = history(&[("a", q.clone()), ("b", q)], &[1.0]);
        let fit = fit_performance_weights(&m, &TruthSet::new(), &DeConfig::default()).unwrap();
        assert_eq!(fit.weights.as_slice(), &[0.5, 0.5]);
        assert_eq!(fit.objective, None);
    }
}
