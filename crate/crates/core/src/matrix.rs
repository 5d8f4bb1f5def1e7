//! The forecast matrix: one row per model, one block of quantile columns per target.
//!
//! Cells are stored row-major. A (model, target) block is either fully present or
//! fully absent; absent cells hold `NaN` and are flagged by the mask.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Provenance, QuantileForecast, QuantileLevelSet, Target, TruthSet, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("duplicate forecast from model `{model}` for {target}")]
    DuplicateForecast { model: String, target: Target },
    #[error("forecasts for {target} use different quantile level sets")]
    LevelConflict { target: Target },
    #[error("forecast from `{model}` for {target} has {values} values for {levels} levels")]
    LengthMismatch {
        model: String,
        target: Target,
        levels: usize,
        values: usize,
    },
    #[error("forecast from `{model}` for {target} is not non-decreasing")]
    NonMonotone { model: String, target: Target },
    #[error("model `{model}` appears with more than one provenance")]
    ProvenanceConflict { model: String },
    #[error("target {0} has no survey index")]
    UnmappedTarget(Target),
    #[error("target {target} belongs to survey {survey}, after the current survey {current}")]
    FutureTarget {
        target: Target,
        survey: usize,
        current: usize,
    },
    #[error("no eligible models")]
    NoEligibleModels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRow {
    pub id: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBlock {
    pub target: Target,
    pub levels: QuantileLevelSet,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastMatrix {
    models: Vec<ModelRow>,
    blocks: Vec<TargetBlock>,
    width: usize,
    cells: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for ForecastMatrix {
    /// Bit-level comparison so absent (`NaN`) cells compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.models == other.models
            && self.blocks == other.blocks
            && self.width == other.width
            && self.mask == other.mask
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ForecastMatrix {
    fn empty(models: Vec<ModelRow>, targets: Vec<(Target, QuantileLevelSet)>) -> Self {
        let mut offset = 0;
        let blocks: Vec<TargetBlock> = targets
            .into_iter()
            .map(|(target, levels)| {
                let block = TargetBlock {
                    target,
                    offset,
                    levels,
                };
                offset += block.levels.len();
                block
            })
            .collect();
        let m = models.len();
        let t = blocks.len();
        Self {
            models,
            blocks,
            width: offset,
            cells: vec![f64::NAN; m * offset],
            mask: vec![false; m * t],
        }
    }

    pub fn models(&self) -> &[ModelRow] {
        &self.models
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.models.iter().map(|m| m.id.as_str())
    }

    pub fn blocks(&self) -> &[TargetBlock] {
        &self.blocks
    }

    pub fn targets(&self) -> impl Iterator<Item = &Target> {
        self.blocks.iter().map(|b| &b.target)
    }

    pub fn target(&self, t: usize) -> &Target {
        &self.blocks[t].target
    }

    pub fn levels(&self, t: usize) -> &QuantileLevelSet {
        &self.blocks[t].levels
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_targets(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of quantile columns across all targets.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn row(&self, model: usize) -> &[f64] {
        &self.cells[model * self.width..(model + 1) * self.width]
    }

    pub fn mask_row(&self, model: usize) -> &[bool] {
        let t = self.blocks.len();
        &self.mask[model * t..(model + 1) * t]
    }

    pub fn is_present(&self, model: usize, target: usize) -> bool {
        self.mask[model * self.blocks.len() + target]
    }

    /// Raw cells of one (model, target) block, `NaN` when absent.
    pub fn block_cells(&self, model: usize, target: usize) -> &[f64] {
        let b = &self.blocks[target];
        let start = model * self.width + b.offset;
        &self.cells[start..start + b.levels.len()]
    }

    pub fn block(&self, model: usize, target: usize) -> Option<&[f64]> {
        self.is_present(model, target)
            .then(|| self.block_cells(model, target))
    }

    pub fn target_index(&self, target: &Target) -> Option<usize> {
        self.blocks.iter().position(|b| &b.target == target)
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.id == id)
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&p| p)
    }

    /// Fills a block and marks it present.
    pub(crate) fn set_block(&mut self, model: usize, target: usize, values: &[f64]) {
        let b = &self.blocks[target];
        debug_assert_eq!(values.len(), b.levels.len());
        let start = model * self.width + b.offset;
        self.cells[start..start + values.len()].copy_from_slice(values);
        let t = self.blocks.len();
        self.mask[model * t + target] = true;
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> ForecastMatrix {
        let t = self.blocks.len();
        let mut cells = Vec::with_capacity(rows.len() * self.width);
        let mut mask = Vec::with_capacity(rows.len() * t);
        for &r in rows {
            cells.extend_from_slice(self.row(r));
            mask.extend_from_slice(self.mask_row(r));
        }
        ForecastMatrix {
            models: rows.iter().map(|&r| self.models[r].clone()).collect(),
            blocks: self.blocks.clone(),
            width: self.width,
            cells,
            mask,
        }
    }

    /// Keeps the targets accepted by `keep`, preserving order.
    pub fn select_targets(&self, mut keep: impl FnMut(&Target) -> bool) -> ForecastMatrix {
        let kept: Vec<usize> = (0..self.blocks.len())
            .filter(|&t| keep(&self.blocks[t].target))
            .collect();
        let mut out = ForecastMatrix::empty(
            self.models.clone(),
            kept.iter()
                .map(|&t| (self.blocks[t].target.clone(), self.blocks[t].levels.clone()))
                .collect(),
        );
        for m in 0..self.models.len() {
            for (new_t, &t) in kept.iter().enumerate() {
                if self.is_present(m, t) {
                    out.set_block(m, new_t, self.block_cells(m, t));
                }
            }
        }
        out
    }

    /// One matrix per forecast variable, in variable order.
    pub fn split_by_variable(&self) -> Vec<(Variable, ForecastMatrix)> {
        let variables: BTreeSet<&Variable> = self.targets().map(|t| &t.variable).collect();
        variables
            .into_iter()
            .map(|v| (v.clone(), self.select_targets(|t| &t.variable == v)))
            .collect()
    }

    /// Splits the matrix back into its present forecasts, row-major.
    pub fn to_forecasts(&self) -> Vec<QuantileForecast> {
        let mut out = Vec::new();
        for (m, model) in self.models.iter().enumerate() {
            for (t, block) in self.blocks.iter().enumerate() {
                if let Some(values) = self.block(m, t) {
                    out.push(QuantileForecast {
                        model_id: model.id.clone(),
                        target: block.target.clone(),
                        levels: block.levels.clone(),
                        values: values.to_vec(),
                        provenance: model.provenance,
                    });
                }
            }
        }
        out
    }
}

/// Builds the forecast matrix and the truths that belong to its targets.
///
/// Rows follow first appearance of each model id; targets are sorted chronologically,
/// then by variable.
pub fn assemble_matrices(
    forecasts: &[QuantileForecast],
    truths: &TruthSet,
) -> Result<(ForecastMatrix, TruthSet), MatrixError> {
    let mut models: Vec<ModelRow> = Vec::new();
    let mut model_index: HashMap<&str, usize> = HashMap::new();
    let mut target_levels: HashMap<&Target, &QuantileLevelSet> = HashMap::new();
    for f in forecasts {
        if f.values.len() != f.levels.len() {
            return Err(MatrixError::LengthMismatch {
                model: f.model_id.clone(),
                target: f.target.clone(),
                levels: f.levels.len(),
                values: f.values.len(),
            });
        }
        if f.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(MatrixError::NonMonotone {
                model: f.model_id.clone(),
                target: f.target.clone(),
            });
        }
        match model_index.get(f.model_id.as_str()) {
            Some(&i) if models[i].provenance != f.provenance => {
                return Err(MatrixError::ProvenanceConflict {
                    model: f.model_id.clone(),
                })
            }
            Some(_) => {}
            None => {
                model_index.insert(&f.model_id, models.len());
                models.push(ModelRow {
                    id: f.model_id.clone(),
                    provenance: f.provenance,
                });
            }
        }
        match target_levels.get(&f.target) {
            Some(levels) if !levels.matches(&f.levels) => {
                return Err(MatrixError::LevelConflict {
                    target: f.target.clone(),
                })
            }
            Some(_) => {}
            None => {
                target_levels.insert(&f.target, &f.levels);
            }
        }
    }

    let mut targets: Vec<(Target, QuantileLevelSet)> = target_levels
        .into_iter()
        .map(|(t, l)| (t.clone(), l.clone()))
        .collect();
    targets.sort_by(|a, b| a.0.cmp(&b.0));
    let target_index: HashMap<Target, usize> = targets
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.clone(), i))
        .collect();

    let mut matrix = ForecastMatrix::empty(models, targets);
    for f in forecasts {
        let m = model_index[f.model_id.as_str()];
        let t = target_index[&f.target];
        if matrix.is_present(m, t) {
            return Err(MatrixError::DuplicateForecast {
                model: f.model_id.clone(),
                target: f.target.clone(),
            });
        }
        matrix.set_block(m, t, &f.values);
    }

    let keys: BTreeSet<_> = matrix.targets().map(Target::key).collect();
    let truth_subset = truths.filtered(|k| keys.contains(k));
    Ok((matrix, truth_subset))
}

/// Rules deciding which models enter an ensemble given their missing forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InclusionStrategy {
    /// Forecasts for every past and present target.
    CompleteCase,
    /// Forecasts for every present-survey target; past gaps are imputed.
    SpottyMemory,
    /// At least one forecast anywhere; all gaps are imputed.
    DeferToCrowd,
}

impl InclusionStrategy {
    pub const ALL: [InclusionStrategy; 3] = [
        InclusionStrategy::CompleteCase,
        InclusionStrategy::SpottyMemory,
        InclusionStrategy::DeferToCrowd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InclusionStrategy::CompleteCase => "complete-case",
            InclusionStrategy::SpottyMemory => "spotty-memory",
            InclusionStrategy::DeferToCrowd => "defer-to-crowd",
        }
    }
}

impl std::str::FromStr for InclusionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s.trim().to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| format!("unknown inclusion strategy `{s}`"))
    }
}

/// Indices of the rows the strategy keeps, in their original order.
///
/// Every strategy also requires at least one submitted forecast, which keeps the
/// three survivor sets nested even when the current survey has no targets.
pub fn surviving_rows(
    matrix: &ForecastMatrix,
    strategy: InclusionStrategy,
    current_survey: usize,
    survey_of: &HashMap<Target, usize>,
) -> Result<Vec<usize>, MatrixError> {
    let mut current = Vec::with_capacity(matrix.n_targets());
    for target in matrix.targets() {
        let survey = *survey_of
            .get(target)
            .ok_or_else(|| MatrixError::UnmappedTarget(target.clone()))?;
        if survey > current_survey {
            return Err(MatrixError::FutureTarget {
                target: target.clone(),
                survey,
                current: current_survey,
            });
        }
        current.push(survey == current_survey);
    }

    let rows: Vec<usize> = (0..matrix.n_models())
        .filter(|&m| {
            let mask = matrix.mask_row(m);
            let any = mask.iter().any(|&p| p);
            any && match strategy {
                InclusionStrategy::CompleteCase => mask.iter().all(|&p| p),
                InclusionStrategy::SpottyMemory => {
                    mask.iter().zip(&current).all(|(&p, &cur)| p || !cur)
                }
                InclusionStrategy::DeferToCrowd => true,
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(MatrixError::NoEligibleModels);
    }
    Ok(rows)
}

/// Removes the rows the strategy excludes. Surviving rows keep their order and values.
pub fn apply_inclusion_strategy(
    matrix: &ForecastMatrix,
    strategy: InclusionStrategy,
    current_survey: usize,
    survey_of: &HashMap<Target, usize>,
) -> Result<ForecastMatrix, MatrixError> {
    let rows = surviving_rows(matrix, strategy, current_survey, survey_of)?;
    Ok(matrix.select_rows(&rows))
}

/// Applies the strategy separately to each variable stream of `matrix`.
///
/// With `strict_joint_spotty`, spotty memory additionally drops a model from every
/// stream when it missed any present-survey target of any variable.
pub fn apply_inclusion_per_stream(
    matrix: &ForecastMatrix,
    strategy: InclusionStrategy,
    current_survey: usize,
    survey_of: &HashMap<Target, usize>,
    strict_joint_spotty: bool,
) -> Result<Vec<(Variable, Result<ForecastMatrix, MatrixError>)>, MatrixError> {
    let joint: Option<BTreeSet<String>> =
        if strict_joint_spotty && strategy == InclusionStrategy::SpottyMemory {
            let rows = match surviving_rows(matrix, strategy, current_survey, survey_of) {
                Ok(rows) => rows,
                Err(MatrixError::NoEligibleModels) => Vec::new(),
                Err(e) => return Err(e),
            };
            Some(rows.iter().map(|&r| matrix.models[r].id.clone()).collect())
        } else {
            None
        };

    let mut out = Vec::new();
    for (variable, stream) in matrix.split_by_variable() {
        let result = surviving_rows(&stream, strategy, current_survey, survey_of).and_then(|rows| {
            let rows: Vec<usize> = match &joint {
                Some(keep) => rows
                    .into_iter()
                    .filter(|&r| keep.contains(&stream.models[r].id))
                    .collect(),
                None => rows,
            };
            if rows.is_empty() {
                Err(MatrixError::NoEligibleModels)
            } else {
                Ok(stream.select_rows(&rows))
            }
        });
        out.push((variable, result));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn target(day: u32, variable: Variable) -> Target {
        Target::new(variable, "US", NaiveDate::from_ymd_opt(2021, 1, day).unwrap(), 1).unwrap()
    }

    fn fc(model: &str, target: &Target, values: &[f64]) -> QuantileForecast {
        let levels = match values.len() {
            3 => QuantileLevelSet::new(vec![0.25, 0.5, 0.75]).unwrap(),
            7 => QuantileLevelSet::case(),
            n => panic!("no level set for {n}"),
        };
        QuantileForecast {
            model_id: model.into(),
            target: target.clone(),
            levels,
            values: values.to_vec(),
            provenance: Provenance::Computational,
        }
    }

    #[test]
    fn two_models_one_target() {
        let t = target(16, Variable::IncidentCases);
        let (m, _) = assemble_matrices(
            &[fc("a", &t, &[1.0, 2.0, 3.0]), fc("b", &t, &[2.0, 3.0, 4.0])],
            &TruthSet::new(),
        )
        .unwrap();
        assert_eq!((m.n_models(), m.width()), (2, 3));
        assert!(m.is_complete());
        assert_eq!(m.row(1), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_block_is_flagged() {
        let t1 = target(16, Variable::IncidentCases);
        let t2 = target(23, Variable::IncidentCases);
        let (m, _) = assemble_matrices(
            &[
                fc("a", &t1, &[1.0, 2.0, 3.0]),
                fc("a", &t2, &[1.0, 2.0, 3.0]),
                fc("b", &t1, &[1.0, 2.0, 3.0]),
            ],
            &TruthSet::new(),
        )
        .unwrap();
        assert!(!m.is_present(1, 1));
        assert!(m.block(1, 1).is_none());
        assert!(m.block_cells(1, 1).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn target_major_layout() {
        let t1 = target(16, Variable::IncidentCases);
        let t2 = target(23, Variable::IncidentCases);
        let q = |base: f64| (0..7).map(|k| base + k as f64).collect::<Vec<_>>();
        let mut fs = Vec::new();
        for (i, model) in ["a", "b", "c"].iter().enumerate() {
            // Insert the later target first; layout must still be chronological.
            fs.push(fc(model, &t2, &q(100.0 * i as f64 + 10.0)));
            fs.push(fc(model, &t1, &q(100.0 * i as f64)));
        }
        let (m, _) = assemble_matrices(&fs, &TruthSet::new()).unwrap();
        assert_eq!((m.n_models(), m.width()), (3, 14));
        assert_eq!(m.target(0), &t1);
        assert_eq!(m.row(2)[..7], q(200.0)[..]);
        assert_eq!(m.row(2)[7..], q(210.0)[..]);
    }

    #[test]
    fn duplicate_rejected() {
        let t = target(16, Variable::IncidentCases);
        let err = assemble_matrices(
            &[fc("a", &t, &[1.0, 2.0, 3.0]), fc("a", &t, &[1.0, 2.0, 3.0])],
            &TruthSet::new(),
        )
        .unwrap_err();
        assert!(matches!(err, MatrixError::DuplicateForecast { ref model, .. } if model == "a"));
    }

    fn two_survey_setup() -> (ForecastMatrix, HashMap<Target, usize>) {
        let past = target(16, Variable::IncidentCases);
        let now = target(23, Variable::IncidentCases);
        let v = [1.0, 2.0, 3.0];
        let fs = vec![
            fc("A", &past, &v),
            fc("A", &now, &v),
            fc("B", &now, &v),
            fc("C", &past, &v),
        ];
        let (m, _) = assemble_matrices(&fs, &TruthSet::new()).unwrap();
        let surveys = HashMap::from([(past, 1), (now, 2)]);
        (m, surveys)
    }

    #[test]
    fn strategies_follow_their_definitions() {
        let (m, s) = two_survey_setup();
        let ids = |st| {
            apply_inclusion_strategy(&m, st, 2, &s)
                .unwrap()
                .model_ids()
                .map(String::from)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(InclusionStrategy::CompleteCase), vec!["A"]);
        assert_eq!(ids(InclusionStrategy::SpottyMemory), vec!["A", "B"]);
        assert_eq!(ids(InclusionStrategy::DeferToCrowd), vec!["A", "B", "C"]);
    }

    #[test]
    fn future_and_unmapped_targets_rejected() {
        let (m, s) = two_survey_setup();
        assert!(matches!(
            apply_inclusion_strategy(&m, InclusionStrategy::CompleteCase, 1, &s),
            Err(MatrixError::FutureTarget { .. })
        ));
        assert!(matches!(
            apply_inclusion_strategy(&m, InclusionStrategy::CompleteCase, 2, &HashMap::new()),
            Err(MatrixError::UnmappedTarget(_))
        ));
    }

    #[test]
    fn no_survivors_is_an_error() {
        let t1 = target(16, Variable::IncidentCases);
        let t2 = target(23, Variable::IncidentCases);
        let v = [1.0, 2.0, 3.0];
        let (m, _) =
            assemble_matrices(&[fc("a", &t1, &v), fc("b", &t2, &v)], &TruthSet::new()).unwrap();
        let s = HashMap::from([(t1, 1), (t2, 1)]);
        assert_eq!(
            apply_inclusion_strategy(&m, InclusionStrategy::CompleteCase, 1, &s),
            Err(MatrixError::NoEligibleModels)
        );
    }

    #[test]
    fn strict_joint_spotty_drops_across_streams() {
        let case = target(23, Variable::IncidentCases);
        let death = target(23, Variable::IncidentDeaths);
        let v = [1.0, 2.0, 3.0];
        let (m, _) = assemble_matrices(
            &[fc("a", &case, &v), fc("a", &death, &v), fc("b", &case, &v)],
            &TruthSet::new(),
        )
        .unwrap();
        let s = HashMap::from([(case, 1), (death, 1)]);
        let per = apply_inclusion_per_stream(&m, InclusionStrategy::SpottyMemory, 1, &s, false).unwrap();
        let case_ids: Vec<_> = per[0].1.as_ref().unwrap().model_ids().map(String::from).collect();
        assert_eq!(case_ids, vec!["a", "b"]);
        let strict = apply_inclusion_per_stream(&m, InclusionStrategy::SpottyMemory, 1, &s, true).unwrap();
        let case_ids: Vec<_> = strict[0].1.as_ref().unwrap().model_ids().map(String::from).collect();
        assert_eq!(case_ids, vec!["a"]);
    }

    #[test]
    fn split_and_reassemble_is_identity() {
        let t1 = target(16, Variable::IncidentCases);
        let t2 = target(23, Variable::IncidentDeaths);
        let v = [1.0, 2.0, 3.0];
        let (m, _) = assemble_matrices(
            &[fc("a", &t1, &v), fc("b", &t2, &v), fc("b", &t1, &[0.0, 0.5, 9.0])],
            &TruthSet::new(),
        )
        .unwrap();
        let (again, _) = assemble_matrices(&m.to_forecasts(), &TruthSet::new()).unwrap();
        assert_eq!(m, again);
    }
}
