//! Filling missing forecasts, one target at a time.
//!
//! Only forecasts of the same target inform a missing forecast. The quantiles of one
//! target form a rows-by-levels slice; mean and median fill each column from its
//! observed values, and the three regression techniques impute column `k` from the
//! remaining columns with chained equations.

mod bayes_ridge;
mod chained;
mod tree;

pub use bayes_ridge::BayesianRidge;
pub use chained::{chained_equations, initialize_with_column_means};
pub use tree::{ExtraTrees, ForestParams, RegressionTree, TreeParams};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ForecastMatrix;
use crate::types::Target;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("slice has no present rows to impute from")]
    CannotImpute,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("regressor fit failed: {0}")]
    FitFailed(String),
    #[error("slice rows have inconsistent widths")]
    RaggedSlice,
    #[error("invalid imputer configuration: {0}")]
    InvalidConfig(String),
    #[error("chained equations need a regression technique, got {0:?}")]
    NotARegression(Technique),
    #[error("imputing {target}: {source}")]
    Target {
        target: Box<Target>,
        #[source]
        source: Box<ImputeError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Technique {
    Mean,
    Median,
    BayesianRidge,
    DecisionTree,
    ExtraTrees,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::Mean,
        Technique::Median,
        Technique::BayesianRidge,
        Technique::DecisionTree,
        Technique::ExtraTrees,
    ];

    pub fn is_regression(self) -> bool {
        !matches!(self, Technique::Mean | Technique::Median)
    }

    pub fn name(self) -> &'static str {
        match self {
            Technique::Mean => "mean",
            Technique::Median => "median",
            Technique::BayesianRidge => "bayesian-ridge",
            Technique::DecisionTree => "decision-tree",
            Technique::ExtraTrees => "extra-trees",
        }
    }
}

impl std::str::FromStr for Technique {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| format!("unknown imputation technique `{s}`"))
    }
}

/// Initial weight precision and the Gamma(shape, rate) prior shared by both precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesRidgePriors {
    pub lambda_init: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Default for BayesRidgePriors {
    fn default() -> Self {
        Self {
            lambda_init: 1.0,
            shape: 1e-6,
            rate: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerConfig {
    pub technique: Technique,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    pub ert_n_trees: usize,
    pub ert_feature_fraction: f64,
    pub br_hyperpriors: BayesRidgePriors,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        Self {
            technique: Technique::Mean,
            max_iterations: 10,
            rel_tolerance: 1e-3,
            seed: 0,
            tree_max_depth: 8,
            tree_min_leaf: 2,
            ert_n_trees: 10,
            ert_feature_fraction: 1.0,
            br_hyperpriors: BayesRidgePriors::default(),
        }
    }
}

impl ImputerConfig {
    pub fn with_technique(technique: Technique) -> Self {
        Self {
            technique,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ImputeError> {
        let bad = |msg: &str| Err(ImputeError::InvalidConfig(msg.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.rel_tolerance > 0.0) {
            return bad("rel_tolerance must be positive");
        }
        if self.tree_max_depth == 0 || self.tree_min_leaf == 0 || self.ert_n_trees == 0 {
            return bad("tree parameters must be positive");
        }
        if !(self.ert_feature_fraction > 0.0 && self.ert_feature_fraction <= 1.0) {
            return bad("ert_feature_fraction must lie in (0, 1]");
        }
        let p = &self.br_hyperpriors;
        if !(p.lambda_init > 0.0 && p.shape > 0.0 && p.rate > 0.0) {
            return bad("bayesian ridge hyperpriors must be positive");
        }
        Ok(())
    }
}

/// The quantiles of a single target: one row per model, one column per level.
///
/// A cell is observed when its row is present and the value is finite; absent rows
/// hold `NaN`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetQuantileSlice {
    pub rows: Vec<String>,
    pub q: Vec<Vec<f64>>,
    pub present: Vec<bool>,
}

impl PartialEq for TargetQuantileSlice {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.present == other.present
            && self.q.len() == other.q.len()
            && self.q.iter().zip(&other.q).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl TargetQuantileSlice {
    pub fn new(rows: Vec<String>, q: Vec<Vec<f64>>, present: Vec<bool>) -> Result<Self, ImputeError> {
        if rows.len() != q.len() || rows.len() != present.len() {
            return Err(ImputeError::RaggedSlice);
        }
        if let Some(first) = q.first() {
            if q.iter().any(|r| r.len() != first.len()) {
                return Err(ImputeError::RaggedSlice);
            }
        }
        Ok(Self { rows, q, present })
    }

    pub fn from_matrix(matrix: &ForecastMatrix, target: usize) -> Self {
        let rows = matrix.model_ids().map(String::from).collect();
        let q = (0..matrix.n_models())
            .map(|m| matrix.block_cells(m, target).to_vec())
            .collect();
        let present = (0..matrix.n_models())
            .map(|m| matrix.is_present(m, target))
            .collect();
        Self { rows, q, present }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.present[row] && self.q[row][col].is_finite()
    }

    pub fn has_missing(&self) -> bool {
        (0..self.n_rows()).any(|r| (0..self.n_cols()).any(|c| !self.is_observed(r, c)))
    }

    fn row_has_missing(&self, row: usize) -> bool {
        (0..self.n_cols()).any(|c| !self.is_observed(row, c))
    }

    fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows())
            .filter(|&r| self.is_observed(r, col))
            .map(|r| self.q[r][col])
            .collect()
    }
}

/// Why a chained-equation step fell back to the column mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fallback {
    pub sweep: usize,
    pub column: usize,
    pub reason: String,
}

/// What happened while imputing one slice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceLog {
    pub imputed_rows: Vec<String>,
    pub sweeps: usize,
    pub converged: bool,
    pub fallbacks: Vec<Fallback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLog {
    pub target: Target,
    pub log: SliceLog,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationLog {
    pub technique: Option<Technique>,
    pub targets: Vec<TargetLog>,
}

/// Sorts a quantile vector so imputed rows never cross.
pub fn repair_monotonicity(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Smallest observed value at which the empirical CDF reaches one half.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn impute_slice(
    slice: &TargetQuantileSlice,
    config: &ImputerConfig,
) -> Result<TargetQuantileSlice, ImputeError> {
    impute_slice_logged(slice, config).map(|(s, _)| s)
}

/// Completes a slice, returning the filled slice and a record of the run.
///
/// Observed cells are never modified, and a slice with nothing missing is returned
/// unchanged.
pub fn impute_slice_logged(
    slice: &TargetQuantileSlice,
    config: &ImputerConfig,
) -> Result<(TargetQuantileSlice, SliceLog), ImputeError> {
    if !slice.present.iter().any(|&p| p) {
        return Err(ImputeError::CannotImpute);
    }
    if !slice.has_missing() {
        return Ok((slice.clone(), SliceLog {
            converged: true,
            ..SliceLog::default()
        }));
    }
    let (mut filled, mut log) = match config.technique {
        Technique::Mean => (initialize_with_column_means(slice)?, SliceLog::default()),
        Technique::Median => (fill_columns(slice, lower_median)?, SliceLog::default()),
        _ => chained_equations(slice, config)?,
    };
    if !config.technique.is_regression() {
        log.converged = true;
    }
    for r in 0..slice.n_rows() {
        if slice.row_has_missing(r) {
            filled.q[r] = repair_monotonicity(&filled.q[r]);
            log.imputed_rows.push(slice.rows[r].clone());
        }
    }
    Ok((filled, log))
}

fn fill_columns(
    slice: &TargetQuantileSlice,
    stat: impl Fn(&[f64]) -> Option<f64>,
) -> Result<TargetQuantileSlice, ImputeError> {
    let mut out = slice.clone();
    for c in 0..slice.n_cols() {
        let fill = stat(&slice.observed_column(c)).ok_or(ImputeError::CannotImpute)?;
        for r in 0..slice.n_rows() {
            if !slice.is_observed(r, c) {
                out.q[r][c] = fill;
            }
        }
    }
    out.present = vec![true; slice.n_rows()];
    Ok(out)
}

/// Fits the technique on `(x, y)` and predicts every row of `x_query`.
pub fn fit_regressor_predict(
    technique: Technique,
    x: &[Vec<f64>],
    y: &[f64],
    x_query: &[Vec<f64>],
    config: &ImputerConfig,
) -> Result<Vec<f64>, ImputeError> {
    if y.is_empty() || x.len() != y.len() {
        return Err(ImputeError::EmptyTraining);
    }
    let p = x[0].len();
    if p == 0 || x.iter().chain(x_query).any(|r| r.len() != p) {
        return Err(ImputeError::RaggedSlice);
    }
    let tree = TreeParams {
        max_depth: config.tree_max_depth,
        min_leaf: config.tree_min_leaf,
    };
    let predictions: Vec<f64> = match technique {
        Technique::Mean => {
            let m = mean(y).ok_or(ImputeError::EmptyTraining)?;
            vec![m; x_query.len()]
        }
        Technique::Median => {
            let m = lower_median(y).ok_or(ImputeError::EmptyTraining)?;
            vec![m; x_query.len()]
        }
        Technique::BayesianRidge => {
            let model = BayesianRidge::fit(x, y, &config.br_hyperpriors)?;
            x_query.iter().map(|q| model.predict(q)).collect()
        }
        Technique::DecisionTree => {
            let model = RegressionTree::fit(x, y, tree);
            x_query.iter().map(|q| model.predict(q)).collect()
        }
        Technique::ExtraTrees => {
            let model = ExtraTrees::fit(
                x,
                y,
                ForestParams {
                    tree,
                    n_trees: config.ert_n_trees,
                    feature_fraction: config.ert_feature_fraction,
                    seed: config.seed,
                },
            );
            x_query.iter().map(|q| model.predict(q)).collect()
        }
    };
    if predictions.iter().any(|v| !v.is_finite()) {
        return Err(ImputeError::FitFailed("non-finite prediction".into()));
    }
    Ok(predictions)
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for one (target, technique) pair, independent of scheduling.
pub fn target_seed(base: u64, target: &Target, technique: Technique) -> u64 {
    let label = format!("{}|{}", target, technique.name());
    mix_seed(base, fnv1a(label.as_bytes()))
}

/// Imputes every target of `matrix` independently, in parallel.
pub fn impute_matrix(
    matrix: &ForecastMatrix,
    config: &ImputerConfig,
) -> Result<(ForecastMatrix, ImputationLog), ImputeError> {
    config.validate()?;
    let results: Vec<(TargetQuantileSlice, SliceLog)> = (0..matrix.n_targets())
        .into_par_iter()
        .map(|t| {
            let target = matrix.target(t);
            let slice = TargetQuantileSlice::from_matrix(matrix, t);
            let cfg = ImputerConfig {
                seed: target_seed(config.seed, target, config.technique),
                ..config.clone()
            };
            impute_slice_logged(&slice, &cfg).map_err(|e| ImputeError::Target {
                target: Box::new(target.clone()),
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut out = matrix.clone();
    let mut log = ImputationLog {
        technique: Some(config.technique),
        targets: Vec::new(),
    };
    for (t, (slice, slice_log)) in results.into_iter().enumerate() {
        for m in 0..out.n_models() {
            if !matrix.is_present(m, t) {
                out.set_block(m, t, &slice.q[m]);
            }
        }
        if !slice_log.imputed_rows.is_empty() {
            log.targets.push(TargetLog {
                target: matrix.target(t).clone(),
                log: slice_log,
            });
        }
    }
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NAN: f64 = f64::NAN;

    fn slice(q: Vec<Vec<f64>>) -> TargetQuantileSlice {
        let present = q.iter().map(|r| r.iter().all(|v| v.is_finite())).collect();
        let rows = (0..q.len()).map(|i| format!("m{i}")).collect();
        TargetQuantileSlice::new(rows, q, present).unwrap()
    }

    #[test]
    fn mean_fills_from_observed_column() {
        let s = slice(vec![vec![1.0], vec![2.0], vec![NAN], vec![3.0]]);
        let out = impute_slice(&s, &ImputerConfig::with_technique(Technique::Mean)).unwrap();
        assert_eq!(out.q[2][0], 2.0);
        assert!(out.present.iter().all(|&p| p));
    }

    #[test]
    fn median_is_the_lower_median() {
        let s = slice(vec![vec![1.0], vec![2.0], vec![3.0], vec![100.0], vec![NAN]]);
        let out = impute_slice(&s, &ImputerConfig::with_technique(Technique::Median)).unwrap();
        assert_eq!(out.q[4][0], 2.0);
        assert_eq!(lower_median(&[5.0, 1.0, 3.0]), Some(3.0));
    }

    #[test]
    fn no_missing_is_identity_for_every_technique() {
        let s = slice(vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.7, 9.0], vec![2.0, 2.0, 2.0]]);
        for technique in Technique::ALL {
            let out = impute_slice(&s, &ImputerConfig::with_technique(technique)).unwrap();
            assert_eq!(out, s, "{technique:?}");
        }
    }

    #[test]
    fn all_absent_cannot_impute() {
        let s = TargetQuantileSlice::new(vec!["a".into()], vec![vec![NAN]], vec![false]).unwrap();
        assert_eq!(
            impute_slice(&s, &ImputerConfig::default()),
            Err(ImputeError::CannotImpute)
        );
    }

    #[test]
    fn repair_sorts() {
        assert_eq!(repair_monotonicity(&[1.0, 3.0, 2.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(repair_monotonicity(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(repair_monotonicity(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn intercept_only_regressions() {
        let x = vec![vec![1.0], vec![1.0]];
        let y = [4.0, 6.0];
        let cfg = ImputerConfig::default();
        for technique in [Technique::BayesianRidge, Technique::DecisionTree] {
            let p = fit_regressor_predict(technique, &x, &y, &[vec![1.0], vec![3.0]], &cfg).unwrap();
            assert_eq!(p, vec![5.0, 5.0], "{technique:?}");
        }
        // Extra trees average bootstrap means, so only the range is fixed.
        let p = fit_regressor_predict(Technique::ExtraTrees, &x, &y, &[vec![1.0]], &cfg).unwrap();
        assert!((4.0..=6.0).contains(&p[0]));
    }

    #[test]
    fn single_row_tree() {
        let p = fit_regressor_predict(
            Technique::DecisionTree,
            &[vec![1.0, 2.0]],
            &[8.0],
            &[vec![0.0, 0.0], vec![9.0, 9.0]],
            &ImputerConfig::default(),
        )
        .unwrap();
        assert_eq!(p, vec![8.0, 8.0]);
    }

    #[test]
    fn bayesian_ridge_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64 + 3.0).collect();
        let p = fit_regressor_predict(Technique::BayesianRidge, &x, &y, &[vec![5.0]], &ImputerConfig::default())
            .unwrap();
        assert!((p[0] - 13.0).abs() < 1e-2);
    }

    #[test]
    fn empty_training_fails() {
        assert_eq!(
            fit_regressor_predict(Technique::DecisionTree, &[], &[], &[vec![1.0]], &ImputerConfig::default()),
            Err(ImputeError::EmptyTraining)
        );
    }

    fn random_slice() -> impl Strategy<Value = TargetQuantileSlice> {
        (2usize..8, 2usize..6).prop_flat_map(|(rows, cols)| {
            (
                prop::collection::vec(prop::collection::vec(0.0..100.0f64, cols), rows),
                prop::collection::vec(prop::bool::weighted(0.6), rows),
            )
                .prop_map(|(mut q, mut present)| {
                    present[0] = true;
                    for (row, &p) in q.iter_mut().zip(&present) {
                        row.sort_by(f64::total_cmp);
                        if !p {
                            row.iter_mut().for_each(|v| *v = f64::NAN);
                        }
                    }
                    let rows = (0..q.len()).map(|i| format!("m{i}")).collect();
                    TargetQuantileSlice::new(rows, q, present).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mean_equals_chained_initialization(s in random_slice()) {
            let by_mean = impute_slice(&s, &ImputerConfig::with_technique(Technique::Mean)).unwrap();
            prop_assert_eq!(by_mean, initialize_with_column_means(&s).unwrap());
        }

        #[test]
        fn imputations_are_monotone_bounded_and_local(s in random_slice(), seed in 0u64..1000) {
            for technique in Technique::ALL {
                let cfg = ImputerConfig { technique, seed, ..ImputerConfig::default() };
                let out = impute_slice(&s, &cfg).unwrap();
                for r in 0..s.n_rows() {
                    prop_assert!(out.q[r].windows(2).all(|w| w[0] <= w[1]));
                    if s.present[r] {
                        prop_assert_eq!(&out.q[r], &s.q[r]);
                    }
                }
                if matches!(technique, Technique::Mean | Technique::Median) {
                    for c in 0..s.n_cols() {
                        let obs = s.observed_column(c);
                        let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        for r in 0..s.n_rows() {
                            prop_assert!(out.q[r][c] >= lo - 1e-9 && out.q[r][c] <= hi + 1e-9);
                        }
                    }
                }
                let again = impute_slice(&s, &cfg).unwrap();
                prop_assert_eq!(again, out);
            }
        }
    }
}
