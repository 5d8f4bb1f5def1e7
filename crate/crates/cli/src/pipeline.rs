//! Survey-by-survey evaluation: select forecasts, filter, impute, weight, average and
//! score, then pair ensembles across surveys.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use anyhow::{anyhow, Context};
use chimeric_core::elicitation::{select_cutoff_submission, Submission};
use chimeric_core::ensemble::{fit_performance_weights, quantile_average, PerformanceFit, WeightVector};
use chimeric_core::imputation::ImputationLog;
use chimeric_core::scoring::{paired_t_test_one_sided, wis, PairedTestResult};
use chimeric_core::types::week_ending_saturday;
use chimeric_core::{
    apply_inclusion_per_stream, assemble_matrices, impute_matrix, EnsembleLabel, ForecastMatrix,
    ImputerConfig, InclusionStrategy, MatrixError, QuantileForecast, QuantileLevelSet,
    Target, TargetKey, Technique, TruthSet, Variable,
};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CutoffMode, RunConfig, SourceKind, SurveySpec, Weighting};
use crate::io::{
    parse_elicitation_jsonl, parse_hub_quantile_csv, parse_truth_csv, DatedForecast, Diagnostic,
    ElicitationRecord, IngestError, PartialWeek,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything read from disk for one run.
#[derive(Debug, Clone, Default)]
pub struct LoadedData {
    pub hub: Vec<DatedForecast>,
    pub elicitations: Vec<ElicitationRecord>,
    pub truths: TruthSet,
    pub partial_weeks: Vec<PartialWeek>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn load_data(config: &RunConfig) -> Result<LoadedData, IngestError> {
    let mut data = LoadedData::default();
    for source in &config.sources {
        match source.kind {
            SourceKind::HubCsv => {
                let parsed = parse_hub_quantile_csv(&source.path)?;
                data.hub.extend(parsed.forecasts);
                data.diagnostics.extend(parsed.diagnostics);
            }
            SourceKind::ElicitationJsonl => {
                let parsed = parse_elicitation_jsonl(&source.path)?;
                data.elicitations.extend(parsed.records);
                data.diagnostics.extend(parsed.diagnostics);
            }
        }
    }
    let truth = parse_truth_csv(&config.truth_path)?;
    data.truths = truth.truths;
    data.partial_weeks = truth.partial_weeks;
    data.diagnostics.extend(truth.diagnostics);
    Ok(data)
}

/// The forecasts that take part in one survey.
#[derive(Debug, Clone)]
pub struct SurveyInputs {
    pub index: usize,
    pub cutoff_date: NaiveDate,
    pub hub_forecast_date: NaiveDate,
    pub targets: Vec<Target>,
    pub forecasts: Vec<QuantileForecast>,
    pub notes: Vec<String>,
}

fn horizon_between(forecast_date: NaiveDate, end: NaiveDate) -> Option<u32> {
    (1..=52).find(|&h| week_ending_saturday(forecast_date, h) == end)
}

/// The hub forecast date for a survey: the configured one, or the earliest date in
/// the survey window with a forecast for one of its targets.
fn hub_date_for(survey: &SurveySpec, keys: &BTreeSet<TargetKey>, hub: &[DatedForecast]) -> anyhow::Result<NaiveDate> {
    if let Some(d) = survey.hub_forecast_date {
        return Ok(d);
    }
    let cutoff = survey.cutoff.date_naive();
    hub.iter()
        .filter(|f| f.forecast_date <= cutoff)
        .filter(|f| survey.window_start.is_none_or(|w| f.forecast_date >= w))
        .filter(|f| keys.contains(&f.forecast.target.key()))
        .map(|f| f.forecast_date)
        .min()
        .ok_or_else(|| anyhow!("survey {}: no hub forecast date inside the survey window", survey.index))
}

pub fn prepare_surveys(config: &RunConfig, data: &LoadedData) -> anyhow::Result<Vec<SurveyInputs>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for survey in &config.surveys {
        let keys: BTreeSet<TargetKey> = survey.targets.iter().cloned().collect();
        for k in &keys {
            if !seen.insert(k.clone()) {
                anyhow::bail!("target {k:?} appears in more than one survey");
            }
        }
        let hub_date = hub_date_for(survey, &keys, &data.hub)?;
        let mut targets = Vec::new();
        for k in &survey.targets {
            let h = horizon_between(hub_date, k.target_end_date).ok_or_else(|| {
                anyhow!(
                    "survey {}: {} is not a week-ending Saturday after {hub_date}",
                    survey.index,
                    k.target_end_date
                )
            })?;
            targets.push(Target::new(k.variable.clone(), k.location.clone(), k.target_end_date, h)?);
        }
        let by_key: HashMap<TargetKey, Target> = targets.iter().map(|t| (t.key(), t.clone())).collect();

        let mut forecasts: Vec<QuantileForecast> = data
            .hub
            .iter()
            .filter(|f| f.forecast_date == hub_date && by_key.contains_key(&f.forecast.target.key()))
            .map(|f| f.forecast.clone())
            .collect();

        let mut notes = Vec::new();
        let mut streams: BTreeMap<(String, TargetKey), Vec<&ElicitationRecord>> = BTreeMap::new();
        for r in &data.elicitations {
            if by_key.contains_key(&r.target) {
                streams.entry((r.forecaster_id.clone(), r.target.clone())).or_default().push(r);
            }
        }
        let cutoff = survey.human_cutoff(config.cutoff_mode);
        for ((who, key), mut stream) in streams {
            stream.sort_by_key(|r| r.submitted_at);
            let target = &by_key[&key];
            let submissions: Vec<Submission> = stream
                .iter()
                .map(|r| Submission {
                    forecaster_id: r.forecaster_id.clone(),
                    target: target.clone(),
                    distribution: r.distribution.clone(),
                    submitted_at: r.submitted_at,
                })
                .collect();
            if submissions.windows(2).any(|w| w[0].submitted_at == w[1].submitted_at) {
                notes.push(format!("{who}: repeated submission timestamp for {target}; latest line wins"));
            }
            let Some(chosen) = select_cutoff_submission(&submissions, cutoff) else {
                continue;
            };
            let levels = QuantileLevelSet::for_variable(&target.variable)
                .ok_or_else(|| anyhow!("no standard quantile levels for {}", target.variable))?;
            match chosen.to_forecast(&levels) {
                Ok(f) => forecasts.push(f),
                Err(e) => notes.push(format!("{who}: {target}: {e}")),
            }
        }
        out.push(SurveyInputs {
            index: survey.index,
            cutoff_date: survey.cutoff.date_naive(),
            hub_forecast_date: hub_date,
            targets,
            forecasts,
            notes,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub survey: usize,
    pub variable: Variable,
    pub label: EnsembleLabel,
    pub wis: Option<f64>,
    pub models: usize,
    pub human_models: usize,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub survey: usize,
    pub variable: Variable,
    pub label: EnsembleLabel,
    pub models: Vec<String>,
    pub weights: Vec<f64>,
    /// Resolved targets the weights were fitted on; empty for equal weights.
    pub training_targets: Vec<TargetKey>,
    pub in_sample_wis: Option<f64>,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRow {
    pub survey: usize,
    pub variable: Variable,
    pub label: EnsembleLabel,
    pub imputed_blocks: usize,
    pub fallbacks: usize,
    pub max_sweeps: usize,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub survey: usize,
    pub label: EnsembleLabel,
    pub target: Target,
    pub levels: QuantileLevelSet,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub survey: usize,
    pub a: f64,
    pub b: f64,
    pub difference: f64,
}

/// `a − b` paired across surveys; negative means `a` scored better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: EnsembleLabel,
    pub b: EnsembleLabel,
    pub variable: Variable,
    pub rows: Vec<PairedRow>,
    pub test: Option<PairedTestResult>,
}

impl Comparison {
    pub fn name(&self) -> String {
        format!("{}-minus-{}", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Missingness {
    pub computational_rows: usize,
    pub human_rows: usize,
    pub computational_missing: f64,
    pub human_missing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySummary {
    pub index: usize,
    pub hub_forecast_date: NaiveDate,
    pub targets: Vec<Target>,
    pub computational_forecasts: usize,
    pub human_forecasts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub strategy: InclusionStrategy,
    pub technique: Technique,
    pub weighting: Weighting,
    pub cutoff_mode: CutoffMode,
    pub surveys: Vec<SurveySummary>,
    pub missingness: Missingness,
    pub scores: Vec<ScoreRow>,
    pub weights: Vec<WeightRow>,
    pub imputation: Vec<ImputationRow>,
    pub forecasts: Vec<EnsembleOutput>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

/// What one ensemble label produced for one survey and variable.
#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub survey: usize,
    pub variable: Variable,
    pub label: EnsembleLabel,
    pub result: Result<BuiltEnsemble, String>,
}

#[derive(Debug, Clone)]
pub struct BuiltEnsemble {
    pub filtered: ForecastMatrix,
    pub imputed: ForecastMatrix,
    pub log: ImputationLog,
    pub weights: WeightVector,
    pub fit: Option<PerformanceFit>,
    pub training_targets: Vec<TargetKey>,
    pub forecasts: Vec<EnsembleOutput>,
    pub wis: Option<f64>,
}

fn mix(mut h: u64, x: u64) -> u64 {
    h ^= x.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn str_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn variables_of(targets: &[Target]) -> Vec<Variable> {
    targets.iter().map(|t| t.variable.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Builds every requested ensemble for survey position `pos`.
///
/// Weights are fitted on truths whose week ended before the survey cutoff; later
/// truths are not visible to the fit.
pub fn build_survey(
    config: &RunConfig,
    surveys: &[SurveyInputs],
    pos: usize,
    truths: &TruthSet,
) -> anyhow::Result<Vec<LabelOutcome>> {
    let current = &surveys[pos];
    let survey_of: HashMap<Target, usize> = surveys[..=pos]
        .iter()
        .flat_map(|s| s.targets.iter().map(move |t| (t.clone(), s.index)))
        .collect();
    let resolved = truths.filtered(|k| k.target_end_date < current.cutoff_date);
    let variables = variables_of(&current.targets);

    let mut out = Vec::new();
    for &label in &config.ensembles {
        let forecasts: Vec<QuantileForecast> = surveys[..=pos]
            .iter()
            .flat_map(|s| s.forecasts.iter())
            .filter(|f| label.admits(f.provenance))
            .cloned()
            .collect();
        let mut per_variable: BTreeMap<Variable, Result<ForecastMatrix, String>> = BTreeMap::new();
        if !forecasts.is_empty() {
            let (joint, _) = assemble_matrices(&forecasts, &resolved)
                .with_context(|| format!("survey {}: assembling the {label} matrix", current.index))?;
            let streams = apply_inclusion_per_stream(
                &joint,
                config.strategy,
                current.index,
                &survey_of,
                config.strict_joint_spotty,
            )
            .with_context(|| format!("survey {}: filtering the {label} matrix", current.index))?;
            for (v, r) in streams {
                per_variable.insert(v, r.map_err(|e| e.to_string()));
            }
        }
        for variable in &variables {
            let result = match per_variable.remove(variable) {
                None => Err(MatrixError::NoEligibleModels.to_string()),
                Some(Err(e)) => Err(e),
                Some(Ok(filtered)) if !filtered.targets().any(|t| current.targets.contains(t)) => {
                    Err("no forecasts for the current targets".to_string())
                }
                Some(Ok(filtered)) => Ok(build_one(config, current, label, variable, filtered, &resolved, truths)
                    .with_context(|| format!("survey {} {variable} {label}", current.index))?),
            };
            out.push(LabelOutcome {
                survey: current.index,
                variable: variable.clone(),
                label,
                result,
            });
        }
    }
    Ok(out)
}

fn build_one(
    config: &RunConfig,
    current: &SurveyInputs,
    label: EnsembleLabel,
    variable: &Variable,
    filtered: ForecastMatrix,
    resolved: &TruthSet,
    truths: &TruthSet,
) -> anyhow::Result<BuiltEnsemble> {
    let is_current = |t: &Target| current.targets.contains(t);
    // Filtering can leave an old target that no surviving model forecast; there is
    // nothing to impute it from, so it drops out of the history.
    let observed: Vec<Target> = (0..filtered.n_targets())
        .filter(|&t| (0..filtered.n_models()).any(|m| filtered.is_present(m, t)))
        .map(|t| filtered.target(t).clone())
        .collect();
    let filtered = filtered.select_targets(|t| observed.contains(t));
    let (imputed, log) = impute_matrix(&filtered, &config.imputer)?;
    let m = imputed.n_models();

    let (weights, fit, training_targets) = match config.weighting {
        Weighting::Equal => (WeightVector::equal(m)?, None, Vec::new()),
        Weighting::Performance => {
            let history = imputed.select_targets(|t| !is_current(t) && t.target_end_date < current.cutoff_date);
            let training: Vec<TargetKey> = history
                .targets()
                .map(Target::key)
                .filter(|k| resolved.get_key(k).is_some())
                .collect();
            let mut de = config.de.clone();
            de.seed = [current.index as u64, str_hash(&variable.to_string()), str_hash(label.name())]
                .into_iter()
                .fold(config.de.seed, mix);
            let fit = fit_performance_weights(&history, resolved, &de)?;
            (fit.weights.clone(), Some(fit), training)
        }
    };

    let present = imputed.select_targets(is_current);
    let ensemble = quantile_average(&present, &weights, label)?;
    let mut scores = Vec::new();
    let forecasts: Vec<EnsembleOutput> = ensemble
        .targets
        .iter()
        .map(|t| {
            if let Some(y) = truths.get(&t.target) {
                scores.push(wis(&t.levels, &t.values, y));
            }
            EnsembleOutput {
                survey: current.index,
                label,
                target: t.target.clone(),
                levels: t.levels.clone(),
                values: t.values.clone(),
            }
        })
        .collect();
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_, _>>()?;
    let wis = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    Ok(BuiltEnsemble {
        filtered,
        imputed,
        log,
        weights,
        fit,
        training_targets,
        forecasts,
        wis,
    })
}

/// Share of (row, survey target) cells without a forecast, by provenance class.
pub fn missingness(surveys: &[SurveyInputs], data: &LoadedData) -> Missingness {
    let mut comp_rows: BTreeSet<&str> = data.hub.iter().map(|f| f.forecast.model_id.as_str()).collect();
    let human_rows: BTreeSet<&str> = data.elicitations.iter().map(|r| r.forecaster_id.as_str()).collect();
    comp_rows.retain(|r| !human_rows.contains(r));
    let cells = surveys.iter().map(|s| s.targets.len()).sum::<usize>();
    let mut present: HashMap<bool, usize> = HashMap::new();
    for s in surveys {
        for f in &s.forecasts {
            *present.entry(f.provenance.is_human()).or_default() += 1;
        }
    }
    let share = |rows: usize, human: bool| {
        if rows == 0 || cells == 0 {
            0.0
        } else {
            1.0 - present.get(&human).copied().unwrap_or(0) as f64 / (rows * cells) as f64
        }
    };
    Missingness {
        computational_rows: comp_rows.len(),
        human_rows: human_rows.len(),
        computational_missing: share(comp_rows.len(), false),
        human_missing: share(human_rows.len(), true),
    }
}

/// Label pairs compared across surveys, first minus second.
pub const COMPARISONS: [(EnsembleLabel, EnsembleLabel); 3] = [
    (EnsembleLabel::Chimeric, EnsembleLabel::Computational),
    (EnsembleLabel::Human, EnsembleLabel::Computational),
    (EnsembleLabel::Chimeric, EnsembleLabel::Human),
];

pub fn paired(a: &[(usize, f64)], b: &[(usize, f64)]) -> (Vec<PairedRow>, Option<PairedTestResult>) {
    let b: BTreeMap<usize, f64> = b.iter().copied().collect();
    let rows: Vec<PairedRow> = a
        .iter()
        .filter_map(|&(s, x)| {
            b.get(&s).map(|&y| PairedRow {
                survey: s,
                a: x,
                b: y,
                difference: x - y,
            })
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.a).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.b).collect();
    let test = paired_t_test_one_sided(&xs, &ys).ok();
    (rows, test)
}

fn scored(scores: &[ScoreRow], label: EnsembleLabel, variable: &Variable) -> Vec<(usize, f64)> {
    scores
        .iter()
        .filter(|r| r.label == label && &r.variable == variable)
        .filter_map(|r| r.wis.map(|w| (r.survey, w)))
        .collect()
}

pub fn run_evaluation(config: &RunConfig) -> anyhow::Result<EvaluationReport> {
    let data = load_data(config)?;
    run_with_data(config, &data)
}

/// Runs the evaluation on data already in memory.
pub fn run_with_data(config: &RunConfig, data: &LoadedData) -> anyhow::Result<EvaluationReport> {
    config.validate()?;
    let surveys = prepare_surveys(config, data)?;
    run_prepared(config, data, &surveys)
}

pub fn run_prepared(config: &RunConfig, data: &LoadedData, surveys: &[SurveyInputs]) -> anyhow::Result<EvaluationReport> {
    let mut report = EvaluationReport {
        schema_version: SCHEMA_VERSION,
        strategy: config.strategy,
        technique: config.imputer.technique,
        weighting: config.weighting,
        cutoff_mode: config.cutoff_mode,
        surveys: surveys
            .iter()
            .map(|s| SurveySummary {
                index: s.index,
                hub_forecast_date: s.hub_forecast_date,
                targets: s.targets.clone(),
                computational_forecasts: s.forecasts.iter().filter(|f| !f.provenance.is_human()).count(),
                human_forecasts: s.forecasts.iter().filter(|f| f.provenance.is_human()).count(),
            })
            .collect(),
        missingness: missingness(surveys, data),
        scores: Vec::new(),
        weights: Vec::new(),
        imputation: Vec::new(),
        forecasts: Vec::new(),
        comparisons: Vec::new(),
        notes: surveys.iter().flat_map(|s| s.notes.iter().cloned()).collect(),
    };

    // Surveys run in order; each one only sees earlier surveys and earlier truths.
    for pos in 0..surveys.len() {
        for outcome in build_survey(config, surveys, pos, &data.truths)? {
            record(&mut report, outcome);
        }
    }

    let variables: BTreeSet<Variable> = report.scores.iter().map(|r| r.variable.clone()).collect();
    for (a, b) in COMPARISONS {
        if !(config.ensembles.contains(&a) && config.ensembles.contains(&b)) {
            continue;
        }
        for v in &variables {
            let (rows, test) = paired(&scored(&report.scores, a, v), &scored(&report.scores, b, v));
            report.comparisons.push(Comparison {
                a,
                b,
                variable: v.clone(),
                rows,
                test,
            });
        }
    }
    Ok(report)
}

fn record(report: &mut EvaluationReport, outcome: LabelOutcome) {
    let LabelOutcome {
        survey,
        variable,
        label,
        result,
    } = outcome;
    match result {
        Err(reason) => report.scores.push(ScoreRow {
            survey,
            variable,
            label,
            wis: None,
            models: 0,
            human_models: 0,
            skipped: Some(reason),
        }),
        Ok(built) => {
            let human = built.imputed.models().iter().filter(|r| r.provenance.is_human()).count();
            report.scores.push(ScoreRow {
                survey,
                variable: variable.clone(),
                label,
                wis: built.wis,
                models: built.imputed.n_models(),
                human_models: human,
                skipped: None,
            });
            report.weights.push(WeightRow {
                survey,
                variable: variable.clone(),
                label,
                models: built.imputed.model_ids().map(String::from).collect(),
                weights: built.weights.as_slice().to_vec(),
                training_targets: built.training_targets,
                in_sample_wis: built.fit.as_ref().and_then(|f| f.objective),
                generations: built.fit.as_ref().map_or(0, |f| f.generations),
            });
            let logs = &built.log.targets;
            report.imputation.push(ImputationRow {
                survey,
                variable,
                label,
                imputed_blocks: logs.iter().map(|t| t.log.imputed_rows.len()).sum(),
                fallbacks: logs.iter().map(|t| t.log.fallbacks.len()).sum(),
                max_sweeps: logs.iter().map(|t| t.log.sweeps).max().unwrap_or(0),
                all_converged: logs.iter().all(|t| t.log.converged),
            });
            report.forecasts.extend(built.forecasts);
        }
    }
}

/// One line of a paired-difference summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: InclusionStrategy,
    pub technique: Technique,
    /// Fixed weighting for head-to-head rows; `None` when weightings are compared.
    pub weighting: Option<Weighting>,
    /// Fixed label when weightings are compared.
    pub label: Option<EnsembleLabel>,
    pub comparison: String,
    pub variable: Variable,
    pub n: usize,
    pub mean_difference: Option<f64>,
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub runs: Vec<EvaluationReport>,
    /// Chimeric minus computational (and the other label pairs) per configuration.
    pub head_to_head: Vec<SummaryRow>,
    /// Performance minus equal weighting per label.
    pub weighting_effect: Vec<SummaryRow>,
}

fn summary(rows: &[PairedRow], test: Option<&PairedTestResult>) -> (usize, Option<f64>, Option<f64>, Option<f64>) {
    let n = rows.len();
    let mean = (n > 0).then(|| rows.iter().map(|r| r.difference).sum::<f64>() / n as f64);
    (n, mean, test.map(|t| t.t_statistic), test.map(|t| t.p_value_one_sided))
}

/// Runs every strategy × technique × weighting combination on the same data.
pub fn run_sweep(
    config: &RunConfig,
    data: &LoadedData,
    strategies: &[InclusionStrategy],
    techniques: &[Technique],
    weightings: &[Weighting],
) -> anyhow::Result<SweepReport> {
    config.validate()?;
    let surveys = prepare_surveys(config, data)?;
    let combos: Vec<(InclusionStrategy, Technique, Weighting)> = strategies
        .iter()
        .flat_map(|&s| techniques.iter().flat_map(move |&t| weightings.iter().map(move |&w| (s, t, w))))
        .collect();
    let runs: Vec<EvaluationReport> = combos
        .par_iter()
        .map(|&(strategy, technique, weighting)| {
            let cfg = RunConfig {
                strategy,
                weighting,
                imputer: ImputerConfig {
                    technique,
                    ..config.imputer.clone()
                },
                ..config.clone()
            };
            run_prepared(&cfg, data, &surveys)
                .with_context(|| format!("{} / {} / {}", strategy.name(), technique.name(), weighting.name()))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut head_to_head = Vec::new();
    for run in &runs {
        for c in &run.comparisons {
            let (n, mean, t, p) = summary(&c.rows, c.test.as_ref());
            head_to_head.push(SummaryRow {
                strategy: run.strategy,
                technique: run.technique,
                weighting: Some(run.weighting),
                label: None,
                comparison: c.name(),
                variable: c.variable.clone(),
                n,
                mean_difference: mean,
                t_statistic: t,
                p_value: p,
            });
        }
    }

    let mut weighting_effect = Vec::new();
    let find = |s, t, w| runs.iter().find(|r| r.strategy == s && r.technique == t && r.weighting == w);
    for &s in strategies {
        for &t in techniques {
            let (Some(perf), Some(eq)) = (find(s, t, Weighting::Performance), find(s, t, Weighting::Equal)) else {
                continue;
            };
            let variables: BTreeSet<Variable> = perf.scores.iter().map(|r| r.variable.clone()).collect();
            for &label in &config.ensembles {
                for v in &variables {
                    let (rows, test) = paired(&scored(&perf.scores, label, v), &scored(&eq.scores, label, v));
                    let (n, mean, tt, p) = summary(&rows, test.as_ref());
                    weighting_effect.push(SummaryRow {
                        strategy: s,
                        technique: t,
                        weighting: None,
                        label: Some(label),
                        comparison: "performance-minus-equal".to_string(),
                        variable: v.clone(),
                        n,
                        mean_difference: mean,
                        t_statistic: tt,
                        p_value: p,
                    });
                }
            }
        }
    }
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        runs,
        head_to_head,
        weighting_effect,
    })
}
