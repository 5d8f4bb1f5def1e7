use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chimeric_cli::config::{CutoffMode, RunConfig, SourceKind, SourceSpec, SurveySpec, Weighting};
use chimeric_cli::io::DatedForecast;
use chimeric_cli::pipeline::{build_survey, load_data, prepare_surveys, run_with_data, LoadedData};
use chimeric_core::{
    assemble_matrices, quantile_average, weighted_interval_score, EnsembleLabel, ImputerConfig, InclusionStrategy,
    Provenance, QuantileForecast, QuantileLevelSet, Target, TargetKey, Technique, TruthSet, Variable, WeightVector,
};
use chrono::{Duration, NaiveDate, TimeZone, Utc};

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn key(end: NaiveDate) -> TargetKey {
    TargetKey {
        target_end_date: end,
        variable: Variable::IncidentCases,
        location: "US".into(),
    }
}

fn survey(index: usize, monday: &str) -> SurveySpec {
    let d = date(monday);
    SurveySpec {
        index,
        cutoff: Utc.from_utc_datetime(&d.and_hms_opt(23, 59, 59).unwrap()),
        close: None,
        hub_forecast_date: Some(d),
        window_start: None,
        targets: vec![key(d + Duration::days(12))],
    }
}

fn config(surveys: Vec<SurveySpec>, strategy: InclusionStrategy, weighting: Weighting) -> RunConfig {
    RunConfig {
        sources: vec![SourceSpec {
            path: PathBuf::from("unused.csv"),
            kind: SourceKind::HubCsv,
        }],
        truth_path: PathBuf::from("unused.csv"),
        surveys,
        ensembles: EnsembleLabel::ALL.to_vec(),
        strategy,
        strict_joint_spotty: false,
        imputer: ImputerConfig::default(),
        weighting,
        de: Default::default(),
        cutoff_mode: CutoffMode::Hub,
        output_dir: PathBuf::from("unused"),
    }
}

/// A forecast centred on `centre` with a fixed spread on the case levels.
fn forecast(model: &str, monday: &str, centre: f64, spread: f64) -> DatedForecast {
    let d = date(monday);
    let levels = QuantileLevelSet::case();
    let values = levels.levels().iter().map(|p| centre + spread * (p - 0.5)).collect();
    DatedForecast {
        forecast_date: d,
        forecast: QuantileForecast::new(
            model,
            Target::from_forecast_date(Variable::IncidentCases, "US", d, 2).unwrap(),
            levels,
            values,
            Provenance::Computational,
        )
        .unwrap(),
    }
}

const MONDAYS: [&str; 5] = ["2021-01-11", "2021-02-08", "2021-03-08", "2021-04-12", "2021-05-10"];
const TRUTHS: [f64; 5] = [1_500_000.0, 800_000.0, 450_000.0, 480_000.0, 300_000.0];

fn truths(n: usize) -> TruthSet {
    let mut t = TruthSet::new();
    for (m, y) in MONDAYS.iter().zip(TRUTHS).take(n) {
        t.insert(key(date(m) + Duration::days(12)), y).unwrap();
    }
    t
}

fn data(hub: Vec<DatedForecast>, n: usize) -> LoadedData {
    LoadedData {
        hub,
        truths: truths(n),
        ..Default::default()
    }
}

fn bundled() -> (RunConfig, LoadedData) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/config.toml");
    let config = RunConfig::load(&path).unwrap();
    let data = load_data(&config).unwrap();
    (config, data)
}

#[test]
fn two_surveys_two_models_structure() {
    let hub = (0..2)
        .flat_map(|s| {
            [
                forecast("a", MONDAYS[s], TRUTHS[s] * 1.1, 200_000.0),
                forecast("b", MONDAYS[s], TRUTHS[s] * 0.8, 300_000.0),
            ]
        })
        .collect();
    let cfg = config(
        vec![survey(1, MONDAYS[0]), survey(2, MONDAYS[1])],
        InclusionStrategy::CompleteCase,
        Weighting::Equal,
    );
    let report = run_with_data(&cfg, &data(hub, 2)).unwrap();
    let scored: Vec<_> = report
        .scores
        .iter()
        .filter(|r| r.label == EnsembleLabel::Computational && r.wis.is_some())
        .collect();
    assert_eq!(scored.len(), 2);
    let table: Vec<_> = report
        .comparisons
        .iter()
        .filter(|c| c.a == EnsembleLabel::Chimeric && c.b == EnsembleLabel::Computational)
        .collect();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].rows.len(), 2);
    // No human rows: those tables are present but empty.
    assert!(report
        .comparisons
        .iter()
        .filter(|c| c.a == EnsembleLabel::Human || c.b == EnsembleLabel::Human)
        .all(|c| c.rows.is_empty()));
}

#[test]
fn performance_weights_pick_the_exact_model() {
    let hub: Vec<DatedForecast> = (0..5)
        .flat_map(|s| {
            [
                forecast("exact", MONDAYS[s], TRUTHS[s], 0.0),
                forecast("offset", MONDAYS[s], TRUTHS[s] + 150_000.0, 400_000.0),
            ]
        })
        .collect();
    let surveys: Vec<SurveySpec> = MONDAYS.iter().enumerate().map(|(i, m)| survey(i + 1, m)).collect();
    let mut runs = Vec::new();
    for w in Weighting::ALL {
        let mut cfg = config(surveys.clone(), InclusionStrategy::SpottyMemory, w);
        cfg.ensembles = vec![EnsembleLabel::Computational];
        runs.push(run_with_data(&cfg, &data(hub.clone(), 5)).unwrap());
    }
    let (equal, perf) = (&runs[0], &runs[1]);
    let last = |r: &chimeric_cli::pipeline::EvaluationReport| {
        r.scores.iter().find(|s| s.survey == 5).and_then(|s| s.wis).unwrap()
    };
    assert!(last(perf) <= last(equal), "{} > {}", last(perf), last(equal));

    // A fine grid over the two weights puts everything on the exact model; the fit must
    // lean the same way and beat equal weights in sample.
    let fit = perf.weights.iter().find(|w| w.survey == 5).unwrap();
    let history: Vec<&DatedForecast> = hub.iter().filter(|f| f.forecast_date < date(MONDAYS[4])).collect();
    let objective = |wa: f64| {
        let mut total = 0.0;
        for s in 0..4 {
            let pair: Vec<QuantileForecast> = history
                .iter()
                .filter(|f| f.forecast_date == date(MONDAYS[s]))
                .map(|f| f.forecast.clone())
                .collect();
            let (m, _) = assemble_matrices(&pair, &TruthSet::new()).unwrap();
            let order: Vec<&str> = m.model_ids().collect();
            let w = if order[0] == "exact" { vec![wa, 1.0 - wa] } else { vec![1.0 - wa, wa] };
            let ens = quantile_average(&m, &WeightVector::new(w).unwrap(), EnsembleLabel::Computational).unwrap();
            let t = &ens.targets[0];
            let f = QuantileForecast::new("e", t.target.clone(), t.levels.clone(), t.values.clone(), Provenance::Computational)
                .unwrap();
            total += weighted_interval_score(&f, TRUTHS[s]).unwrap();
        }
        total / 4.0
    };
    let (best_w, best) = (0..=1000)
        .map(|i| (i as f64 / 1000.0, objective(i as f64 / 1000.0)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(best_w, 1.0);
    assert_eq!(best, 0.0);
    let exact = fit.models.iter().position(|m| m == "exact").unwrap();
    let got = fit.in_sample_wis.unwrap();
    assert!((got - objective(fit.weights[exact])).abs() <= 1e-9 * (1.0 + got));
    assert!(got < objective(0.5), "fit {got} vs equal {}", objective(0.5));
    assert!(fit.weights[exact] > 0.5, "{fit:?}");
}

#[test]
fn defer_to_crowd_without_humans_matches_spotty_memory() {
    let hub: Vec<DatedForecast> = (0..4)
        .flat_map(|s| {
            let mut v = vec![
                forecast("a", MONDAYS[s], TRUTHS[s] * 1.1, 200_000.0),
                forecast("b", MONDAYS[s], TRUTHS[s] * 0.9, 250_000.0),
            ];
            // `c` skips the first survey only, so nobody misses a current target.
            if s > 0 {
                v.push(forecast("c", MONDAYS[s], TRUTHS[s] * 1.3, 100_000.0));
            }
            v
        })
        .collect();
    let surveys: Vec<SurveySpec> = MONDAYS[..4].iter().enumerate().map(|(i, m)| survey(i + 1, m)).collect();
    for w in Weighting::ALL {
        let run = |s| run_with_data(&config(surveys.clone(), s, w), &data(hub.clone(), 4)).unwrap();
        let (defer, spotty) = (run(InclusionStrategy::DeferToCrowd), run(InclusionStrategy::SpottyMemory));
        assert_eq!(defer.scores, spotty.scores);
        assert_eq!(defer.weights, spotty.weights);
        assert_eq!(defer.forecasts, spotty.forecasts);
        assert_eq!(defer.comparisons, spotty.comparisons);
    }
}

#[test]
fn chimeric_rows_are_the_union_of_both_sources() {
    let (cfg, data) = bundled();
    let surveys = prepare_surveys(&cfg, &data).unwrap();
    let everything: Vec<QuantileForecast> = surveys.iter().flat_map(|s| s.forecasts.clone()).collect();
    let rows = |label: EnsembleLabel| -> BTreeSet<String> {
        let admitted: Vec<QuantileForecast> = everything.iter().filter(|f| label.admits(f.provenance)).cloned().collect();
        let (m, _) = assemble_matrices(&admitted, &data.truths).unwrap();
        m.model_ids().map(String::from).collect()
    };
    let comp = rows(EnsembleLabel::Computational);
    let human = rows(EnsembleLabel::Human);
    assert!(comp.is_disjoint(&human));
    assert!(!comp.is_empty() && !human.is_empty());
    let union: BTreeSet<String> = comp.union(&human).cloned().collect();
    assert_eq!(rows(EnsembleLabel::Chimeric), union);

    // With defer-to-crowd nobody present is filtered, so the built chimeric matrix keeps every current forecaster.
    let mut cfg = cfg;
    cfg.strategy = InclusionStrategy::DeferToCrowd;
    let last = surveys.len() - 1;
    let built = build_survey(&cfg, &surveys, last, &data.truths).unwrap();
    let ids = |label| -> BTreeSet<String> {
        built
            .iter()
            .filter(|o| o.label == label)
            .filter_map(|o| o.result.as_ref().ok())
            .flat_map(|b| b.filtered.model_ids().map(String::from).collect::<Vec<_>>())
            .collect()
    };
    let joint: BTreeSet<String> = ids(EnsembleLabel::Computational).union(&ids(EnsembleLabel::Human)).cloned().collect();
    assert_eq!(ids(EnsembleLabel::Chimeric), joint);
}

#[test]
fn future_truths_do_not_move_weights() {
    let (mut cfg, data) = bundled();
    cfg.weighting = Weighting::Performance;
    cfg.imputer.technique = Technique::BayesianRidge;
    let surveys = prepare_surveys(&cfg, &data).unwrap();
    for pos in 1..surveys.len() {
        let cutoff = surveys[pos].cutoff_date;
        let clean = build_survey(&cfg, &surveys, pos, &data.truths).unwrap();
        let mut poisoned = TruthSet::new();
        for (k, y) in data.truths.iter() {
            let y = if k.target_end_date >= cutoff { y * 1000.0 + 7.0 } else { y };
            poisoned.insert(k.clone(), y).unwrap();
        }
        let dirty = build_survey(&cfg, &surveys, pos, &poisoned).unwrap();
        assert_eq!(clean.len(), dirty.len());
        for (a, b) in clean.iter().zip(&dirty) {
            match (&a.result, &b.result) {
                (Ok(a), Ok(b)) => {
                    let bits = |w: &WeightVector| w.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    assert_eq!(bits(&a.weights), bits(&b.weights));
                    assert!(a.training_targets.iter().all(|k| k.target_end_date < cutoff));
                }
                (Err(a), Err(b)) => assert_eq!(a, b),
                _ => panic!("poisoning changed which ensembles were built"),
            }
        }
    }
}

#[test]
fn evaluation_is_deterministic_across_thread_counts() {
    let (mut cfg, data) = bundled();
    cfg.weighting = Weighting::Performance;
    cfg.imputer.technique = Technique::ExtraTrees;
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_with_data(&cfg, &data).unwrap());
    let b = four.install(|| run_with_data(&cfg, &data).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn survey_close_admits_late_revisions() {
    let (mut cfg, data) = bundled();
    let hub_mode = prepare_surveys(&cfg, &data).unwrap();
    cfg.cutoff_mode = CutoffMode::SurveyClose;
    let close_mode = prepare_surveys(&cfg, &data).unwrap();
    let humans = |s: &[chimeric_cli::pipeline::SurveyInputs]| -> usize {
        s.iter().map(|x| x.forecasts.iter().filter(|f| f.provenance.is_human()).count()).sum()
    };
    assert!(humans(&close_mode) >= humans(&hub_mode));
    // The first survey closed six days after the hub deadline, and some revisions land in that gap.
    let values = |s: &chimeric_cli::pipeline::SurveyInputs| -> Vec<Vec<u64>> {
        s.forecasts
            .iter()
            .filter(|f| f.provenance.is_human())
            .map(|f| f.values.iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    assert_ne!(values(&close_mode[0]), values(&hub_mode[0]));
}
