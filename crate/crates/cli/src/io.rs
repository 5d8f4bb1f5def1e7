//! Readers for hub quantile CSVs, daily truth CSVs and elicitation JSONL.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chimeric_core::elicitation::ElicitedDistribution;
use chimeric_core::types::week_ending_saturday;
use chimeric_core::{Provenance, QuantileForecast, QuantileLevelSet, Target, TargetKey, TruthSet, Variable};
use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// A rejected input record and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub source: String,
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.source, self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedForecast {
    pub forecast_date: NaiveDate,
    pub forecast: QuantileForecast,
}

#[derive(Debug, Clone, Default)]
pub struct HubParse {
    pub forecasts: Vec<DatedForecast>,
    pub diagnostics: Vec<Diagnostic>,
}

const HUB_COLUMNS: [&str; 7] = [
    "forecast_date",
    "target",
    "target_end_date",
    "location",
    "type",
    "quantile",
    "value",
];

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Model id from a hub file name such as `2021-01-11-TeamA-Model.csv`.
pub fn model_id_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    if stem.len() > 11 && NaiveDate::parse_from_str(&stem[..10], "%Y-%m-%d").is_ok() {
        stem[11..].to_string()
    } else {
        stem.to_string()
    }
}

/// Parses `"2 wk ahead inc case"` into a horizon and variable.
pub fn parse_hub_target(label: &str) -> Option<(u32, Variable)> {
    let mut parts = label.split_whitespace();
    let horizon: u32 = parts.next()?.parse().ok()?;
    if parts.next()? != "wk" || parts.next()? != "ahead" {
        return None;
    }
    let rest: Vec<&str> = parts.collect();
    if rest.is_empty() || horizon == 0 {
        return None;
    }
    rest.join(" ").parse().ok().map(|v| (horizon, v))
}

pub fn parse_hub_quantile_csv(path: &Path) -> Result<HubParse, IngestError> {
    let file = open(path)?;
    parse_hub_quantile_reader(file, &path.display().to_string(), &model_id_from_path(path))
        .map_err(|e| match e {
            IngestError::MissingColumn { column, .. } => IngestError::MissingColumn {
                path: path.to_path_buf(),
                column,
            },
            IngestError::Csv { source, .. } => IngestError::Csv {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
}

type GroupKey = (String, NaiveDate, Target);

/// Parses hub rows from any reader. A `model` column, when present, overrides
/// `default_model`.
pub fn parse_hub_quantile_reader<R: Read>(
    reader: R,
    source: &str,
    default_model: &str,
) -> Result<HubParse, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e| IngestError::Csv {
        path: PathBuf::from(source),
        source: e,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = HashMap::new();
    for name in HUB_COLUMNS {
        let i = col(name).ok_or_else(|| IngestError::MissingColumn {
            path: PathBuf::from(source),
            column: name.to_string(),
        })?;
        idx.insert(name, i);
    }
    let model_col = col("model");

    let mut diagnostics = Vec::new();
    let mut forecasts = Vec::new();
    let mut diag = |line: u64, message: String| {
        diagnostics.push(Diagnostic {
            source: source.to_string(),
            line,
            message,
        })
    };
    // group -> (first line, level -> value)
    let mut groups: BTreeMap<GroupKey, (u64, BTreeMap<u64, (f64, f64)>)> = BTreeMap::new();
    let mut order: Vec<GroupKey> = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diag(line, format!("unreadable row: {e}"));
                continue;
            }
        };
        let field = |name: &str| record.get(idx[name]).unwrap_or("");
        if field("type") == "point" {
            continue;
        }
        if field("type") != "quantile" {
            diag(line, format!("unknown row type `{}`", field("type")));
            continue;
        }
        let Ok(forecast_date) = NaiveDate::parse_from_str(field("forecast_date"), "%Y-%m-%d") else {
            diag(line, format!("bad forecast_date `{}`", field("forecast_date")));
            continue;
        };
        let Ok(end) = NaiveDate::parse_from_str(field("target_end_date"), "%Y-%m-%d") else {
            diag(line, format!("bad target_end_date `{}`", field("target_end_date")));
            continue;
        };
        let Some((horizon, variable)) = parse_hub_target(field("target")) else {
            diag(line, format!("unrecognized target `{}`", field("target")));
            continue;
        };
        if week_ending_saturday(forecast_date, horizon) != end {
            diag(
                line,
                format!("target_end_date {end} does not match {horizon} wk ahead of {forecast_date}"),
            );
            continue;
        }
        let level: f64 = match field("quantile").parse() {
            Ok(q) if q > 0.0 && q < 1.0 => q,
            _ => {
                diag(line, format!("bad quantile `{}`", field("quantile")));
                continue;
            }
        };
        let value: f64 = match field("value").parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                diag(line, format!("bad value `{}`", field("value")));
                continue;
            }
        };
        let model = model_col
            .and_then(|c| record.get(c))
            .filter(|m| !m.is_empty())
            .unwrap_or(default_model)
            .to_string();
        let target = Target::new(variable, field("location"), end, horizon).expect("horizon checked");
        let key = (model, forecast_date, target);
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (line, BTreeMap::new())
        });
        // Levels are keyed on a fixed grid so 0.5 and 0.50 collide.
        let level_key = (level * 1e9).round() as u64;
        if entry.1.contains_key(&level_key) {
            diag(line, format!("duplicate level {level}; row rejected"));
            continue;
        }
        entry.1.insert(level_key, (level, value));
    }

    for key in order {
        let (line, cells) = groups.remove(&key).expect("group recorded");
        let (model, forecast_date, target) = key;
        let levels: Vec<f64> = cells.values().map(|c| c.0).collect();
        let values: Vec<f64> = cells.values().map(|c| c.1).collect();
        let levels = match QuantileLevelSet::new(levels) {
            Ok(l) => l,
            Err(e) => {
                diag(line, format!("{model} {target}: {e}"));
                continue;
            }
        };
        if let Some(required) = QuantileLevelSet::for_variable(&target.variable) {
            if !levels.matches(&required) {
                diag(
                    line,
                    format!(
                        "{model} {target}: expected {} quantile levels, found {}",
                        required.len(),
                        levels.len()
                    ),
                );
                continue;
            }
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            diag(line, format!("{model} {target}: quantiles non-monotone at index {}", i + 1));
            continue;
        }
        let forecast = QuantileForecast::new(model, target, levels, values, Provenance::Computational)
            .expect("lengths agree");
        forecasts.push(DatedForecast {
            forecast_date,
            forecast,
        });
    }
    Ok(HubParse {
        forecasts,
        diagnostics,
    })
}

/// Daily observations keyed by (location, variable).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DailyTruth {
    series: BTreeMap<(String, Variable), BTreeMap<NaiveDate, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialWeek {
    pub key: TargetKey,
    pub missing_days: Vec<NaiveDate>,
}

#[derive(Debug, Clone, Default)]
pub struct TruthParse {
    pub daily: DailyTruth,
    pub truths: TruthSet,
    pub partial_weeks: Vec<PartialWeek>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DailyTruth {
    pub fn insert(&mut self, location: &str, variable: Variable, date: NaiveDate, value: f64) -> bool {
        self.series
            .entry((location.to_string(), variable))
            .or_default()
            .insert(date, value)
            .is_none()
    }

    /// Sum over the seven days ending on `key.target_end_date`.
    pub fn weekly(&self, key: &TargetKey) -> Result<f64, PartialWeek> {
        let days = self.series.get(&(key.location.clone(), key.variable.clone()));
        let mut total = 0.0;
        let mut missing = Vec::new();
        for back in (0..7).rev() {
            let d = key.target_end_date - Duration::days(back);
            match days.and_then(|s| s.get(&d)) {
                Some(v) => total += v,
                None => missing.push(d),
            }
        }
        if missing.is_empty() {
            Ok(total)
        } else {
            Err(PartialWeek {
                key: key.clone(),
                missing_days: missing,
            })
        }
    }

    /// Weekly truths for every Saturday whose week overlaps the data. Weeks with gaps
    /// are reported rather than summed.
    pub fn weekly_truths(&self) -> (TruthSet, Vec<PartialWeek>) {
        let mut truths = TruthSet::new();
        let mut partial = Vec::new();
        for ((location, variable), days) in &self.series {
            let (Some(first), Some(last)) = (days.keys().next(), days.keys().next_back()) else {
                continue;
            };
            let mut end = *first;
            while end.weekday() != Weekday::Sat {
                end += Duration::days(1);
            }
            let mut ends = Vec::new();
            while end - Duration::days(6) <= *last {
                ends.push(end);
                end += Duration::days(7);
            }
            for end in ends {
                let key = TargetKey {
                    target_end_date: end,
                    variable: variable.clone(),
                    location: location.clone(),
                };
                match self.weekly(&key) {
                    Ok(v) => {
                        truths.insert(key, v).expect("weeks are distinct");
                    }
                    Err(p) => partial.push(p),
                }
            }
        }
        (truths, partial)
    }
}

pub fn parse_truth_csv(path: &Path) -> Result<TruthParse, IngestError> {
    let file = open(path)?;
    parse_truth_reader(file, &path.display().to_string())
}

pub fn parse_truth_reader<R: Read>(reader: R, source: &str) -> Result<TruthParse, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Csv {
            path: PathBuf::from(source),
            source: e,
        })?
        .clone();
    let mut idx = HashMap::new();
    for name in ["date", "location", "variable", "value"] {
        let i = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                path: PathBuf::from(source),
                column: name.to_string(),
            })?;
        idx.insert(name, i);
    }
    let mut out = TruthParse::default();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let mut reject = |message: String| {
            out.diagnostics.push(Diagnostic {
                source: source.to_string(),
                line,
                message,
            })
        };
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                reject(format!("unreadable row: {e}"));
                continue;
            }
        };
        let field = |name: &str| record.get(idx[name]).unwrap_or("");
        let Ok(date) = NaiveDate::parse_from_str(field("date"), "%Y-%m-%d") else {
            reject(format!("bad date `{}`", field("date")));
            continue;
        };
        let Ok(variable) = field("variable").parse::<Variable>() else {
            reject(format!("bad variable `{}`", field("variable")));
            continue;
        };
        let value = match field("value").parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                reject(format!("bad value `{}`", field("value")));
                continue;
            }
        };
        if !out.daily.insert(field("location"), variable, date, value) {
            reject(format!("duplicate observation for {date}"));
        }
    }
    let (truths, partial) = out.daily.weekly_truths();
    out.truths = truths;
    out.partial_weeks = partial;
    Ok(out)
}

/// One elicitation line. The horizon is not part of the record; it is fixed later by
/// the survey the question belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationRecord {
    pub forecaster_id: String,
    pub target: TargetKey,
    pub submitted_at: DateTime<Utc>,
    #[serde(flatten)]
    pub distribution: ElicitedDistribution,
}

impl ElicitationRecord {
    pub fn provenance(&self) -> Provenance {
        self.distribution.provenance()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ElicitationParse {
    pub records: Vec<ElicitationRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_elicitation_jsonl(path: &Path) -> Result<ElicitationParse, IngestError> {
    let file = open(path)?;
    parse_elicitation_reader(BufReader::new(file), &path.display().to_string()).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_elicitation_reader<R: BufRead>(reader: R, source: &str) -> std::io::Result<ElicitationParse> {
    let mut out = ElicitationParse::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ElicitationRecord>(&line) {
            Ok(r) => out.records.push(r),
            Err(e) => out.diagnostics.push(Diagnostic {
                source: source.to_string(),
                line: i as u64 + 1,
                message: format!("invalid submission: {e}"),
            }),
        }
    }
    Ok(out)
}

pub fn write_elicitation_jsonl<W: std::io::Write>(mut w: W, records: &[ElicitationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes forecasts in hub format with a leading `model` column.
pub fn write_hub_csv<W: std::io::Write>(w: W, forecasts: &[DatedForecast]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "forecast_date", "target", "target_end_date", "location", "type", "quantile", "value"])?;
    for f in forecasts {
        let q = &f.forecast;
        let label = format!("{} wk ahead {}", q.target.horizon_weeks, q.target.variable.hub_label());
        for (level, value) in q.levels.levels().iter().zip(&q.values) {
            wtr.write_record([
                q.model_id.as_str(),
                &f.forecast_date.to_string(),
                &label,
                &q.target.target_end_date.to_string(),
                &q.target.location,
                "quantile",
                &format_level(*level),
                &value.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Levels are printed with at most three decimals, as in hub files.
pub fn format_level(level: f64) -> String {
    let s = format!("{level:.3}");
    s.trim_end_matches('0').to_string()
}
