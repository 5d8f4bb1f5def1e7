//! Synthetic stand-in for the six-survey study: daily truths, hub-style computational
//! forecasts and human elicitations with realistic gaps.

use std::fs;
use std::path::Path;

use anyhow::Context;
use chimeric_core::elicitation::{ElicitedDistribution, IntervalHistogram, LogisticComponent, LogisticMixture};
use chimeric_core::types::week_ending_saturday;
use chimeric_core::{Provenance, QuantileForecast, QuantileLevelSet, Target, TargetKey, Variable};
use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::io::{write_elicitation_jsonl, write_hub_csv, DatedForecast, ElicitationRecord};

pub const BUNDLED_SEED: u64 = 2021;
pub const N_COMPUTATIONAL: usize = 20;
pub const N_METACULUS: usize = 25;
pub const N_GJO: usize = 15;
const LOCATION: &str = "US";
const HORIZON: u32 = 2;

/// Hub due dates (Mondays) and how many days after each the survey closed.
const SURVEYS: [((i32, u32, u32), i64); 6] = [
    ((2021, 1, 11), 6),
    ((2021, 2, 8), 0),
    ((2021, 3, 8), 0),
    ((2021, 4, 12), 1),
    ((2021, 5, 10), 1),
    ((2021, 6, 7), 2),
];

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn start() -> NaiveDate {
    date(2020, 12, 27)
}

fn end() -> NaiveDate {
    date(2021, 7, 3)
}

fn variables() -> [Variable; 2] {
    [Variable::IncidentCases, Variable::IncidentDeaths]
}

/// Smooth daily level for day `d` after the series start.
fn daily_level(variable: &Variable, d: f64) -> f64 {
    match variable {
        Variable::IncidentCases => 240_000.0 * (-d / 45.0).exp() + 30_000.0 + 25_000.0 * (-((d - 100.0) / 15.0).powi(2)).exp(),
        _ => 3_000.0 * (-((d - 20.0) / 50.0).powi(2)).exp() + 300.0,
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn cutoff_of(hub: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&hub.and_hms_opt(23, 59, 59).expect("valid time"))
}

struct Generator {
    rng: ChaCha8Rng,
    std: Normal<f64>,
}

impl Generator {
    fn normal(&mut self) -> f64 {
        self.std.sample(&mut self.rng)
    }
}

/// Daily observations as `(date, variable, value)`.
fn daily_truth(g: &mut Generator) -> Vec<(NaiveDate, Variable, f64)> {
    let mut out = Vec::new();
    let mut day = start();
    while day <= end() {
        let d = (day - start()).num_days() as f64;
        let weekend = matches!(day.weekday(), Weekday::Sat | Weekday::Sun);
        for v in variables() {
            let dow = if weekend { 0.8 } else { 1.08 };
            let noise = (0.05 * g.normal()).exp();
            out.push((day, v.clone(), (daily_level(&v, d) * dow * noise).round()));
        }
        day += Duration::days(1);
    }
    out
}

fn weekly(daily: &[(NaiveDate, Variable, f64)], variable: &Variable, end: NaiveDate) -> f64 {
    daily
        .iter()
        .filter(|(d, v, _)| v == variable && *d <= end && *d > end - Duration::days(7))
        .map(|(_, _, x)| x)
        .sum()
}

struct Forecaster {
    id: String,
    bias: f64,
    noise: f64,
    spread: f64,
    participation: f64,
}

fn computational(g: &mut Generator) -> Vec<Forecaster> {
    (1..=N_COMPUTATIONAL)
        .map(|i| Forecaster {
            id: format!("team-{i:02}"),
            bias: 0.08 * g.normal(),
            noise: g.rng.random_range(0.05..0.2),
            spread: g.rng.random_range(0.05..0.25),
            participation: g.rng.random_range(0.35..0.95),
        })
        .collect()
}

fn humans(g: &mut Generator) -> Vec<Forecaster> {
    let ids = (1..=N_METACULUS)
        .map(|i| format!("metaculus-{i:02}"))
        .chain((1..=N_GJO).map(|i| format!("gjo-{i:02}")));
    ids.collect::<Vec<_>>()
        .into_iter()
        .map(|id| Forecaster {
            id,
            bias: 0.1 * g.normal(),
            noise: g.rng.random_range(0.08..0.3),
            spread: g.rng.random_range(0.08..0.25),
            participation: g.rng.random_range(0.1..0.65),
        })
        .collect()
}

fn hub_forecasts(
    g: &mut Generator,
    models: &[Forecaster],
    daily: &[(NaiveDate, Variable, f64)],
) -> Vec<DatedForecast> {
    let mut out = Vec::new();
    for &((y, m, d), _) in &SURVEYS {
        let monday = date(y, m, d);
        for f in models {
            if g.rng.random::<f64>() >= f.participation {
                continue;
            }
            // Some teams also post a revision the next day; only the due date counts.
            let dates: Vec<NaiveDate> = if g.rng.random::<f64>() < 0.2 {
                vec![monday, monday + Duration::days(1)]
            } else {
                vec![monday]
            };
            for fd in dates {
                for v in variables() {
                    let levels = QuantileLevelSet::for_variable(&v).expect("standard variable");
                    for h in 1..=4 {
                        let target = Target::from_forecast_date(v.clone(), LOCATION, fd, h).expect("positive horizon");
                        let truth = weekly(daily, &v, target.target_end_date);
                        let scale = (f64::from(h) / 2.0).sqrt();
                        let centre = truth.ln() + f.bias + f.noise * scale * g.normal();
                        let values: Vec<f64> = levels
                            .levels()
                            .iter()
                            .map(|&p| (centre + 0.6 * f.spread * scale * logit(p)).exp().round())
                            .collect();
                        let forecast =
                            QuantileForecast::new(f.id.clone(), target, levels.clone(), values, Provenance::Computational)
                                .expect("lengths agree");
                        out.push(DatedForecast {
                            forecast_date: fd,
                            forecast,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Whole-percent bin probabilities from a logistic belief, summing to exactly 100.
fn histogram(breaks: &[f64], loc: f64, scale: f64) -> Vec<f64> {
    let cdf = |x: f64| 1.0 / (1.0 + (-(x - loc) / scale).exp());
    let total = cdf(breaks[breaks.len() - 1]) - cdf(breaks[0]);
    let raw: Vec<f64> = breaks.windows(2).map(|w| 100.0 * (cdf(w[1]) - cdf(w[0])) / total).collect();
    let mut counts: Vec<u32> = raw.iter().map(|r| r.floor() as u32).collect();
    let mut short = 100 - counts.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())));
    for i in order {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts.iter().map(|&c| f64::from(c) / 100.0).collect()
}

fn human_submissions(
    g: &mut Generator,
    people: &[Forecaster],
    daily: &[(NaiveDate, Variable, f64)],
) -> Vec<ElicitationRecord> {
    let mut out = Vec::new();
    for (s, &((y, m, d), close_days)) in SURVEYS.iter().enumerate() {
        let monday = date(y, m, d);
        let cutoff = cutoff_of(monday);
        let open = cutoff - Duration::days(10);
        let close = cutoff + Duration::days(close_days);
        for p in people {
            let gjo = p.id.starts_with("gjo");
            // Good Judgment Open joined from the second survey on.
            if gjo && s == 0 {
                continue;
            }
            for v in variables() {
                if g.rng.random::<f64>() >= p.participation {
                    continue;
                }
                let end = week_ending_saturday(monday, HORIZON);
                let truth = weekly(daily, &v, end);
                let upper = (3.0 * truth / 1000.0).round() * 1000.0;
                let revisions = g.rng.random_range(1..=3);
                let span = (cutoff - open).num_seconds();
                let late_span = (close - cutoff).num_seconds();
                // Where the survey outlived the hub deadline, some forecasters only answer
                // in that gap and others revise in it.
                let late_only = late_span > 0 && g.rng.random::<f64>() < 0.3;
                let mut times: Vec<DateTime<Utc>> = (0..revisions)
                    .map(|_| {
                        if late_only {
                            cutoff + Duration::seconds(g.rng.random_range(1..=late_span))
                        } else {
                            open + Duration::seconds(g.rng.random_range(0..span))
                        }
                    })
                    .collect();
                if late_span > 0 && !late_only && g.rng.random::<f64>() < 0.2 {
                    times.push(cutoff + Duration::seconds(g.rng.random_range(1..=late_span)));
                }
                times.sort();
                times.dedup();
                let mut centre = truth.ln() + p.bias + p.noise * g.normal();
                for t in times {
                    centre += 0.03 * g.normal();
                    let loc = centre.exp().min(0.9 * upper);
                    let scale = p.spread * loc;
                    let distribution = if gjo {
                        let breaks: Vec<f64> = (0..=8).map(|k| upper * f64::from(k) / 8.0).collect();
                        ElicitedDistribution::IntervalHistogram(
                            IntervalHistogram::new(breaks.clone(), histogram(&breaks, loc, scale)).expect("valid histogram"),
                        )
                    } else {
                        let mut components = vec![LogisticComponent {
                            location: loc,
                            scale,
                            weight: 1.0,
                        }];
                        if g.rng.random::<f64>() < 0.4 {
                            let shift = if g.rng.random::<bool>() { 1.2 } else { 0.8 };
                            components[0].weight = 0.7;
                            components.push(LogisticComponent {
                                location: loc * shift,
                                scale: 1.5 * scale,
                                weight: 0.3,
                            });
                        }
                        ElicitedDistribution::LogisticMixture(
                            LogisticMixture::new(components, 0.0, upper).expect("valid mixture"),
                        )
                    };
                    out.push(ElicitationRecord {
                        forecaster_id: p.id.clone(),
                        target: TargetKey {
                            target_end_date: end,
                            variable: v.clone(),
                            location: LOCATION.to_string(),
                        },
                        submitted_at: t,
                        distribution,
                    });
                }
            }
        }
    }
    out
}

fn config_toml() -> String {
    let mut s = String::from(
        "# Synthetic six-survey study.\n\
         truth_path = \"truth.csv\"\n\
         output_dir = \"out\"\n\
         ensembles = [\"computational\", \"human\", \"chimeric\"]\n\
         strategy = \"spotty-memory\"\n\
         weighting = \"equal\"\n\
         cutoff_mode = \"hub\"\n\n\
         [[sources]]\npath = \"hub.csv\"\nkind = \"hub-csv\"\n\n\
         [[sources]]\npath = \"human.jsonl\"\nkind = \"elicitation-jsonl\"\n\n\
         [imputer]\ntechnique = \"mean\"\nseed = 0\n\n\
         [de]\nseed = 0\n",
    );
    for (i, &((y, m, d), close_days)) in SURVEYS.iter().enumerate() {
        let monday = date(y, m, d);
        let cutoff = cutoff_of(monday);
        let end = week_ending_saturday(monday, HORIZON);
        s.push_str(&format!(
            "\n[[surveys]]\nindex = {}\ncutoff = \"{}\"\nclose = \"{}\"\nwindow_start = \"{}\"\ntargets = [\n  {{ variable = \"inc case\", location = \"{LOCATION}\", target_end_date = \"{end}\" }},\n  {{ variable = \"inc death\", location = \"{LOCATION}\", target_end_date = \"{end}\" }},\n]\n",
            i + 1,
            cutoff.format("%Y-%m-%dT%H:%M:%SZ"),
            (cutoff + Duration::days(close_days)).format("%Y-%m-%dT%H:%M:%SZ"),
            monday - Duration::days(10),
        ));
    }
    s
}

/// Writes `hub.csv`, `truth.csv`, `human.jsonl` and `config.toml` into `dir`.
pub fn generate(dir: &Path, seed: u64) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        std: Normal::new(0.0, 1.0).expect("unit normal"),
    };
    let daily = daily_truth(&mut g);
    let models = computational(&mut g);
    let people = humans(&mut g);
    let hub = hub_forecasts(&mut g, &models, &daily);
    let human = human_submissions(&mut g, &people, &daily);

    let mut truth = csv::Writer::from_writer(Vec::new());
    truth.write_record(["date", "location", "variable", "value"])?;
    for (d, v, x) in &daily {
        truth.write_record([d.to_string(), LOCATION.to_string(), v.hub_label().to_string(), x.to_string()])?;
    }
    fs::write(dir.join("truth.csv"), truth.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;

    let mut buf = Vec::new();
    write_hub_csv(&mut buf, &hub)?;
    fs::write(dir.join("hub.csv"), buf)?;

    let mut buf = Vec::new();
    write_elicitation_jsonl(&mut buf, &human)?;
    fs::write(dir.join("human.jsonl"), buf)?;

    fs::write(dir.join("config.toml"), config_toml())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_sums_to_one() {
        let breaks: Vec<f64> = (0..=8).map(|k| 1000.0 * f64::from(k)).collect();
        let p = histogram(&breaks, 3500.0, 800.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(IntervalHistogram::new(breaks, p).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(a.path(), 5).unwrap();
        generate(b.path(), 5).unwrap();
        for name in ["hub.csv", "truth.csv", "human.jsonl", "config.toml"] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }
}
