//! Writes evaluation and sweep reports as JSON, CSV tables or markdown.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::pipeline::{EvaluationReport, SummaryRow, SweepReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    CsvTables,
    Markdown,
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for r in rows {
        wtr.write_record(&r)?;
    }
    Ok(wtr.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "–".to_string())
}

pub fn read_report(path: &Path) -> anyhow::Result<EvaluationReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_sweep(path: &Path) -> anyhow::Result<SweepReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `report` into `dir` and returns the files written.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => Ok(vec![write(dir, "report.json", &json(report)?)?]),
        ReportFormat::CsvTables => {
            let scores = csv_bytes(
                &["survey", "variable", "label", "wis", "models", "human_models", "skipped"],
                report.scores.iter().map(|r| {
                    vec![
                        r.survey.to_string(),
                        r.variable.to_string(),
                        r.label.to_string(),
                        opt(r.wis),
                        r.models.to_string(),
                        r.human_models.to_string(),
                        r.skipped.clone().unwrap_or_default(),
                    ]
                }),
            )?;
            let diffs = csv_bytes(
                &["comparison", "variable", "survey", "a", "b", "difference"],
                report.comparisons.iter().flat_map(|c| {
                    c.rows.iter().map(move |r| {
                        vec![
                            c.name(),
                            c.variable.to_string(),
                            r.survey.to_string(),
                            r.a.to_string(),
                            r.b.to_string(),
                            r.difference.to_string(),
                        ]
                    })
                }),
            )?;
            let tests = csv_bytes(
                &["comparison", "variable", "n", "mean_difference", "t_statistic", "p_value_one_sided"],
                report.comparisons.iter().map(|c| {
                    vec![
                        c.name(),
                        c.variable.to_string(),
                        c.rows.len().to_string(),
                        opt(c.test.map(|t| t.mean_difference)),
                        opt(c.test.map(|t| t.t_statistic)),
                        opt(c.test.map(|t| t.p_value_one_sided)),
                    ]
                }),
            )?;
            let weights = csv_bytes(
                &["survey", "variable", "label", "model", "weight"],
                report.weights.iter().flat_map(|w| {
                    w.models.iter().zip(&w.weights).map(move |(m, x)| {
                        vec![
                            w.survey.to_string(),
                            w.variable.to_string(),
                            w.label.to_string(),
                            m.clone(),
                            x.to_string(),
                        ]
                    })
                }),
            )?;
            Ok(vec![
                write(dir, "scores.csv", &scores)?,
                write(dir, "paired_differences.csv", &diffs)?,
                write(dir, "paired_tests.csv", &tests)?,
                write(dir, "weights.csv", &weights)?,
            ])
        }
        ReportFormat::Markdown => Ok(vec![write(dir, "report.md", markdown(report).as_bytes())?]),
    }
}

fn markdown(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation report\n");
    let _ = writeln!(
        s,
        "Strategy `{}`, imputation `{}`, weighting `{}`.\n",
        report.strategy.name(),
        report.technique.name(),
        report.weighting.name()
    );
    let m = &report.missingness;
    let _ = writeln!(
        s,
        "Rows: {} computational ({:.0}% missing), {} human ({:.0}% missing).\n",
        m.computational_rows,
        100.0 * m.computational_missing,
        m.human_rows,
        100.0 * m.human_missing
    );
    let _ = writeln!(s, "## Scores\n");
    let _ = writeln!(s, "| survey | variable | ensemble | WIS | models | human |");
    let _ = writeln!(s, "|---:|---|---|---:|---:|---:|");
    for r in &report.scores {
        let wis = match (&r.skipped, r.wis) {
            (Some(reason), _) => format!("skipped: {reason}"),
            (None, w) => fixed(w, 1),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.survey, r.variable, r.label, wis, r.models, r.human_models
        );
    }
    let _ = writeln!(s, "\n## Paired differences\n");
    if report.comparisons.is_empty() {
        let _ = writeln!(s, "No comparisons.");
    } else {
        let _ = writeln!(s, "| comparison | variable | n | mean difference | t | p (one-sided) |");
        let _ = writeln!(s, "|---|---|---:|---:|---:|---:|");
        for c in &report.comparisons {
            let mean = (!c.rows.is_empty())
                .then(|| c.rows.iter().map(|r| r.difference).sum::<f64>() / c.rows.len() as f64);
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                c.name(),
                c.variable,
                c.rows.len(),
                fixed(mean, 1),
                fixed(c.test.map(|t| t.t_statistic), 2),
                fixed(c.test.map(|t| t.p_value_one_sided), 3)
            );
        }
    }
    if !report.notes.is_empty() {
        let _ = writeln!(s, "\n## Notes\n");
        for n in &report.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}

fn summary_csv(rows: &[SummaryRow]) -> anyhow::Result<Vec<u8>> {
    csv_bytes(
        &[
            "strategy",
            "technique",
            "weighting",
            "label",
            "comparison",
            "variable",
            "n",
            "mean_difference",
            "t_statistic",
            "p_value_one_sided",
        ],
        rows.iter().map(|r| {
            vec![
                r.strategy.name().to_string(),
                r.technique.name().to_string(),
                r.weighting.map(|w| w.name().to_string()).unwrap_or_default(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
                r.comparison.clone(),
                r.variable.to_string(),
                r.n.to_string(),
                opt(r.mean_difference),
                opt(r.t_statistic),
                opt(r.p_value),
            ]
        }),
    )
}

/// Renders one summary table with one column per variable, marking p < 0.05 with `**`.
pub fn summary_markdown(rows: &[SummaryRow], title: &str) -> String {
    let mut variables: Vec<String> = rows.iter().map(|r| r.variable.to_string()).collect();
    variables.sort();
    variables.dedup();
    let mut s = String::new();
    let _ = writeln!(s, "## {title}\n");
    let _ = write!(s, "| strategy | technique | weighting / ensemble |");
    for v in &variables {
        let _ = write!(s, " {v} |");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "|---|---|---|{}", "---:|".repeat(variables.len()));
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let who = r
            .weighting
            .map(|w| w.name().to_string())
            .or(r.label.map(|l| l.to_string()))
            .unwrap_or_default();
        let k = (r.strategy.name().to_string(), r.technique.name().to_string(), who);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (strategy, technique, who) in keys {
        let _ = write!(s, "| {strategy} | {technique} | {who} |");
        for v in &variables {
            let cell = rows.iter().find(|r| {
                r.strategy.name() == strategy
                    && r.technique.name() == technique
                    && r.variable.to_string() == *v
                    && r.weighting.map(|w| w.name().to_string()).or(r.label.map(|l| l.to_string())).unwrap_or_default()
                        == who
            });
            let text = match cell {
                Some(r) => {
                    let stars = if r.p_value.is_some_and(|p| p < 0.05) { "**" } else { "" };
                    format!(
                        "{}{stars} (t={}, n={})",
                        fixed(r.mean_difference, 1),
                        fixed(r.t_statistic, 2),
                        r.n
                    )
                }
                None => "–".to_string(),
            };
            let _ = write!(s, " {text} |");
        }
        let _ = writeln!(s);
    }
    s
}

pub fn emit_sweep(report: &SweepReport, format: ReportFormat, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => Ok(vec![write(dir, "sweep.json", &json(report)?)?]),
        ReportFormat::CsvTables => Ok(vec![
            write(dir, "head_to_head.csv", &summary_csv(&report.head_to_head)?)?,
            write(dir, "weighting_effect.csv", &summary_csv(&report.weighting_effect)?)?,
        ]),
        ReportFormat::Markdown => {
            let chimeric: Vec<SummaryRow> = report
                .head_to_head
                .iter()
                .filter(|r| r.comparison == "chimeric-minus-computational")
                .cloned()
                .collect();
            let mut s = String::from("# Sweep report\n\n");
            s.push_str("Mean paired WIS difference across surveys; negative favours the first ensemble.\n\n");
            s.push_str(&summary_markdown(&chimeric, "Chimeric minus computational"));
            s.push('\n');
            s.push_str(&summary_markdown(&report.weighting_effect, "Performance minus equal weighting"));
            Ok(vec![write(dir, "sweep.md", s.as_bytes())?])
        }
    }
}
