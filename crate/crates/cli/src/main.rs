use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chimeric_cli::config::{RunConfig, Weighting};
use chimeric_cli::io::{write_hub_csv, DatedForecast};
use chimeric_cli::pipeline::{build_survey, load_data, prepare_surveys, run_sweep, run_with_data, LoadedData};
use chimeric_cli::report::{emit_report, emit_sweep, read_report, read_sweep, ReportFormat};
use chimeric_core::{validate_quantile_forecast, InclusionStrategy, Provenance, QuantileForecast, QuantileLevelSet, Technique};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "chimeric", version, about = "Build and evaluate chimeric forecast ensembles")]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every source and print counts and diagnostics.
    Ingest,
    /// Check inputs against the run configuration.
    Validate,
    /// Impute each survey's matrices and write them as JSON.
    Impute {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build ensemble forecasts and weights for every survey.
    Ensemble {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the survey-by-survey evaluation.
    Evaluate {
        #[arg(long, value_enum, default_value = "json")]
        format: Vec<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run every inclusion strategy × imputation technique × weighting.
        #[arg(long)]
        sweep: bool,
    },
    /// Re-emit a saved `report.json` or `sweep.json` in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Vec<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Clean,
    Findings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli.config.as_deref().context("--config is required for this command")?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn print_diagnostics(data: &LoadedData) -> usize {
    for d in &data.diagnostics {
        eprintln!("{d}");
    }
    for p in &data.partial_weeks {
        eprintln!("{}: partial week, {} day(s) missing", p.key, p.missing_days.len());
    }
    data.diagnostics.len() + data.partial_weeks.len()
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    if let Command::Report { input, format, out } = &cli.command {
        let dir = out.clone().unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
        let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
        let is_sweep = serde_json::from_str::<serde_json::Value>(&text)
            .with_context(|| format!("parsing {}", input.display()))?
            .get("runs")
            .is_some();
        for &f in format {
            let written = if is_sweep {
                emit_sweep(&read_sweep(input)?, f, &dir)?
            } else {
                emit_report(&read_report(input)?, f, &dir)?
            };
            for p in written {
                println!("{}", p.display());
            }
        }
        return Ok(Status::Clean);
    }

    let config = load_config(&cli)?;
    let data = load_data(&config)?;
    match cli.command {
        Command::Ingest => {
            let human = data.elicitations.len();
            println!("hub forecasts: {}", data.hub.len());
            println!("human submissions: {human}");
            println!("weekly truths: {}", data.truths.len());
            let n = print_diagnostics(&data);
            println!("diagnostics: {n}");
            Ok(if n > 0 { Status::Findings } else { Status::Clean })
        }
        Command::Validate => {
            let mut findings = print_diagnostics(&data);
            for f in &data.hub {
                let Some(required) = QuantileLevelSet::for_variable(&f.forecast.target.variable) else {
                    continue;
                };
                let report = validate_quantile_forecast(&f.forecast, &required);
                for finding in &report.findings {
                    eprintln!("{} {}: {finding}", f.forecast.model_id, f.forecast.target);
                    findings += 1;
                }
            }
            let surveys = prepare_surveys(&config, &data)?;
            for s in &surveys {
                for t in &s.targets {
                    if data.truths.get(t).is_none() {
                        eprintln!("survey {}: no truth for {t}", s.index);
                        findings += 1;
                    }
                }
                for n in &s.notes {
                    eprintln!("survey {}: {n}", s.index);
                }
                println!(
                    "survey {}: hub date {}, {} target(s), {} forecast(s)",
                    s.index,
                    s.hub_forecast_date,
                    s.targets.len(),
                    s.forecasts.len()
                );
            }
            println!("findings: {findings}");
            Ok(if findings > 0 { Status::Findings } else { Status::Clean })
        }
        Command::Impute { out } => {
            #[derive(Serialize)]
            struct Imputed {
                survey: usize,
                variable: String,
                label: String,
                matrix: chimeric_core::ForecastMatrix,
                log: chimeric_core::ImputationLog,
            }
            let surveys = prepare_surveys(&config, &data)?;
            let mut rows = Vec::new();
            for pos in 0..surveys.len() {
                for o in build_survey(&config, &surveys, pos, &data.truths)? {
                    match o.result {
                        Ok(b) => rows.push(Imputed {
                            survey: o.survey,
                            variable: o.variable.to_string(),
                            label: o.label.to_string(),
                            matrix: b.imputed,
                            log: b.log,
                        }),
                        Err(reason) => eprintln!("survey {} {} {}: skipped, {reason}", o.survey, o.variable, o.label),
                    }
                }
            }
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            fs::create_dir_all(&dir)?;
            let path = dir.join("imputed.json");
            fs::write(&path, serde_json::to_vec_pretty(&rows)?)?;
            println!("{}", path.display());
            Ok(Status::Clean)
        }
        Command::Ensemble { out } => {
            let report = run_with_data(&config, &data)?;
            let hub_date: HashMap<usize, _> = report.surveys.iter().map(|s| (s.index, s.hub_forecast_date)).collect();
            let forecasts: Vec<DatedForecast> = report
                .forecasts
                .iter()
                .map(|f| {
                    Ok(DatedForecast {
                        forecast_date: hub_date[&f.survey],
                        forecast: QuantileForecast::new(
                            format!("{}-ensemble", f.label),
                            f.target.clone(),
                            f.levels.clone(),
                            f.values.clone(),
                            Provenance::Computational,
                        )?,
                    })
                })
                .collect::<anyhow::Result<_>>()?;
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            fs::create_dir_all(&dir)?;
            let mut buf = Vec::new();
            write_hub_csv(&mut buf, &forecasts)?;
            let csv_path = dir.join("ensemble_forecasts.csv");
            fs::write(&csv_path, buf)?;
            let weights_path = dir.join("weights.json");
            fs::write(&weights_path, serde_json::to_vec_pretty(&report.weights)?)?;
            println!("{}\n{}", csv_path.display(), weights_path.display());
            Ok(Status::Clean)
        }
        Command::Evaluate { format, out, sweep } => {
            let dir = out.unwrap_or_else(|| config.output_dir.clone());
            if sweep {
                let report = run_sweep(&config, &data, &InclusionStrategy::ALL, &Technique::ALL, &Weighting::ALL)?;
                for f in format {
                    for p in emit_sweep(&report, f, &dir)? {
                        println!("{}", p.display());
                    }
                }
            } else {
                let report = run_with_data(&config, &data)?;
                for f in format {
                    for p in emit_report(&report, f, &dir)? {
                        println!("{}", p.display());
                    }
                }
            }
            Ok(Status::Clean)
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
}
