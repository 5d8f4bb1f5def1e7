use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chimeric_core::ensemble::DeConfig;
use chimeric_core::{EnsembleLabel, ImputerConfig, InclusionStrategy, TargetKey};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Hub-style quantile CSV; every row is computational.
    HubCsv,
    /// Line-delimited human submissions; provenance follows the distribution kind.
    ElicitationJsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub path: PathBuf,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySpec {
    pub index: usize,
    /// Hub due date; human submissions are cut here by default.
    pub cutoff: DateTime<Utc>,
    /// When the survey itself closed, if later than the hub cutoff.
    #[serde(default)]
    pub close: Option<DateTime<Utc>>,
    /// Fixed hub forecast date; otherwise the earliest one inside the window.
    #[serde(default)]
    pub hub_forecast_date: Option<NaiveDate>,
    #[serde(default)]
    pub window_start: Option<NaiveDate>,
    pub targets: Vec<TargetKey>,
}

impl SurveySpec {
    pub fn human_cutoff(&self, mode: CutoffMode) -> DateTime<Utc> {
        match mode {
            CutoffMode::Hub => self.cutoff,
            CutoffMode::SurveyClose => self.close.unwrap_or(self.cutoff).max(self.cutoff),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    #[default]
    Equal,
    Performance,
}

impl Weighting {
    pub const ALL: [Weighting; 2] = [Weighting::Equal, Weighting::Performance];

    pub fn name(self) -> &'static str {
        match self {
            Weighting::Equal => "equal",
            Weighting::Performance => "performance",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown weighting `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMode {
    #[default]
    Hub,
    SurveyClose,
}

fn all_labels() -> Vec<EnsembleLabel> {
    EnsembleLabel::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sources: Vec<SourceSpec>,
    pub truth_path: PathBuf,
    pub surveys: Vec<SurveySpec>,
    #[serde(default = "all_labels")]
    pub ensembles: Vec<EnsembleLabel>,
    #[serde(default = "default_strategy")]
    pub strategy: InclusionStrategy,
    #[serde(default)]
    pub strict_joint_spotty: bool,
    #[serde(default)]
    pub imputer: ImputerConfig,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub de: DeConfig,
    #[serde(default)]
    pub cutoff_mode: CutoffMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_strategy() -> InclusionStrategy {
    InclusionStrategy::SpottyMemory
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        fix(&mut self.truth_path);
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.sources.is_empty() {
            bail!("at least one forecast source is required");
        }
        if self.surveys.is_empty() {
            bail!("at least one survey is required");
        }
        for pair in self.surveys.windows(2) {
            if pair[1].cutoff <= pair[0].cutoff || pair[1].index <= pair[0].index {
                bail!(
                    "surveys must be strictly ordered by index and cutoff (survey {} after {})",
                    pair[1].index,
                    pair[0].index
                );
            }
        }
        if self.ensembles.is_empty() {
            bail!("ensembles must name at least one label");
        }
        self.imputer.validate()?;
        self.de.validate()?;
        Ok(())
    }

    /// Overrides every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.imputer.seed = seed;
        self.de.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
truth_path = "truth.csv"
[[sources]]
path = "hub.csv"
kind = "hub-csv"
[[surveys]]
index = 1
cutoff = "2021-01-11T23:59:59Z"
targets = [{ variable = "inc case", location = "US", target_end_date = "2021-01-23" }]
[[surveys]]
index = 2
cutoff = "2021-02-08T23:59:59Z"
targets = [{ variable = "inc case", location = "US", target_end_date = "2021-02-20" }]
"#;

    #[test]
    fn defaults_and_validation() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.strategy, InclusionStrategy::SpottyMemory);
        assert_eq!(cfg.weighting, Weighting::Equal);
        assert_eq!(cfg.ensembles.len(), 3);
        assert_eq!(cfg.cutoff_mode, CutoffMode::Hub);
    }

    #[test]
    fn surveys_must_be_ordered() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.surveys.swap(0, 1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/data/run"));
        assert_eq!(cfg.truth_path, PathBuf::from("/data/run/truth.csv"));
        assert_eq!(cfg.sources[0].path, PathBuf::from("/data/run/hub.csv"));
    }

    #[test]
    fn survey_close_never_precedes_hub_cutoff() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        let s = &cfg.surveys[0];
        assert_eq!(s.human_cutoff(CutoffMode::SurveyClose), s.cutoff);
    }
}
