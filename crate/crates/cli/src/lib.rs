//! Command-line plumbing for chimeric forecast ensembles: ingestion of hub and
//! elicitation files, the survey-by-survey evaluation pipeline, and report output.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod synthetic;
