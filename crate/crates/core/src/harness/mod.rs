//! Synthetic scenarios with planted ground truth and the end-to-end
//! pipeline that runs every stage over file-based artifacts.

use std::path::PathBuf;

pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod synth;

pub use pipeline::{run_pipeline, run_pipeline_with, run_stages, PipelineConfig, RunReport, RunStatus, Stage, ARTIFACTS};
pub use report::{coverage_summary, CoverageSummary, PlantOutcome};
pub use scenario::{NetworkSpec, PlantedEvent, Scenario};
pub use synth::{synth_corpus, synth_traffic, write_synthetic, PlantLabel, SyntheticCorpus, SyntheticOutput, TruthBackend};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}
