//! Experiment runner: configuration, seeded scenario runs, metric files and
//! run comparisons.

pub mod compare;
pub mod config;
pub mod emit;
pub mod run;

use std::path::{Path, PathBuf};

pub use compare::{compare_report, summarize, Comparison, Stat, Summary};
pub use config::{ExperimentConfig, Format, Scenario, Traffic};
pub use emit::{emit, read_records, CSV_HEADER};
pub use run::{run_seed, run_seeds, Learner, MetricsRecord, SeedRun};

use crate::error::Result;

/// Environment variable naming a directory for relative output paths.
pub const OUT_DIR_ENV: &str = "NOMA_ALLOC_OUT_DIR";

/// Total system bandwidths covered by `sweep`, in kHz.
pub const SWEEP_BANDWIDTHS_KHZ: [f64; 9] = [15.0, 20.0, 25.0, 30.0, 35.0, 60.0, 80.0, 100.0, 120.0];

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    /// Seeds whose tabular run handed over to the deep agent, with the episode.
    pub fallbacks: Vec<(u64, usize)>,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let seeds = run_seeds(config)?;
    let fallbacks = seeds
        .iter()
        .filter_map(|s| s.fallback_episode.map(|e| (s.seed, e)))
        .collect();
    let records: Vec<MetricsRecord> = seeds.into_iter().flat_map(|s| s.records).collect();
    let summary = summarize(&records, config.final_window)?;
    Ok(RunOutput {
        records,
        summary,
        fallbacks,
    })
}

/// Repeats `run` for each bandwidth.
pub fn sweep(config: &ExperimentConfig, bandwidths_khz: &[f64]) -> Result<Vec<(f64, RunOutput)>> {
    bandwidths_khz
        .iter()
        .map(|&bw| {
            let cfg = ExperimentConfig {
                bandwidth_khz: bw,
                ..config.clone()
            };
            run(&cfg).map(|out| (bw, out))
        })
        .collect()
}

/// Places a relative path under the override directory when it is set.
pub fn resolve_output(path: &Path, override_dir: Option<&Path>) -> PathBuf {
    match override_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}
