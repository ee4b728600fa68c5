//! Deployment-size sweep: re-run the pipeline at several small-cell counts
//! and tabulate the daily energy saved per policy.

use std::fs;
use std::path::PathBuf;

use super::pipeline::run_pipeline;
use super::{ExperimentConfig, PipelineError, SbsCounts, Stage, StageExt};

/// Small cells spread across the four classes in RRH, micro, pico, femto
/// round-robin order.
pub(crate) fn distribute_classes(count: usize) -> SbsCounts {
    let mut counts = SbsCounts::default();
    for i in 0..count {
        match i % 4 {
            0 => counts.rrh += 1,
            1 => counts.micro += 1,
            2 => counts.pico += 1,
            _ => counts.femto += 1,
        }
    }
    counts
}

/// Runs the pipeline once per requested small-cell count (each into
/// `sweep_<count>/` under the base output directory) and writes the
/// aggregated `sweep.csv`. Exhaustive search drops out automatically past
/// its instance cap.
pub fn sweep_nsbs(cfg: &ExperimentConfig, counts: &[usize]) -> Result<PathBuf, PipelineError> {
    if counts.is_empty() {
        return Err(PipelineError::new(
            Stage::Config,
            "sweep needs at least one count",
        ));
    }
    fs::create_dir_all(&cfg.output_dir).stage(Stage::Config)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_sbs", "policy", "energy_j", "energy_saved_j"])
        .stage(Stage::Evaluate)?;
    for &count in counts {
        if count == 0 {
            return Err(PipelineError::new(
                Stage::Config,
                "sweep counts must be positive",
            ));
        }
        let mut sub = cfg.clone();
        sub.network.sbs_counts = distribute_classes(count);
        sub.output_dir = cfg.output_dir.join(format!("sweep_{count:03}"));
        let output = run_pipeline(&sub)?;
        for row in &output.summary {
            w.write_record([
                count.to_string(),
                row.policy.name().to_string(),
                row.energy_j.to_string(),
                row.energy_saved_j.to_string(),
            ])
            .stage(Stage::Evaluate)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Evaluate, e.to_string()))?;
    let path = cfg.output_dir.join("sweep.csv");
    fs::write(&path, bytes).stage(Stage::Evaluate)?;
    Ok(path)
}
