//! Plot-ready CSV projections of a finished run: power and active-cell
//! traces over time, per-class switch-off frequencies, per-slot savings
//! against the macro load, and (when a sweep summary exists) savings against
//! the deployment size.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{ExperimentConfig, PipelineError, Stage, StageExt};

struct MetricsRow {
    slot: usize,
    policy: String,
    power_w: f64,
    n_active_sbs: usize,
    mbs_load: f64,
}

fn read_metrics(dir: &Path) -> Result<Vec<MetricsRow>, PipelineError> {
    let file = fs::File::open(dir.join("metrics.csv")).stage(Stage::Figures)?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.stage(Stage::Figures)?;
        let field = |i: usize| -> Result<&str, PipelineError> {
            r.get(i)
                .ok_or_else(|| PipelineError::new(Stage::Figures, "short metrics row"))
        };
        rows.push(MetricsRow {
            slot: field(0)?.parse().stage(Stage::Figures)?,
            policy: field(1)?.to_string(),
            power_w: field(2)?.parse().stage(Stage::Figures)?,
            n_active_sbs: field(3)?.parse().stage(Stage::Figures)?,
            mbs_load: field(4)?.parse().stage(Stage::Figures)?,
        });
    }
    Ok(rows)
}

fn read_decisions(dir: &Path) -> Result<Vec<(usize, String, String)>, PipelineError> {
    let file = fs::File::open(dir.join("decisions.csv")).stage(Stage::Figures)?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.stage(Stage::Figures)?;
        let field = |i: usize| -> Result<&str, PipelineError> {
            r.get(i)
                .ok_or_else(|| PipelineError::new(Stage::Figures, "short decisions row"))
        };
        rows.push((
            field(0)?.parse().stage(Stage::Figures)?,
            field(1)?.to_string(),
            field(2)?.to_string(),
        ));
    }
    Ok(rows)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).stage(Stage::Figures)?;
    for row in rows {
        w.write_record(row).stage(Stage::Figures)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Figures, e.to_string()))?;
    fs::write(path, bytes).stage(Stage::Figures)?;
    Ok(())
}

/// Projects the metric files of `run_dir` into plot-ready CSVs next to them.
/// Every output is written with its header even when no rows apply.
pub fn emit_figures(run_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let cfg = ExperimentConfig::load(&run_dir.join("config.json"))
        .map_err(|e| PipelineError::new(Stage::Figures, e.to_string()))?;
    let metrics = read_metrics(run_dir)?;
    let decisions = read_decisions(run_dir)?;
    let mut written = Vec::new();

    let power_rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|r| vec![r.slot.to_string(), r.policy.clone(), r.power_w.to_string()])
        .collect();
    let path = run_dir.join("fig_power_vs_time.csv");
    write_csv(&path, &["slot", "policy", "power_w"], &power_rows)?;
    written.push(path);

    let active_rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|r| {
            vec![
                r.slot.to_string(),
                r.policy.clone(),
                r.n_active_sbs.to_string(),
            ]
        })
        .collect();
    let path = run_dir.join("fig_active_sbs_vs_time.csv");
    write_csv(&path, &["slot", "policy", "n_active_sbs"], &active_rows)?;
    written.push(path);

    // Fraction of member-slots each class spends asleep, per policy.
    let classes = cfg.network.sbs_counts.classes();
    let mut off_counts: BTreeMap<(String, &'static str), usize> = BTreeMap::new();
    let mut slot_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, policy, gamma) in &decisions {
        *slot_counts.entry(policy.clone()).or_default() += 1;
        for (i, bit) in gamma.chars().skip(1).enumerate() {
            if bit == '0' {
                *off_counts
                    .entry((policy.clone(), classes[i].name()))
                    .or_default() += 1;
            }
        }
    }
    let mut freq_rows = Vec::new();
    for (policy, n_slots) in &slot_counts {
        for class in crate::power::BsClass::SMALL_CELLS {
            let members = classes.iter().filter(|c| **c == class).count();
            if members == 0 {
                continue;
            }
            let off = off_counts
                .get(&(policy.clone(), class.name()))
                .copied()
                .unwrap_or(0);
            let fraction = off as f64 / (members * n_slots) as f64;
            freq_rows.push(vec![
                policy.clone(),
                class.name().to_string(),
                off.to_string(),
                fraction.to_string(),
            ]);
        }
    }
    let path = run_dir.join("fig_switch_off_freq.csv");
    write_csv(
        &path,
        &["policy", "class", "off_slots", "off_fraction"],
        &freq_rows,
    )?;
    written.push(path);

    // Per-slot saving against the raw macro load; the all-on rows carry the
    // raw load and the reference power.
    let aao_by_slot: BTreeMap<usize, (f64, f64)> = metrics
        .iter()
        .filter(|r| r.policy == "aao")
        .map(|r| (r.slot, (r.mbs_load, r.power_w)))
        .collect();
    let mut saved_rows = Vec::new();
    for r in &metrics {
        if let Some((raw_load, aao_power)) = aao_by_slot.get(&r.slot) {
            saved_rows.push(vec![
                r.slot.to_string(),
                r.policy.clone(),
                raw_load.to_string(),
                (aao_power - r.power_w).to_string(),
            ]);
        }
    }
    let path = run_dir.join("fig_energy_saved_vs_mbs_load.csv");
    write_csv(
        &path,
        &["slot", "policy", "mbs_load_raw", "power_saved_w"],
        &saved_rows,
    )?;
    written.push(path);

    // Savings against deployment size, from a sweep summary when present.
    let mut nsbs_rows = Vec::new();
    let sweep_path = run_dir.join("sweep.csv");
    if sweep_path.exists() {
        let file = fs::File::open(&sweep_path).stage(Stage::Figures)?;
        let mut reader = csv::Reader::from_reader(file);
        for record in reader.records() {
            let r = record.stage(Stage::Figures)?;
            if let (Some(n), Some(policy), Some(saved)) = (r.get(0), r.get(1), r.get(3)) {
                nsbs_rows.push(vec![n.to_string(), policy.to_string(), saved.to_string()]);
            }
        }
    }
    let path = run_dir.join("fig_energy_saved_vs_nsbs.csv");
    write_csv(&path, &["n_sbs", "policy", "energy_saved_j"], &nsbs_rows)?;
    written.push(path);

    Ok(written)
}
