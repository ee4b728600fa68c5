//! Traffic traces: CSV ingestion, grid-to-station mapping, load
//! normalization, chronological splitting and a synthetic diurnal generator.
//!
//! The trace format is one activity sample per grid per slot:
//!
//! ```csv
//! grid_id,slot_index,activity
//! g000,0,4.25
//! g000,1,3.91
//! ```
//!
//! Slots are 0-based within the trace and activity values are dimensionless
//! and non-negative. Missing slots are imputed as zero (traces go quiet at
//! night) and counted in the ingest report; duplicate `(grid, slot)` rows are
//! rejected as ambiguous.

use std::collections::BTreeMap;
use std::io;
use std::ops::Range;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::power::BsClass;

/// Slots per simulated day.
pub const SLOTS_PER_DAY: usize = 144;

#[derive(Debug, thiserror::Error)]
pub enum TrafficError {
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("negative activity {value} for grid {grid} at slot {slot}")]
    NegativeActivity {
        grid: String,
        slot: usize,
        value: f64,
    },
    #[error("duplicate sample for grid {grid} at slot {slot}")]
    DuplicateSample { grid: String, slot: usize },
    #[error("grid {0} is not present in the trace")]
    MissingGrid(String),
    #[error("grid series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("grid ids in a station map must be distinct (saw {0} twice)")]
    DuplicateGrid(String),
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),
    #[error("cannot split an empty series")]
    EmptySeries,
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Slotted activity of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub grid_id: String,
    pub values: Vec<f64>,
}

/// What ingestion had to fix up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub grids: usize,
    /// Slots that had no sample and were imputed as zero.
    pub filled_missing: usize,
}

/// Reads a trace stream into dense per-grid series.
pub fn ingest_trace<R: io::Read>(
    reader: R,
) -> Result<(BTreeMap<String, GridSeries>, IngestReport), TrafficError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut sparse: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut rows = 0usize;
    for record in csv_reader.records() {
        let record = record.map_err(|e| TrafficError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |idx: usize, what: &str| -> Result<&str, TrafficError> {
            record.get(idx).ok_or_else(|| TrafficError::Parse {
                line,
                msg: format!("missing {what} column"),
            })
        };
        let grid = parse(0, "grid_id")?.to_string();
        let slot: usize =
            parse(1, "slot_index")?
                .trim()
                .parse()
                .map_err(|e| TrafficError::Parse {
                    line,
                    msg: format!("bad slot_index: {e}"),
                })?;
        let activity: f64 =
            parse(2, "activity")?
                .trim()
                .parse()
                .map_err(|e| TrafficError::Parse {
                    line,
                    msg: format!("bad activity: {e}"),
                })?;
        if activity < 0.0 || activity.is_nan() {
            return Err(TrafficError::NegativeActivity {
                grid,
                slot,
                value: activity,
            });
        }
        let per_grid = sparse.entry(grid.clone()).or_default();
        if per_grid.insert(slot, activity).is_some() {
            return Err(TrafficError::DuplicateSample { grid, slot });
        }
        rows += 1;
    }

    let mut out = BTreeMap::new();
    let mut filled = 0usize;
    for (grid_id, samples) in sparse {
        let len = samples.keys().next_back().map(|s| s + 1).unwrap_or(0);
        let mut values = vec![0.0; len];
        for (slot, v) in &samples {
            values[*slot] = *v;
        }
        filled += len - samples.len();
        out.insert(grid_id.clone(), GridSeries { grid_id, values });
    }
    let report = IngestReport {
        rows,
        grids: out.len(),
        filled_missing: filled,
    };
    Ok((out, report))
}

/// Writes series back out in the trace format; the inverse of
/// [`ingest_trace`] for dense series.
pub fn emit_trace<'a, W: io::Write>(
    writer: W,
    series: impl IntoIterator<Item = &'a GridSeries>,
) -> Result<(), TrafficError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer
        .write_record(["grid_id", "slot_index", "activity"])
        .map_err(|e| TrafficError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
    for s in series {
        for (slot, value) in s.values.iter().enumerate() {
            csv_writer
                .write_record([s.grid_id.as_str(), &slot.to_string(), &value.to_string()])
                .map_err(|e| TrafficError::Parse {
                    line: 0,
                    msg: e.to_string(),
                })?;
        }
    }
    csv_writer.flush().map_err(|e| TrafficError::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(())
}

/// Which grids feed which stations: two for the macro, one per small cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsTrafficMap {
    pub mbs_grids: [String; 2],
    pub sbs_grids: Vec<String>,
}

impl BsTrafficMap {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let mut seen = std::collections::BTreeSet::new();
        for id in self.mbs_grids.iter().chain(self.sbs_grids.iter()) {
            if !seen.insert(id) {
                return Err(TrafficError::DuplicateGrid(id.clone()));
            }
        }
        Ok(())
    }

    /// Draws a map from the available grid ids: two random grids for the
    /// macro, then one per small cell, all distinct.
    pub fn random<R: Rng>(
        grid_ids: &[String],
        n_sbs: usize,
        rng: &mut R,
    ) -> Result<Self, TrafficError> {
        let needed = n_sbs + 2;
        if grid_ids.len() < needed {
            return Err(TrafficError::MissingGrid(format!(
                "need {needed} grids, trace has {}",
                grid_ids.len()
            )));
        }
        // Partial Fisher-Yates over a copy keeps the draw order stable.
        let mut pool: Vec<String> = grid_ids.to_vec();
        for i in 0..needed {
            let j = i + rng.random_range(0..pool.len() - i);
            pool.swap(i, j);
        }
        Ok(BsTrafficMap {
            mbs_grids: [pool[0].clone(), pool[1].clone()],
            sbs_grids: pool[2..needed].to_vec(),
        })
    }
}

/// Per-station load series in `[0, 1]`; station 0 is the macro.
#[derive(Debug, Clone, PartialEq)]
pub struct BsLoadSeries {
    pub loads: Vec<Vec<f64>>,
}

impl BsLoadSeries {
    pub fn n_bs(&self) -> usize {
        self.loads.len()
    }

    pub fn n_slots(&self) -> usize {
        self.loads.first().map(|s| s.len()).unwrap_or(0)
    }

    /// One column: every station's load at `slot`.
    pub fn at(&self, slot: usize) -> Vec<f64> {
        self.loads.iter().map(|s| s[slot]).collect()
    }
}

/// The normalization constant applied to each class, kept for run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub per_class: Vec<(BsClass, f64)>,
}

/// Builds per-station loads from grid activity.
///
/// The macro series is the elementwise sum of its two grids. Every station
/// is then divided by the maximum activity observed across its class, so the
/// class-wide peak maps to a load of exactly 1.
pub fn normalize_to_loads(
    grids: &BTreeMap<String, GridSeries>,
    map: &BsTrafficMap,
    sbs_classes: &[BsClass],
) -> Result<(BsLoadSeries, NormalizationRecord), TrafficError> {
    assert_eq!(
        map.sbs_grids.len(),
        sbs_classes.len(),
        "one class per small-cell grid"
    );
    map.validate()?;
    let fetch = |id: &String| {
        grids
            .get(id)
            .map(|s| &s.values)
            .ok_or_else(|| TrafficError::MissingGrid(id.clone()))
    };

    let a = fetch(&map.mbs_grids[0])?;
    let b = fetch(&map.mbs_grids[1])?;
    if a.len() != b.len() {
        return Err(TrafficError::LengthMismatch(format!(
            "macro grids: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n_slots = a.len();
    let mbs_raw: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();

    let mut sbs_raw = Vec::with_capacity(map.sbs_grids.len());
    for id in &map.sbs_grids {
        let values = fetch(id)?;
        if values.len() != n_slots {
            return Err(TrafficError::LengthMismatch(format!(
                "grid {id}: {} vs {}",
                values.len(),
                n_slots
            )));
        }
        sbs_raw.push(values.clone());
    }

    let series_max = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let mut class_max: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut bump = |class: BsClass, m: f64| {
        let entry = class_max.entry(class.name()).or_insert(0.0);
        *entry = entry.max(m);
    };
    bump(BsClass::Macro, series_max(&mbs_raw));
    for (raw, class) in sbs_raw.iter().zip(sbs_classes) {
        bump(*class, series_max(raw));
    }

    let scale_for = |class: BsClass| {
        let m = class_max.get(class.name()).copied().unwrap_or(0.0);
        // An all-zero class stays all zero rather than dividing by zero.
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };

    let mut loads = Vec::with_capacity(1 + sbs_raw.len());
    loads.push(
        mbs_raw
            .iter()
            .map(|v| v / scale_for(BsClass::Macro))
            .collect(),
    );
    for (raw, class) in sbs_raw.iter().zip(sbs_classes) {
        loads.push(raw.iter().map(|v| v / scale_for(*class)).collect());
    }

    let mut per_class = vec![(BsClass::Macro, class_max["macro"])];
    for class in BsClass::SMALL_CELLS {
        if let Some(m) = class_max.get(class.name()) {
            per_class.push((class, *m));
        }
    }
    Ok((BsLoadSeries { loads }, NormalizationRecord { per_class }))
}

/// Synthesizes diurnal activity series.
///
/// Each series follows `a * (1 + sin(2*pi*(t - phase)/144)) / 2` plus
/// uniform noise of amplitude `noise_amp * a`, floored at zero. Amplitude
/// and phase are drawn per series; the whole set is a pure function of the
/// seed.
pub fn synth_diurnal(n_days: usize, n_series: usize, seed: u64, noise_amp: f64) -> Vec<GridSeries> {
    assert!(n_days >= 1, "need at least one day of traffic");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_slots = n_days * SLOTS_PER_DAY;
    let mut out = Vec::with_capacity(n_series);
    for idx in 0..n_series {
        let amplitude = rng.random_range(5.0..15.0);
        // Whole-slot phases keep the noiseless trough at an exact zero.
        let phase = rng.random_range(0..SLOTS_PER_DAY) as f64;
        let mut values = Vec::with_capacity(n_slots);
        for t in 0..n_slots {
            let angle = 2.0 * std::f64::consts::PI * (t as f64 - phase) / SLOTS_PER_DAY as f64;
            let base = amplitude * (1.0 + angle.sin()) / 2.0;
            let noise = if noise_amp > 0.0 {
                rng.random_range(-1.0..1.0) * noise_amp * amplitude
            } else {
                0.0
            };
            values.push((base + noise).max(0.0));
        }
        out.push(GridSeries {
            grid_id: format!("g{idx:03}"),
            values,
        });
    }
    out
}

/// Chronological train/validation/test index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `n` samples chronologically. Part sizes are rounded to integers
/// that sum to `n` (train and validation round to nearest, test takes the
/// remainder).
pub fn split(n: usize, ratios: [f64; 3]) -> Result<DatasetSplit, TrafficError> {
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(TrafficError::BadRatios(sum));
    }
    if n == 0 {
        return Err(TrafficError::EmptySeries);
    }
    let train = (ratios[0] * n as f64).round() as usize;
    let val = ((ratios[1] * n as f64).round() as usize).min(n - train);
    Ok(DatasetSplit {
        train: 0..train,
        val: train..train + val,
        test: train + val..n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_builds_dense_series() {
        let csv = "grid_id,slot_index,activity\ng0,0,1.5\ng0,3,2.5\n";
        let (grids, report) = ingest_trace(csv.as_bytes()).unwrap();
        let s = &grids["g0"];
        assert_eq!(s.values, vec![1.5, 0.0, 0.0, 2.5]);
        assert_eq!(report.filled_missing, 2);
        assert_eq!(report.rows, 2);
    }

    #[test]
    fn ingest_empty_stream() {
        let (grids, report) = ingest_trace("grid_id,slot_index,activity\n".as_bytes()).unwrap();
        assert!(grids.is_empty());
        assert_eq!(report.rows, 0);
    }

    #[test]
    fn ingest_rejects_duplicates() {
        let csv = "grid_id,slot_index,activity\ng0,1,1.0\ng0,1,2.0\n";
        assert!(matches!(
            ingest_trace(csv.as_bytes()),
            Err(TrafficError::DuplicateSample { .. })
        ));
    }

    #[test]
    fn ingest_rejects_negative_activity() {
        let csv = "grid_id,slot_index,activity\ng0,1,-0.5\n";
        assert!(matches!(
            ingest_trace(csv.as_bytes()),
            Err(TrafficError::NegativeActivity { .. })
        ));
    }

    #[test]
    fn ingest_reports_parse_errors_with_line() {
        let csv = "grid_id,slot_index,activity\ng0,not_a_slot,1.0\n";
        match ingest_trace(csv.as_bytes()) {
            Err(TrafficError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn emit_then_ingest_round_trips() {
        let series = synth_diurnal(1, 3, 99, 0.1);
        let mut buf = Vec::new();
        emit_trace(&mut buf, &series).unwrap();
        let (grids, _) = ingest_trace(buf.as_slice()).unwrap();
        for s in &series {
            assert_eq!(grids[&s.grid_id].values, s.values);
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_diurnal(2, 4, 7, 0.05);
        let b = synth_diurnal(2, 4, 7, 0.05);
        assert_eq!(a, b);
        let c = synth_diurnal(2, 4, 8, 0.05);
        assert_ne!(a, c);
    }

    #[test]
    fn synth_noiseless_touches_zero_at_trough() {
        let series = synth_diurnal(1, 2, 3, 0.0);
        for s in &series {
            let min = s.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min.abs() < 1e-6, "trough {min} should be ~0");
            assert!(s.values.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn synth_shape_matches_request() {
        let series = synth_diurnal(31, 36, 1, 0.05);
        assert_eq!(series.len(), 36);
        assert!(series.iter().all(|s| s.values.len() == 4464));
    }

    #[test]
    fn normalize_sums_macro_grids_and_scales_by_class_max() {
        let mut grids = BTreeMap::new();
        grids.insert(
            "a".into(),
            GridSeries {
                grid_id: "a".into(),
                values: vec![2.0, 4.0],
            },
        );
        grids.insert(
            "b".into(),
            GridSeries {
                grid_id: "b".into(),
                values: vec![3.0, 6.0],
            },
        );
        grids.insert(
            "c".into(),
            GridSeries {
                grid_id: "c".into(),
                values: vec![1.0, 4.0],
            },
        );
        let map = BsTrafficMap {
            mbs_grids: ["a".into(), "b".into()],
            sbs_grids: vec!["c".into()],
        };
        let (loads, record) = normalize_to_loads(&grids, &map, &[BsClass::Rrh]).unwrap();
        // Macro raw series is [5, 10]; class max 10.
        assert_eq!(loads.loads[0], vec![0.5, 1.0]);
        // Single RRH normalizes by its own max.
        assert_eq!(loads.loads[1], vec![0.25, 1.0]);
        assert!(record.per_class.contains(&(BsClass::Macro, 10.0)));
        assert!(record.per_class.contains(&(BsClass::Rrh, 4.0)));
    }

    #[test]
    fn normalize_class_peak_maps_to_one() {
        let series = synth_diurnal(2, 6, 11, 0.2);
        let grids: BTreeMap<String, GridSeries> = series
            .iter()
            .map(|s| (s.grid_id.clone(), s.clone()))
            .collect();
        let map = BsTrafficMap {
            mbs_grids: ["g000".into(), "g001".into()],
            sbs_grids: vec!["g002".into(), "g003".into(), "g004".into(), "g005".into()],
        };
        let classes = [BsClass::Rrh, BsClass::Rrh, BsClass::Femto, BsClass::Femto];
        let (loads, _) = normalize_to_loads(&grids, &map, &classes).unwrap();
        for series in &loads.loads {
            assert!(series.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // Each class-wide maximum is exactly 1.
        let rrh_max = loads.loads[1]
            .iter()
            .chain(&loads.loads[2])
            .cloned()
            .fold(0.0f64, f64::max);
        assert!((rrh_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_all_zero_class_stays_zero() {
        let mut grids = BTreeMap::new();
        for id in ["a", "b", "c"] {
            grids.insert(
                id.to_string(),
                GridSeries {
                    grid_id: id.into(),
                    values: vec![0.0, 0.0],
                },
            );
        }
        let map = BsTrafficMap {
            mbs_grids: ["a".into(), "b".into()],
            sbs_grids: vec!["c".into()],
        };
        let (loads, _) = normalize_to_loads(&grids, &map, &[BsClass::Pico]).unwrap();
        assert!(loads.loads.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn normalize_missing_grid_errors() {
        let grids = BTreeMap::new();
        let map = BsTrafficMap {
            mbs_grids: ["a".into(), "b".into()],
            sbs_grids: vec![],
        };
        assert!(matches!(
            normalize_to_loads(&grids, &map, &[]),
            Err(TrafficError::MissingGrid(_))
        ));
    }

    #[test]
    fn split_rounds_to_total() {
        let s = split(4464, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!(s.train, 0..2678);
        assert_eq!(s.val, 2678..3571);
        assert_eq!(s.test, 3571..4464);

        let s = split(10, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));

        let s = split(10, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 0, 0));
    }

    #[test]
    fn split_covers_every_index_once() {
        for n in [1usize, 2, 7, 143, 144, 1000] {
            let s = split(n, [0.6, 0.2, 0.2]).unwrap();
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.val.start);
            assert_eq!(s.val.end, s.test.start);
            assert_eq!(s.test.end, n);
        }
    }

    #[test]
    fn split_validates_ratios() {
        assert!(matches!(
            split(10, [0.5, 0.2, 0.2]),
            Err(TrafficError::BadRatios(_))
        ));
        assert!(matches!(
            split(0, [0.6, 0.2, 0.2]),
            Err(TrafficError::EmptySeries)
        ));
    }

    #[test]
    fn traffic_map_rejects_repeated_grids() {
        let map = BsTrafficMap {
            mbs_grids: ["a".into(), "a".into()],
            sbs_grids: vec![],
        };
        assert!(map.validate().is_err());
    }

    #[test]
    fn random_map_is_distinct_and_deterministic() {
        let ids: Vec<String> = (0..12).map(|i| format!("g{i:03}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = BsTrafficMap::random(&ids, 6, &mut rng).unwrap();
        a.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = BsTrafficMap::random(&ids, 6, &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
