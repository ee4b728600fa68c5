//! The staged pipeline behind `run_pipeline` and the CLI subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{
    act_greedy, save_actor, save_critic, train, AgentAction, AgentState, TrainOutcome,
};
use crate::baselines::{aao, exhaustive_search, mlc, thesis, ES_MAX_SBS};
use crate::fedlearn::{
    predict_loads, predictor_spec, run_federation, ClientDataset, GlobalModel, RegressionSet,
    RoundRecord,
};
use crate::network::{
    coverage_loss, energy_over_horizon, energy_saved, evaluate_switch, offloaded_mbs_load,
    qos_feasible, served_traffic, MacroCellConfig, SwitchVector,
};
use crate::power::{LoadFraction, ProfileSet};
use crate::traffic::{
    ingest_trace, normalize_to_loads, split, synth_diurnal, BsLoadSeries, BsTrafficMap,
    DatasetSplit, GridSeries, NormalizationRecord, SLOTS_PER_DAY,
};

use super::{
    AgentInput, ExperimentConfig, PipelineError, PolicyKind, Stage, StageExt, TrafficSource,
};

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_TRAFFIC: u64 = 1;
const SALT_MAP: u64 = 2;
const SALT_FL: u64 = 3;
const SALT_AGENT: u64 = 4;
const SALT_MLC: u64 = 5;
const SALT_THESIS: u64 = 6;
const SALT_REFIT: u64 = 7;

/// Everything the later stages need from the traffic stage.
pub(crate) struct PreparedTraffic {
    pub map: BsTrafficMap,
    pub series: BsLoadSeries,
    pub normalization: NormalizationRecord,
    pub split: DatasetSplit,
    pub cell: MacroCellConfig,
    pub profiles: ProfileSet,
}

pub(crate) fn prepare_traffic(cfg: &ExperimentConfig) -> Result<PreparedTraffic, PipelineError> {
    let cell = cfg.network.cell_config().stage(Stage::Config)?;
    let profiles = cfg.network.profiles();
    let classes = cfg.network.sbs_counts.classes();
    let n_sbs = classes.len();

    let grids: BTreeMap<String, GridSeries> = match &cfg.traffic.source {
        TrafficSource::Synthetic { n_days, noise_amp } => {
            if *n_days == 0 {
                return Err(PipelineError::new(
                    Stage::Traffic,
                    "n_days must be at least 1",
                ));
            }
            synth_diurnal(*n_days, n_sbs + 2, mix(cfg.seed, SALT_TRAFFIC), *noise_amp)
                .into_iter()
                .map(|g| (g.grid_id.clone(), g))
                .collect()
        }
        TrafficSource::Trace { path } => {
            let file = fs::File::open(path).stage(Stage::Traffic)?;
            let (grids, _report) = ingest_trace(file).stage(Stage::Traffic)?;
            grids
        }
    };

    let grid_ids: Vec<String> = grids.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, SALT_MAP));
    let map = BsTrafficMap::random(&grid_ids, n_sbs, &mut rng).stage(Stage::Traffic)?;
    let (series, normalization) =
        normalize_to_loads(&grids, &map, &classes).stage(Stage::Traffic)?;
    if series.n_slots() < SLOTS_PER_DAY {
        return Err(PipelineError::new(
            Stage::Traffic,
            format!(
                "trace has {} slots, one day needs {}",
                series.n_slots(),
                SLOTS_PER_DAY
            ),
        ));
    }
    let split = split(series.n_slots(), cfg.traffic.split).stage(Stage::Traffic)?;
    Ok(PreparedTraffic {
        map,
        series,
        normalization,
        split,
        cell,
        profiles,
    })
}

pub(crate) struct FlArtifacts {
    pub model: GlobalModel,
    pub log: Vec<RoundRecord>,
}

fn build_clients(
    prepared: &PreparedTraffic,
    window: usize,
    range: std::ops::Range<usize>,
) -> Result<Vec<ClientDataset>, PipelineError> {
    (0..prepared.cell.n_sbs())
        .map(|i| {
            ClientDataset::from_series(i, &prepared.series.loads[i + 1], range.clone(), window)
                .stage(Stage::Federation)
        })
        .collect()
}

fn validation_set(
    prepared: &PreparedTraffic,
    window: usize,
) -> Result<RegressionSet, PipelineError> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for i in 0..prepared.cell.n_sbs() {
        let set = RegressionSet::windows(
            &prepared.series.loads[i + 1],
            prepared.split.val.clone(),
            window,
        )
        .stage(Stage::Federation)?;
        inputs.extend(set.inputs);
        targets.extend(set.targets);
    }
    Ok(RegressionSet { inputs, targets })
}

pub(crate) fn fl_stage(
    prepared: &PreparedTraffic,
    cfg: &ExperimentConfig,
) -> Result<FlArtifacts, PipelineError> {
    let window = cfg.federation.window;
    let clients = build_clients(prepared, window, prepared.split.train.clone())?;
    let val = validation_set(prepared, window)?;
    let spec = predictor_spec(window, &cfg.federation.hidden).stage(Stage::Federation)?;
    let (model, log) = run_federation(
        &clients,
        &val,
        &spec,
        &cfg.federation.config(),
        mix(cfg.seed, SALT_FL),
    )
    .stage(Stage::Federation)?;
    Ok(FlArtifacts { model, log })
}

/// Ground-truth loads with each small cell replaced by the predictor's
/// next-slot estimate wherever a full history window exists. The macro stays
/// at ground truth: the controller measures its own load locally.
fn predicted_series(
    series: &BsLoadSeries,
    model: &GlobalModel,
) -> Result<BsLoadSeries, PipelineError> {
    let window = model.spec.input_width();
    let n_slots = series.n_slots();
    let mut loads = vec![series.loads[0].clone()];
    for sbs in 1..series.n_bs() {
        let truth = &series.loads[sbs];
        let mut predicted = truth.clone();
        for t in window..n_slots {
            let estimate =
                predict_loads(model, &[truth[t - window..t].to_vec()]).stage(Stage::Agent)?;
            predicted[t] = estimate[0];
        }
        loads.push(predicted);
    }
    Ok(BsLoadSeries { loads })
}

pub(crate) fn agent_stage(
    prepared: &PreparedTraffic,
    cfg: &ExperimentConfig,
    predictor: Option<&GlobalModel>,
) -> Result<TrainOutcome, PipelineError> {
    let env = match (cfg.agent.input, predictor) {
        (AgentInput::Predicted, Some(model)) => predicted_series(&prepared.series, model)?,
        _ => prepared.series.clone(),
    };
    let steps = cfg.agent.hyper.steps_per_episode;
    let days = prepared.split.train.len() / steps;
    if days == 0 {
        return Err(PipelineError::new(
            Stage::Agent,
            format!(
                "training split holds {} slots, an episode needs {steps}",
                prepared.split.train.len()
            ),
        ));
    }
    let range = prepared.split.train.start..prepared.split.train.start + days * steps;
    train(
        &env,
        range,
        &prepared.cell,
        &prepared.profiles,
        &cfg.agent.hyper,
        mix(cfg.seed, SALT_AGENT),
    )
    .stage(Stage::Agent)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub energy_j: f64,
    pub energy_saved_j: f64,
    pub max_coverage_loss_pct: f64,
    pub prediction_violations: usize,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub dir: PathBuf,
    pub summary: Vec<SummaryRow>,
    /// Policies requested but skipped (exhaustive search past its cap).
    pub skipped: Vec<PolicyKind>,
}

pub(crate) struct MetricsRow {
    pub slot: usize,
    pub policy: PolicyKind,
    pub power_w: f64,
    pub n_active_sbs: usize,
    pub mbs_load: f64,
    pub feasible: bool,
    pub gamma: String,
}

fn gamma_string(switch: &SwitchVector) -> String {
    switch
        .as_slice()
        .iter()
        .map(|on| if *on { '1' } else { '0' })
        .collect()
}

/// Wakes sleeping cells (heaviest realized load first) until the macro fits.
fn repair_against(
    mut action: AgentAction,
    raw: &[LoadFraction],
    cell: &MacroCellConfig,
    profiles: &ProfileSet,
) -> (AgentAction, bool) {
    let mut repaired = false;
    loop {
        let effective = offloaded_mbs_load(raw[0], &raw[1..], &action.switch(), cell, profiles);
        if qos_feasible(effective, cell) {
            return (action, repaired);
        }
        let next = (0..action.bits.len())
            .filter(|&i| !action.bits[i])
            .max_by(|&a, &b| {
                raw[a + 1]
                    .get()
                    .partial_cmp(&raw[b + 1].get())
                    .unwrap()
                    .then(b.cmp(&a))
            });
        match next {
            Some(i) => {
                action.bits[i] = true;
                repaired = true;
            }
            None => return (action, repaired),
        }
    }
}

pub(crate) struct EvalResult {
    pub metrics: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
    pub skipped: Vec<PolicyKind>,
}

pub(crate) fn evaluate_stage(
    prepared: &PreparedTraffic,
    cfg: &ExperimentConfig,
    fl: Option<&FlArtifacts>,
    agent: Option<&TrainOutcome>,
) -> Result<EvalResult, PipelineError> {
    let cell = &prepared.cell;
    let profiles = &prepared.profiles;
    let n_sbs = cell.n_sbs();
    let test = prepared.split.test.clone();
    if test.is_empty() {
        return Err(PipelineError::new(
            Stage::Evaluate,
            "the test split is empty",
        ));
    }

    let mut active: Vec<PolicyKind> = Vec::new();
    let mut skipped = Vec::new();
    for &p in &cfg.policies {
        if p == PolicyKind::Es && n_sbs > ES_MAX_SBS {
            skipped.push(p);
        } else {
            active.push(p);
        }
    }

    let mut current_model = fl.map(|f| f.model.clone());
    let mut famac_status = vec![true; n_sbs];
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut powers: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut coverage_max: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut prediction_violations = 0usize;
    let mut aao_powers = Vec::with_capacity(test.len());

    for (offset, slot) in test.clone().enumerate() {
        // Optional continuous-adaptation hook: refresh the predictor on all
        // data observed so far.
        if let (Some(interval), Some(_), AgentInput::Predicted) = (
            cfg.refit_interval_slots,
            current_model.as_ref(),
            cfg.agent.input,
        ) {
            if offset > 0 && offset % interval == 0 {
                let window = cfg.federation.window;
                let clients = build_clients(prepared, window, 0..slot)?;
                let val = validation_set(prepared, window)?;
                let spec =
                    predictor_spec(window, &cfg.federation.hidden).stage(Stage::Federation)?;
                let (model, _) = run_federation(
                    &clients,
                    &val,
                    &spec,
                    &cfg.federation.config(),
                    mix(cfg.seed, SALT_REFIT + offset as u64),
                )
                .stage(Stage::Federation)?;
                current_model = Some(model);
            }
        }

        let loads = prepared.series.at(slot);
        let raw: Vec<LoadFraction> = loads
            .iter()
            .map(|&l| LoadFraction::new(l))
            .collect::<Result<_, _>>()
            .stage(Stage::Evaluate)?;
        aao_powers.push(aao(&raw, profiles, cell).power_w);

        for &policy in &active {
            let switch = match policy {
                PolicyKind::Aao => aao(&raw, profiles, cell).switch,
                PolicyKind::Es => {
                    exhaustive_search(&raw, profiles, cell)
                        .stage(Stage::Evaluate)?
                        .switch
                }
                PolicyKind::Mlc => {
                    let k_max = cfg.mlc_k_max.min(n_sbs).max(2);
                    mlc(&raw, profiles, cell, 2..=k_max, mix(cfg.seed, SALT_MLC)).switch
                }
                PolicyKind::Thesis => {
                    thesis(
                        &raw,
                        profiles,
                        cell,
                        cfg.thesis_threshold,
                        mix(cfg.seed, SALT_THESIS),
                    )
                    .stage(Stage::Evaluate)?
                    .switch
                }
                PolicyKind::Famac => {
                    let outcome = agent.ok_or_else(|| {
                        PipelineError::new(Stage::Evaluate, "famac requested but no trained agent")
                    })?;
                    let decision_loads = match (cfg.agent.input, current_model.as_ref()) {
                        (AgentInput::Predicted, Some(model)) => {
                            let window = model.spec.input_width();
                            let mut dl = vec![loads[0]];
                            for i in 0..n_sbs {
                                let truth = &prepared.series.loads[i + 1];
                                if slot >= window {
                                    let est = predict_loads(
                                        model,
                                        &[truth[slot - window..slot].to_vec()],
                                    )
                                    .stage(Stage::Evaluate)?;
                                    dl.push(est[0]);
                                } else {
                                    dl.push(truth[slot]);
                                }
                            }
                            dl
                        }
                        _ => loads.clone(),
                    };
                    let state = AgentState {
                        loads: decision_loads,
                        status: famac_status.clone(),
                    };
                    let action = act_greedy(&outcome.actor, &state, cell, profiles)
                        .stage(Stage::Evaluate)?;
                    // The QoS check binds at execution time, against what the
                    // network actually carries; a decision the realized loads
                    // cannot absorb is repaired and logged.
                    let (action, was_repaired) = repair_against(action, &raw, cell, profiles);
                    if was_repaired {
                        prediction_violations += 1;
                    }
                    famac_status = action.bits.clone();
                    action.switch()
                }
            };

            let outcome = evaluate_switch(&raw, &switch, cell, profiles);
            let (before, after) = served_traffic(&raw, &switch, cell, profiles);
            let loss = if before > 0.0 {
                coverage_loss(before, after).stage(Stage::Evaluate)?
            } else {
                0.0
            };
            let entry = coverage_max.entry(policy.name()).or_insert(0.0);
            *entry = entry.max(loss.abs());
            powers
                .entry(policy.name())
                .or_default()
                .push(outcome.power_w);
            rows.push(MetricsRow {
                slot,
                policy,
                power_w: outcome.power_w,
                n_active_sbs: switch.sbs_bits().iter().filter(|on| **on).count(),
                mbs_load: outcome.effective_mbs_load,
                feasible: outcome.feasible,
                gamma: gamma_string(&switch),
            });
        }
    }

    let aao_energy = energy_over_horizon(&aao_powers, cfg.traffic.slot_minutes);
    let mut summary = Vec::new();
    for &policy in &active {
        let policy_powers = &powers[policy.name()];
        let energy = energy_over_horizon(policy_powers, cfg.traffic.slot_minutes);
        summary.push(SummaryRow {
            policy,
            energy_j: energy,
            energy_saved_j: energy_saved(aao_energy, energy),
            max_coverage_loss_pct: coverage_max[policy.name()],
            prediction_violations: if policy == PolicyKind::Famac {
                prediction_violations
            } else {
                0
            },
        });
    }

    Ok(EvalResult {
        metrics: rows,
        summary,
        skipped,
    })
}

fn write_file(path: &Path, bytes: &[u8], stage: Stage) -> Result<(), PipelineError> {
    let mut f = fs::File::create(path).stage(stage)?;
    f.write_all(bytes).stage(stage)?;
    Ok(())
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(cfg).stage(Stage::Config)?;
    text.push('\n');
    write_file(&dir.join("config.json"), text.as_bytes(), Stage::Config)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    classes: Vec<String>,
    map: &'a BsTrafficMap,
    normalization: Vec<(String, f64)>,
    n_slots: usize,
    train: [usize; 2],
    val: [usize; 2],
    test: [usize; 2],
}

fn write_run_meta(
    dir: &Path,
    cfg: &ExperimentConfig,
    prepared: &PreparedTraffic,
) -> Result<(), PipelineError> {
    let meta = RunMeta {
        classes: cfg
            .network
            .sbs_counts
            .classes()
            .iter()
            .map(|c| c.name().into())
            .collect(),
        map: &prepared.map,
        normalization: prepared
            .normalization
            .per_class
            .iter()
            .map(|(c, m)| (c.name().to_string(), *m))
            .collect(),
        n_slots: prepared.series.n_slots(),
        train: [prepared.split.train.start, prepared.split.train.end],
        val: [prepared.split.val.start, prepared.split.val.end],
        test: [prepared.split.test.start, prepared.split.test.end],
    };
    let mut text = serde_json::to_string_pretty(&meta).stage(Stage::Traffic)?;
    text.push('\n');
    write_file(&dir.join("run_meta.json"), text.as_bytes(), Stage::Traffic)
}

fn write_fl_artifacts(dir: &Path, fl: &FlArtifacts) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "model", "rmse"])
        .stage(Stage::Federation)?;
    for r in &fl.log {
        w.write_record([r.round.to_string(), r.model.clone(), r.rmse.to_string()])
            .stage(Stage::Federation)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Federation, e.to_string()))?;
    write_file(&dir.join("fl_rmse.csv"), &bytes, Stage::Federation)?;

    let mut blob = Vec::new();
    crate::nn::save_params(&mut blob, &fl.model.spec, &fl.model.params).stage(Stage::Federation)?;
    write_file(&dir.join("predictor.params"), &blob, Stage::Federation)
}

fn write_agent_artifacts(dir: &Path, outcome: &TrainOutcome) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "cum_reward", "mean_p_saved", "violations"])
        .stage(Stage::Agent)?;
    for e in &outcome.episodes {
        w.write_record([
            e.episode.to_string(),
            e.cum_reward.to_string(),
            e.mean_p_saved.to_string(),
            e.violations.to_string(),
        ])
        .stage(Stage::Agent)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Agent, e.to_string()))?;
    write_file(&dir.join("agent_training.csv"), &bytes, Stage::Agent)?;

    let mut blob = Vec::new();
    save_actor(&mut blob, &outcome.actor).stage(Stage::Agent)?;
    write_file(&dir.join("actor.params"), &blob, Stage::Agent)?;
    let mut blob = Vec::new();
    save_critic(&mut blob, &outcome.critic).stage(Stage::Agent)?;
    write_file(&dir.join("critic.params"), &blob, Stage::Agent)
}

fn write_eval_artifacts(dir: &Path, eval: &EvalResult) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "slot",
        "policy",
        "power_w",
        "n_active_sbs",
        "mbs_load",
        "feasible",
    ])
    .stage(Stage::Evaluate)?;
    for r in &eval.metrics {
        w.write_record([
            r.slot.to_string(),
            r.policy.name().to_string(),
            r.power_w.to_string(),
            r.n_active_sbs.to_string(),
            r.mbs_load.to_string(),
            r.feasible.to_string(),
        ])
        .stage(Stage::Evaluate)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Evaluate, e.to_string()))?;
    write_file(&dir.join("metrics.csv"), &bytes, Stage::Evaluate)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["slot", "policy", "gamma"])
        .stage(Stage::Evaluate)?;
    for r in &eval.metrics {
        w.write_record([
            r.slot.to_string(),
            r.policy.name().to_string(),
            r.gamma.clone(),
        ])
        .stage(Stage::Evaluate)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Evaluate, e.to_string()))?;
    write_file(&dir.join("decisions.csv"), &bytes, Stage::Evaluate)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "policy",
        "energy_j",
        "energy_saved_j",
        "max_coverage_loss_pct",
        "prediction_violations",
    ])
    .stage(Stage::Evaluate)?;
    for s in &eval.summary {
        w.write_record([
            s.policy.name().to_string(),
            s.energy_j.to_string(),
            s.energy_saved_j.to_string(),
            s.max_coverage_loss_pct.to_string(),
            s.prediction_violations.to_string(),
        ])
        .stage(Stage::Evaluate)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| PipelineError::new(Stage::Evaluate, e.to_string()))?;
    write_file(&dir.join("energy_summary.csv"), &bytes, Stage::Evaluate)
}

fn ensure_dir(cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(&cfg.output_dir).stage(Stage::Config)?;
    Ok(cfg.output_dir.clone())
}

/// Writes the synthetic trace of a config to a CSV file (the config's
/// output directory by default) so it can be inspected or re-ingested.
pub fn generate_traffic(
    cfg: &ExperimentConfig,
    out: Option<PathBuf>,
) -> Result<PathBuf, PipelineError> {
    let TrafficSource::Synthetic { n_days, noise_amp } = &cfg.traffic.source else {
        return Err(PipelineError::new(
            Stage::Traffic,
            "generate-traffic needs a synthetic traffic source",
        ));
    };
    let n_series = cfg.network.sbs_counts.total() + 2;
    let series = synth_diurnal(*n_days, n_series, mix(cfg.seed, SALT_TRAFFIC), *noise_amp);
    let path = match out {
        Some(p) => p,
        None => {
            ensure_dir(cfg)?;
            cfg.output_dir.join("trace.csv")
        }
    };
    let mut buf = Vec::new();
    crate::traffic::emit_trace(&mut buf, &series).stage(Stage::Traffic)?;
    write_file(&path, &buf, Stage::Traffic)?;
    Ok(path)
}

/// Traffic preparation plus federated training; writes the predictor
/// checkpoint and the per-round RMSE log.
pub fn train_fl_only(cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let dir = ensure_dir(cfg)?;
    write_config(&dir, cfg)?;
    let prepared = prepare_traffic(cfg)?;
    write_run_meta(&dir, cfg, &prepared)?;
    let fl = fl_stage(&prepared, cfg)?;
    write_fl_artifacts(&dir, &fl)?;
    Ok(dir)
}

/// Traffic preparation, federated training when the agent consumes
/// predictions, then agent training; writes all offline artifacts.
pub fn train_agent_only(cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let dir = ensure_dir(cfg)?;
    write_config(&dir, cfg)?;
    let prepared = prepare_traffic(cfg)?;
    write_run_meta(&dir, cfg, &prepared)?;
    let fl = if cfg.agent.input == AgentInput::Predicted {
        let fl = fl_stage(&prepared, cfg)?;
        write_fl_artifacts(&dir, &fl)?;
        Some(fl)
    } else {
        None
    };
    let outcome = agent_stage(&prepared, cfg, fl.as_ref().map(|f| &f.model))?;
    write_agent_artifacts(&dir, &outcome)?;
    Ok(dir)
}

/// The full offline-then-online pipeline: ingest or synthesize traffic,
/// train the predictor and the agent (when the learned policy is enabled),
/// then walk the test slots evaluating every enabled policy.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let dir = ensure_dir(cfg)?;
    write_config(&dir, cfg)?;
    let prepared = prepare_traffic(cfg)?;
    write_run_meta(&dir, cfg, &prepared)?;

    let famac = cfg.policies.contains(&PolicyKind::Famac);
    let fl = if famac && cfg.agent.input == AgentInput::Predicted {
        let fl = fl_stage(&prepared, cfg)?;
        write_fl_artifacts(&dir, &fl)?;
        Some(fl)
    } else {
        None
    };
    let agent = if famac {
        let outcome = agent_stage(&prepared, cfg, fl.as_ref().map(|f| &f.model))?;
        write_agent_artifacts(&dir, &outcome)?;
        Some(outcome)
    } else {
        None
    };

    let eval = evaluate_stage(&prepared, cfg, fl.as_ref(), agent.as_ref())?;
    write_eval_artifacts(&dir, &eval)?;
    Ok(PipelineOutput {
        dir,
        summary: eval.summary,
        skipped: eval.skipped,
    })
}
