//! Experiment orchestration: the JSON config schema, the staged
//! offline/online pipeline, figure-data export and the small-cell-count
//! sweep.
//!
//! Every run writes into its configured output directory:
//!
//! * `config.json`: the exact resolved configuration (re-running from it
//!   reproduces the run byte for byte),
//! * `run_meta.json`: grid map, normalization constants, split boundaries,
//! * `fl_rmse.csv` (`round,model,rmse`) and `predictor.params`,
//! * `agent_training.csv` (`episode,cum_reward,mean_p_saved,violations`),
//!   `actor.params`, `critic.params`,
//! * `metrics.csv` (`slot,policy,power_w,n_active_sbs,mbs_load,feasible`),
//!   `decisions.csv` (`slot,policy,gamma`),
//! * `energy_summary.csv`
//!   (`policy,energy_j,energy_saved_j,max_coverage_loss_pct`).

mod figures;
mod pipeline;
mod sweep;

pub use figures::emit_figures;
pub use pipeline::{
    generate_traffic, run_pipeline, train_agent_only, train_fl_only, PipelineOutput, SummaryRow,
};
pub use sweep::sweep_nsbs;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agent::AgentHyperparams;
use crate::network::{MacroCellConfig, NetworkError, OffloadScaling};
use crate::power::{BsClass, ProfileSet};

/// Pipeline stages, used to tag failures and pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Traffic,
    Federation,
    Agent,
    Evaluate,
    Figures,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Traffic => "traffic",
            Stage::Federation => "federation",
            Stage::Agent => "agent",
            Stage::Evaluate => "evaluate",
            Stage::Figures => "figures",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Traffic => 3,
            Stage::Federation => 4,
            Stage::Agent => 5,
            Stage::Evaluate => 6,
            Stage::Figures => 7,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A failure wrapped with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        PipelineError {
            stage,
            source: source.into(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Box<dyn std::error::Error + Send + Sync>>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

/// Switching policies the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// All-always-on.
    Aao,
    /// Exhaustive search (capped at 20 small cells).
    Es,
    /// Multi-level k-means clustering.
    Mlc,
    /// Threshold-based clustering plus per-cluster search.
    Thesis,
    /// The trained actor-critic agent.
    Famac,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Aao => "aao",
            PolicyKind::Es => "es",
            PolicyKind::Mlc => "mlc",
            PolicyKind::Thesis => "thesis",
            PolicyKind::Famac => "famac",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Small cells per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SbsCounts {
    #[serde(default)]
    pub rrh: usize,
    #[serde(default)]
    pub micro: usize,
    #[serde(default)]
    pub pico: usize,
    #[serde(default)]
    pub femto: usize,
}

impl SbsCounts {
    pub fn total(&self) -> usize {
        self.rrh + self.micro + self.pico + self.femto
    }

    /// Station classes in index order: all RRHs, then micro, pico, femto.
    pub fn classes(&self) -> Vec<BsClass> {
        let mut v = Vec::with_capacity(self.total());
        v.extend(std::iter::repeat_n(BsClass::Rrh, self.rrh));
        v.extend(std::iter::repeat_n(BsClass::Micro, self.micro));
        v.extend(std::iter::repeat_n(BsClass::Pico, self.pico));
        v.extend(std::iter::repeat_n(BsClass::Femto, self.femto));
        v
    }
}

fn default_capacity() -> f64 {
    1.0
}

fn default_scaling() -> OffloadScaling {
    OffloadScaling::BandwidthScaled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub sbs_counts: SbsCounts,
    #[serde(default = "default_capacity")]
    pub mbs_capacity_limit: f64,
    #[serde(default = "default_scaling")]
    pub offload_scaling: OffloadScaling,
    /// Override for the built-in per-class power constants.
    #[serde(default)]
    pub profiles: Option<ProfileSet>,
}

impl NetworkSection {
    pub fn cell_config(&self) -> Result<MacroCellConfig, NetworkError> {
        MacroCellConfig::new(
            self.sbs_counts.classes(),
            self.mbs_capacity_limit,
            self.offload_scaling,
        )
    }

    pub fn profiles(&self) -> ProfileSet {
        self.profiles.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSource {
    Synthetic { n_days: usize, noise_amp: f64 },
    Trace { path: PathBuf },
}

fn default_slot_minutes() -> f64 {
    10.0
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub source: TrafficSource,
    #[serde(default = "default_slot_minutes")]
    pub slot_minutes: f64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_window() -> usize {
    59
}

fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}

fn default_rounds() -> usize {
    20
}

fn default_local_epochs() -> usize {
    5
}

fn default_client_lr() -> f64 {
    0.01
}

fn default_server_lr() -> f64 {
    1.0
}

fn default_batch_size() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_client_lr")]
    pub client_lr: f64,
    #[serde(default = "default_server_lr")]
    pub server_lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// History length of the windowed regressor.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for FederationSection {
    fn default() -> Self {
        FederationSection {
            rounds: default_rounds(),
            local_epochs: default_local_epochs(),
            client_lr: default_client_lr(),
            server_lr: default_server_lr(),
            batch_size: default_batch_size(),
            window: default_window(),
            hidden: default_hidden(),
        }
    }
}

impl FederationSection {
    pub fn config(&self) -> crate::fedlearn::FederationConfig {
        crate::fedlearn::FederationConfig {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            client_lr: self.client_lr,
            server_lr: self.server_lr,
            batch_size: self.batch_size,
        }
    }
}

/// Where the agent's decision-time loads come from during evaluation (and
/// training): the federated predictor, or the trace itself (the ablation
/// that isolates prediction error).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentInput {
    Predicted,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(flatten)]
    pub hyper: AgentHyperparams,
    #[serde(default = "default_agent_input")]
    pub input: AgentInput,
}

fn default_agent_input() -> AgentInput {
    AgentInput::Predicted
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            hyper: AgentHyperparams::default(),
            input: default_agent_input(),
        }
    }
}

fn default_mlc_k_max() -> usize {
    8
}

fn default_thesis_threshold() -> usize {
    10
}

/// The whole experiment description; JSON on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub network: NetworkSection,
    pub traffic: TrafficSection,
    #[serde(default)]
    pub federation: FederationSection,
    #[serde(default)]
    pub agent: AgentSection,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_mlc_k_max")]
    pub mlc_k_max: usize,
    #[serde(default = "default_thesis_threshold")]
    pub thesis_threshold: usize,
    /// Re-run federated training every this many online slots on all data
    /// observed so far. Off by default: one offline model serves the run.
    #[serde(default)]
    pub refit_interval_slots: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self, PipelineError> {
        let cfg: ExperimentConfig = serde_json::from_str(json).stage(Stage::Config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).stage(Stage::Config)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.network.sbs_counts.total() == 0 {
            return Err(PipelineError::new(
                Stage::Config,
                "at least one small cell is required",
            ));
        }
        self.network.cell_config().stage(Stage::Config)?;
        self.network.profiles().validate().stage(Stage::Config)?;
        if self.policies.is_empty() {
            return Err(PipelineError::new(Stage::Config, "no policies enabled"));
        }
        if self.thesis_threshold < 2 && self.policies.contains(&PolicyKind::Thesis) {
            return Err(PipelineError::new(
                Stage::Config,
                "thesis_threshold must be at least 2",
            ));
        }
        let ratios: f64 = self.traffic.split.iter().sum();
        if (ratios - 1.0).abs() > 1e-9 {
            return Err(PipelineError::new(
                Stage::Config,
                "split ratios must sum to 1",
            ));
        }
        if self.traffic.slot_minutes <= 0.0 || self.traffic.slot_minutes.is_nan() {
            return Err(PipelineError::new(
                Stage::Config,
                "slot_minutes must be positive",
            ));
        }
        Ok(())
    }
}
