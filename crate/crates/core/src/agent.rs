//! The switching agent: a shared actor trunk feeding one sigmoid head per
//! small cell, a TD(0) critic, and a reward normalized by the running
//! maximum of observed power savings.
//!
//! One sigmoid output per cell keeps the action layer linear in the number
//! of cells instead of enumerating the `2^(N-1)` joint assignments. The
//! trunk weights are shared across heads and updated with the mean of the
//! per-head gradients, which is what coordinates the per-cell policies;
//! each head additionally learns from its own gradient alone.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::{
    offloaded_mbs_load, power_saved, qos_feasible, MacroCellConfig, SwitchVector,
};
use crate::nn::{
    backward, forward, init_params, AdamState, HiddenActivation, LayerSpec, NnError,
    OutputActivation, ParamVector,
};
use crate::power::{LoadFraction, ProfileSet};
use crate::traffic::BsLoadSeries;

/// Sigmoid outputs are clamped this far away from {0, 1} before the
/// log-likelihood; the gradient stays finite at saturated heads.
const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("load series has {got} stations, the cell has {want}")]
    SeriesMismatch { want: usize, got: usize },
    #[error("training window of {len} slots cannot hold a {steps}-step episode")]
    WindowTooShort { len: usize, steps: usize },
    #[error("load {0} outside [0, 1] reached the agent")]
    BadLoad(f64),
    #[error("non-finite temporal-difference error")]
    NonFiniteTd,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// What the agent observes: every station's load plus the current on/off
/// status of each small cell, encoded as `[loads..., statuses...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Per-station loads, macro first.
    pub loads: Vec<f64>,
    /// Small-cell statuses only; `true` is on.
    pub status: Vec<bool>,
}

impl AgentState {
    /// Encoded width for a cell with `n_bs` stations.
    pub fn dim(n_bs: usize) -> usize {
        2 * n_bs - 1
    }

    pub fn encoded(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.loads.len() + self.status.len());
        v.extend_from_slice(&self.loads);
        v.extend(self.status.iter().map(|on| if *on { 1.0 } else { 0.0 }));
        v
    }
}

/// Per-small-cell on/off decision; `true` keeps the cell on. The macro never
/// appears here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentAction {
    pub bits: Vec<bool>,
}

impl AgentAction {
    pub fn all_on(n_sbs: usize) -> Self {
        AgentAction {
            bits: vec![true; n_sbs],
        }
    }

    pub fn n_off(&self) -> usize {
        self.bits.iter().filter(|on| !**on).count()
    }

    pub fn switch(&self) -> SwitchVector {
        SwitchVector::from_sbs_bits(&self.bits)
    }
}

/// Shared trunk plus one head per small cell. The trunk ends in an
/// activated feature layer; every head maps those features to a single
/// sigmoid unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub trunk_spec: LayerSpec,
    pub trunk: ParamVector,
    pub head_spec: LayerSpec,
    pub heads: Vec<ParamVector>,
}

impl ActorParams {
    pub fn init(
        n_bs: usize,
        global_widths: &[usize],
        local_widths: &[usize],
        seed: u64,
    ) -> Result<Self, NnError> {
        assert!(n_bs >= 2, "an agent needs at least one small cell");
        let mut trunk_widths = vec![AgentState::dim(n_bs)];
        trunk_widths.extend_from_slice(global_widths);
        let trunk_spec =
            LayerSpec::new(trunk_widths, HiddenActivation::Relu, OutputActivation::Relu)?;

        let mut head_widths = vec![trunk_spec.output_width()];
        head_widths.extend_from_slice(local_widths);
        head_widths.push(1);
        let head_spec = LayerSpec::new(
            head_widths,
            HiddenActivation::Relu,
            OutputActivation::Sigmoid,
        )?;

        let trunk = init_params(&trunk_spec, seed);
        let heads = (0..n_bs - 1)
            .map(|n| {
                let mut params = init_params(&head_spec, mix(seed, 1 + n as u64));
                // Bias the fresh policy toward keeping cells on (p ~ 0.88).
                // A neutral start sleeps half the fleet at once, which
                // overloads the macro every step and starves learning of
                // any reward signal.
                let last = params.len() - 1;
                params.values_mut()[last] = 2.0;
                params
            })
            .collect();
        Ok(ActorParams {
            trunk_spec,
            trunk,
            head_spec,
            heads,
        })
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }
}

/// The state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub spec: LayerSpec,
    pub params: ParamVector,
}

impl CriticParams {
    pub fn init(n_bs: usize, widths: &[usize], seed: u64) -> Result<Self, NnError> {
        let mut all = vec![AgentState::dim(n_bs)];
        all.extend_from_slice(widths);
        all.push(1);
        let spec = LayerSpec::new(all, HiddenActivation::Relu, OutputActivation::Linear)?;
        let params = init_params(&spec, seed);
        Ok(CriticParams { spec, params })
    }
}

/// Running maximum of observed power savings; divides positive rewards so
/// they stay in `(0, 1]`. Starts at zero and never decreases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    p_saved_max: f64,
}

impl RewardNormalizer {
    pub fn new() -> Self {
        RewardNormalizer { p_saved_max: 0.0 }
    }

    pub fn observe(&mut self, p_saved: f64) {
        if p_saved > self.p_saved_max {
            self.p_saved_max = p_saved;
        }
    }

    pub fn max(&self) -> f64 {
        self.p_saved_max
    }
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        Self::new()
    }
}

/// One step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub action: AgentAction,
    pub reward: f64,
    pub next_state: AgentState,
    pub terminal: bool,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cell on-probabilities: the trunk runs once, every head reads the same
/// feature vector.
pub fn actor_forward(actor: &ActorParams, state: &AgentState) -> Result<Vec<f64>, NnError> {
    let features = forward(&actor.trunk_spec, &actor.trunk, &state.encoded())?;
    let mut probs = Vec::with_capacity(actor.heads.len());
    for head in &actor.heads {
        probs.push(forward(&actor.head_spec, head, &features)?[0]);
    }
    Ok(probs)
}

/// Independent Bernoulli draw per cell, with an `exploration`-probability
/// override by a fair coin.
pub fn sample_action<R: Rng>(probs: &[f64], exploration: f64, rng: &mut R) -> AgentAction {
    let bits = probs
        .iter()
        .map(|p| {
            let mut bit = rng.random_bool(p.clamp(0.0, 1.0));
            if rng.random::<f64>() < exploration {
                bit = rng.random_bool(0.5);
            }
            bit
        })
        .collect();
    AgentAction { bits }
}

/// The three-level reward:
///
/// * `-1` when the action overloads the macro or costs net power,
/// * `-0.1` when the agent sleeps nothing,
/// * `p_saved / max_so_far` for a positive saving (the normalizer is
///   updated first, so this never exceeds 1),
/// * `0` for the boundary case of a switch-off that saves exactly nothing.
pub fn reward(
    raw_loads: &[LoadFraction],
    action: &AgentAction,
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
    normalizer: &mut RewardNormalizer,
) -> f64 {
    let switch = action.switch();
    let effective = offloaded_mbs_load(raw_loads[0], &raw_loads[1..], &switch, cfg, profiles);
    if !qos_feasible(effective, cfg) {
        return -1.0;
    }
    let p_saved = power_saved(raw_loads, &switch, profiles, cfg);
    if p_saved < 0.0 {
        return -1.0;
    }
    if action.bits.iter().all(|on| *on) {
        return -0.1;
    }
    if p_saved > 0.0 {
        normalizer.observe(p_saved);
        return p_saved / normalizer.max();
    }
    0.0
}

/// One-step temporal-difference error with terminal bootstrap masking.
pub fn td_error(r: f64, v_next: f64, v_now: f64, gamma: f64, terminal: bool) -> f64 {
    let bootstrap = if terminal { 0.0 } else { gamma * v_next };
    r + bootstrap - v_now
}

/// The critic's value estimate for a state.
pub fn critic_value(critic: &CriticParams, state: &AgentState) -> Result<f64, NnError> {
    Ok(forward(&critic.spec, &critic.params, &state.encoded())?[0])
}

/// One semi-gradient descent step on the squared TD error, holding the TD
/// target fixed: `w += 2 * lr * delta * grad V(s)`.
pub fn critic_update(
    critic: &mut CriticParams,
    transition: &Transition,
    delta_v: f64,
    critic_lr: f64,
) -> Result<(), AgentError> {
    if !delta_v.is_finite() {
        return Err(AgentError::NonFiniteTd);
    }
    let grad = backward(
        &critic.spec,
        &critic.params,
        &transition.state.encoded(),
        &[1.0],
    )?;
    critic
        .params
        .add_scaled(2.0 * critic_lr * delta_v, &grad.param_grad);
    Ok(())
}

/// Gradient of one head's scaled log-likelihood, split into the trunk slice
/// and the head slice of the concatenated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub trunk: ParamVector,
    pub head: ParamVector,
}

/// Per-head gradients of `delta_v * log Bernoulli(a_n | p_n)` with respect
/// to the trunk-plus-head parameters. Heads are conditionally independent
/// given the trunk, so the joint log-likelihood splits into these per-cell
/// terms.
pub fn actor_gradients(
    actor: &ActorParams,
    state: &AgentState,
    action: &AgentAction,
    delta_v: f64,
) -> Result<Vec<HeadGradient>, NnError> {
    let encoded = state.encoded();
    let features = forward(&actor.trunk_spec, &actor.trunk, &encoded)?;
    let mut grads = Vec::with_capacity(actor.heads.len());
    for (head, &on) in actor.heads.iter().zip(action.bits.iter()) {
        let p = forward(&actor.head_spec, head, &features)?[0].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let dlog_dp = if on { 1.0 / p } else { -1.0 / (1.0 - p) };
        let upstream = [delta_v * dlog_dp];
        let head_back = backward(&actor.head_spec, head, &features, &upstream)?;
        let trunk_back = backward(
            &actor.trunk_spec,
            &actor.trunk,
            &encoded,
            &head_back.input_grad,
        )?;
        grads.push(HeadGradient {
            trunk: trunk_back.param_grad,
            head: head_back.param_grad,
        });
    }
    Ok(grads)
}

/// Head-slice gradients plus the mean trunk gradient, with the trunk swept
/// once: backward is linear in the upstream, so pushing the mean of the
/// heads' input gradients through the trunk equals averaging the per-head
/// trunk gradients. Saves a factor of the head count in the training loop.
fn actor_gradients_fused(
    actor: &ActorParams,
    state: &AgentState,
    action: &AgentAction,
    delta_v: f64,
) -> Result<(Vec<ParamVector>, ParamVector), NnError> {
    let encoded = state.encoded();
    let features = forward(&actor.trunk_spec, &actor.trunk, &encoded)?;
    let n = actor.heads.len();
    let mut head_grads = Vec::with_capacity(n);
    let mut upstream_mean = vec![0.0; features.len()];
    for (head, &on) in actor.heads.iter().zip(action.bits.iter()) {
        let p = forward(&actor.head_spec, head, &features)?[0].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let dlog_dp = if on { 1.0 / p } else { -1.0 / (1.0 - p) };
        let back = backward(&actor.head_spec, head, &features, &[delta_v * dlog_dp])?;
        for (acc, g) in upstream_mean.iter_mut().zip(&back.input_grad) {
            *acc += g / n as f64;
        }
        head_grads.push(back.param_grad);
    }
    let trunk_back = backward(&actor.trunk_spec, &actor.trunk, &encoded, &upstream_mean)?;
    Ok((head_grads, trunk_back.param_grad))
}

/// Plain ascent: each head climbs its own gradient slice, the trunk climbs
/// the arithmetic mean of every head's trunk slice.
pub fn actor_update(
    actor: &mut ActorParams,
    grads: &[HeadGradient],
    local_lr: f64,
    global_lr: f64,
) {
    assert_eq!(grads.len(), actor.heads.len(), "one gradient per head");
    let mut mean = ParamVector::zeros(actor.trunk.len());
    for g in grads {
        mean.add_scaled(1.0 / grads.len() as f64, &g.trunk);
    }
    actor.trunk.add_scaled(global_lr, &mean);
    for (head, g) in actor.heads.iter_mut().zip(grads) {
        head.add_scaled(local_lr, &g.head);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Training hyperparameters; the defaults are the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentHyperparams {
    pub global_widths: Vec<usize>,
    pub local_widths: Vec<usize>,
    pub critic_widths: Vec<usize>,
    /// Shared by the trunk and the heads.
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    pub exploration: f64,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub optimizer: OptimizerKind,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        AgentHyperparams {
            global_widths: vec![32, 64, 128, 256],
            local_widths: vec![128, 64, 32],
            critic_widths: vec![32, 64, 128, 256, 512, 32],
            actor_lr: 0.01,
            critic_lr: 0.01,
            discount: 0.90,
            exploration: 0.01,
            episodes: 2000,
            steps_per_episode: 144,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Per-episode training log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub cum_reward: f64,
    pub mean_p_saved: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub actor: ActorParams,
    pub critic: CriticParams,
    pub normalizer: RewardNormalizer,
    pub episodes: Vec<EpisodeRecord>,
    /// Smallest and largest per-step reward seen over the whole run.
    pub reward_bounds: (f64, f64),
}

struct AdamBundle {
    trunk: AdamState,
    heads: Vec<AdamState>,
    critic: AdamState,
}

/// Runs the episodic loop: observe, sample, reward, TD error, critic step,
/// per-head gradient accumulation, trunk/head updates, advance. One episode
/// is one simulated day; the value bootstrap is masked at the day boundary.
/// Deterministic for a fixed seed.
pub fn train(
    series: &BsLoadSeries,
    slots: std::ops::Range<usize>,
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
    hp: &AgentHyperparams,
    seed: u64,
) -> Result<TrainOutcome, AgentError> {
    let n_bs = cfg.n_bs();
    if series.n_bs() != n_bs {
        return Err(AgentError::SeriesMismatch {
            want: n_bs,
            got: series.n_bs(),
        });
    }
    let steps = hp.steps_per_episode;
    if slots.len() < steps || slots.end > series.n_slots() {
        return Err(AgentError::WindowTooShort {
            len: slots.len(),
            steps,
        });
    }
    let days = slots.len() / steps;

    let mut actor = ActorParams::init(n_bs, &hp.global_widths, &hp.local_widths, seed)?;
    let mut critic = CriticParams::init(n_bs, &hp.critic_widths, mix(seed, 0xC417))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7EA1));
    let mut normalizer = RewardNormalizer::new();
    let mut adam = AdamBundle {
        trunk: AdamState::new(actor.trunk.len()),
        heads: actor
            .heads
            .iter()
            .map(|h| AdamState::new(h.len()))
            .collect(),
        critic: AdamState::new(critic.params.len()),
    };
    let mut episodes = Vec::with_capacity(hp.episodes);
    let mut reward_bounds = (f64::INFINITY, f64::NEG_INFINITY);

    for episode in 0..hp.episodes {
        let base = slots.start + (episode % days) * steps;
        let mut loads = series.at(base);
        let mut status = vec![true; n_bs - 1];
        let mut cum_reward = 0.0;
        let mut p_saved_sum = 0.0;
        let mut violations = 0usize;

        for t in 0..steps {
            let state = AgentState {
                loads: loads.clone(),
                status: status.clone(),
            };
            let probs = actor_forward(&actor, &state)?;
            let action = sample_action(&probs, hp.exploration, &mut rng);

            let raw = to_load_fractions(&loads)?;
            let r = reward(&raw, &action, profiles, cfg, &mut normalizer);
            reward_bounds = (reward_bounds.0.min(r), reward_bounds.1.max(r));
            p_saved_sum += power_saved(&raw, &action.switch(), profiles, cfg);
            if r == -1.0 {
                violations += 1;
            }

            let terminal = t + 1 == steps;
            let next_loads = if terminal {
                loads.clone()
            } else {
                series.at(base + t + 1)
            };
            let next_state = AgentState {
                loads: next_loads.clone(),
                status: action.bits.clone(),
            };

            let v_now = critic_value(&critic, &state)?;
            let v_next = critic_value(&critic, &next_state)?;
            let delta = td_error(r, v_next, v_now, hp.discount, terminal);
            if !delta.is_finite() {
                return Err(AgentError::NonFiniteTd);
            }

            let transition = Transition {
                state,
                action: action.clone(),
                reward: r,
                next_state,
                terminal,
            };

            let (head_grads, trunk_mean) =
                actor_gradients_fused(&actor, &transition.state, &action, delta)?;
            match hp.optimizer {
                OptimizerKind::Sgd => {
                    critic_update(&mut critic, &transition, delta, hp.critic_lr)?;
                    actor.trunk.add_scaled(hp.actor_lr, &trunk_mean);
                    for (head, g) in actor.heads.iter_mut().zip(&head_grads) {
                        head.add_scaled(hp.actor_lr, g);
                    }
                }
                OptimizerKind::Adam => {
                    // Same gradient directions, Adam step sizes. The critic
                    // loss gradient is -2 * delta * grad V(s); actor ascent
                    // passes the negated objective gradient.
                    let v_grad = backward(
                        &critic.spec,
                        &critic.params,
                        &transition.state.encoded(),
                        &[1.0],
                    )?;
                    adam.critic.step_default(
                        &mut critic.params,
                        &v_grad.param_grad.scaled(-2.0 * delta),
                        hp.critic_lr,
                    )?;
                    adam.trunk.step_default(
                        &mut actor.trunk,
                        &trunk_mean.scaled(-1.0),
                        hp.actor_lr,
                    )?;
                    for ((head, state_n), g) in actor
                        .heads
                        .iter_mut()
                        .zip(adam.heads.iter_mut())
                        .zip(&head_grads)
                    {
                        state_n.step_default(head, &g.scaled(-1.0), hp.actor_lr)?;
                    }
                }
            }

            cum_reward += r;
            loads = next_loads;
            status = action.bits;
        }

        episodes.push(EpisodeRecord {
            episode,
            cum_reward,
            mean_p_saved: p_saved_sum / steps as f64,
            violations,
        });
    }

    Ok(TrainOutcome {
        actor,
        critic,
        normalizer,
        episodes,
        reward_bounds,
    })
}

/// Actor checkpoint: a little-endian `u32` head count, the trunk blob, then
/// each head blob, all in the flat checkpoint format.
pub fn save_actor<W: std::io::Write>(mut writer: W, actor: &ActorParams) -> Result<(), NnError> {
    writer.write_all(&(actor.heads.len() as u32).to_le_bytes())?;
    crate::nn::save_params(&mut writer, &actor.trunk_spec, &actor.trunk)?;
    for head in &actor.heads {
        crate::nn::save_params(&mut writer, &actor.head_spec, head)?;
    }
    Ok(())
}

pub fn load_actor<R: std::io::Read>(mut reader: R) -> Result<ActorParams, NnError> {
    let mut count_bytes = [0u8; 4];
    reader.read_exact(&mut count_bytes)?;
    let n_heads = u32::from_le_bytes(count_bytes) as usize;
    let (trunk_spec, trunk) = crate::nn::load_params(&mut reader)?;
    let mut heads = Vec::with_capacity(n_heads);
    let mut head_spec = None;
    for _ in 0..n_heads {
        let (spec, params) = crate::nn::load_params(&mut reader)?;
        head_spec.get_or_insert(spec);
        heads.push(params);
    }
    let head_spec = head_spec.ok_or_else(|| {
        NnError::InvalidSpec("an actor checkpoint needs at least one head".into())
    })?;
    Ok(ActorParams {
        trunk_spec,
        trunk,
        head_spec,
        heads,
    })
}

pub fn save_critic<W: std::io::Write>(writer: W, critic: &CriticParams) -> Result<(), NnError> {
    crate::nn::save_params(writer, &critic.spec, &critic.params)
}

pub fn load_critic<R: std::io::Read>(reader: R) -> Result<CriticParams, NnError> {
    let (spec, params) = crate::nn::load_params(reader)?;
    Ok(CriticParams { spec, params })
}

fn to_load_fractions(loads: &[f64]) -> Result<Vec<LoadFraction>, AgentError> {
    loads
        .iter()
        .map(|&l| LoadFraction::new(l).map_err(|_| AgentError::BadLoad(l)))
        .collect()
}

/// Deterministic evaluation: a cell stays on iff its head says on with
/// probability at least one half. Infeasible picks are repaired by waking
/// the sleeping cell with the largest load until the macro fits (or nothing
/// is left asleep).
pub fn act_greedy(
    actor: &ActorParams,
    state: &AgentState,
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
) -> Result<AgentAction, AgentError> {
    let probs = actor_forward(actor, state)?;
    let mut bits: Vec<bool> = probs.iter().map(|p| *p >= 0.5).collect();
    let raw = to_load_fractions(&state.loads)?;
    loop {
        let effective = offloaded_mbs_load(
            raw[0],
            &raw[1..],
            &SwitchVector::from_sbs_bits(&bits),
            cfg,
            profiles,
        );
        if qos_feasible(effective, cfg) {
            break;
        }
        let heaviest_off = (0..bits.len()).filter(|&i| !bits[i]).max_by(|&a, &b| {
            state.loads[a + 1]
                .partial_cmp(&state.loads[b + 1])
                .unwrap()
                .then(b.cmp(&a))
        });
        match heaviest_off {
            Some(i) => bits[i] = true,
            None => break,
        }
    }
    Ok(AgentAction { bits })
}
