//! Federated traffic prediction.
//!
//! Each small cell trains a next-slot load regressor on its own private
//! window samples; a server aggregates the sample-count-weighted mean of the
//! parameter deltas and folds it into the global model. Only parameter
//! vectors and sample counts ever cross the client boundary; the server
//! side of the protocol ([`aggregate`], [`server_update`]) cannot observe
//! raw samples by construction.
//!
//! The reference local model is a windowed feed-forward regressor; anything
//! trained through the same flat-parameter interface (a recurrent stack,
//! say) can be dropped in because the averaging protocol never looks inside
//! the vector.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    backward, forward, init_params, HiddenActivation, LayerSpec, NnError, OutputActivation,
    ParamVector,
};

#[derive(Debug, thiserror::Error)]
pub enum FedError {
    #[error("client {0} has no training samples")]
    EmptyDataset(usize),
    #[error("series of length {len} cannot provide window-{window} samples in {range:?}")]
    SeriesTooShort {
        len: usize,
        window: usize,
        range: std::ops::Range<usize>,
    },
    #[error("delta shapes differ: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("aggregate needs a positive total sample count")]
    NoSamples,
    #[error("rmse needs equal-length, non-empty vectors ({0} vs {1})")]
    BadRmseInput(usize, usize),
    #[error("history of length {got} is shorter than the window {want}")]
    ShortHistory { want: usize, got: usize },
    #[error("federation needs at least one client")]
    NoClients,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Input windows and next-slot targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl RegressionSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Sliding windows over `series[range]`: each sample predicts
    /// `series[t]` from the `window` values before it. Targets stay inside
    /// `range`; the lookback may reach earlier history.
    pub fn windows(
        series: &[f64],
        range: std::ops::Range<usize>,
        window: usize,
    ) -> Result<Self, FedError> {
        let start = range.start.max(window);
        let end = range.end.min(series.len());
        if start >= end {
            return Err(FedError::SeriesTooShort {
                len: series.len(),
                window,
                range,
            });
        }
        let mut inputs = Vec::with_capacity(end - start);
        let mut targets = Vec::with_capacity(end - start);
        for t in start..end {
            inputs.push(series[t - window..t].to_vec());
            targets.push(series[t]);
        }
        Ok(RegressionSet { inputs, targets })
    }
}

/// One small cell's private training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub sbs_id: usize,
    pub data: RegressionSet,
}

impl ClientDataset {
    pub fn from_series(
        sbs_id: usize,
        series: &[f64],
        range: std::ops::Range<usize>,
        window: usize,
    ) -> Result<Self, FedError> {
        Ok(ClientDataset {
            sbs_id,
            data: RegressionSet::windows(series, range, window)?,
        })
    }

    /// Sample count, the aggregation weight.
    pub fn n_samples(&self) -> usize {
        self.data.len()
    }
}

/// The published predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub spec: LayerSpec,
    pub params: ParamVector,
}

impl GlobalModel {
    pub fn init(spec: LayerSpec, seed: u64) -> Self {
        let params = init_params(&spec, seed);
        GlobalModel { spec, params }
    }
}

/// The reference regressor shape: `window` inputs, ReLU hidden layers, one
/// linear output unit.
pub fn predictor_spec(window: usize, hidden: &[usize]) -> Result<LayerSpec, NnError> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(window);
    widths.extend_from_slice(hidden);
    widths.push(1);
    LayerSpec::new(widths, HiddenActivation::Relu, OutputActivation::Linear)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    /// Communication rounds.
    pub rounds: usize,
    /// Mini-batch passes over the local data per round.
    pub local_epochs: usize,
    pub client_lr: f64,
    /// Fraction of the aggregated delta folded into the global model each
    /// round. 1.0 applies client improvements as-is (classical weight
    /// averaging); a negative value gives the literal subtractive update.
    pub server_lr: f64,
    pub batch_size: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        // A 20 x 5 schedule spends the conventional 100-epoch budget.
        FederationConfig {
            rounds: 20,
            local_epochs: 5,
            client_lr: 0.01,
            server_lr: 1.0,
            batch_size: 16,
        }
    }
}

fn mix_seed(seed: u64, round: usize) -> u64 {
    // splitmix64 over the pair keeps round streams decorrelated.
    let mut z = seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean squared-error gradient over one batch.
fn batch_gradient(
    spec: &LayerSpec,
    params: &ParamVector,
    data: &RegressionSet,
    batch: &[usize],
) -> Result<ParamVector, FedError> {
    let mut grad = ParamVector::zeros(params.len());
    let scale = 1.0 / batch.len() as f64;
    for &idx in batch {
        let out = forward(spec, params, &data.inputs[idx])?;
        let err = out[0] - data.targets[idx];
        let upstream = [2.0 * err * scale];
        let result = backward(spec, params, &data.inputs[idx], &upstream)?;
        grad.add_scaled(1.0, &result.param_grad);
    }
    Ok(grad)
}

/// Local client pass: copies the global weights, runs `local_epochs` of
/// shuffled mini-batch gradient descent on squared error, and returns the
/// trained-minus-initial parameter delta.
pub fn local_training(
    client: &ClientDataset,
    global: &GlobalModel,
    cfg: &FederationConfig,
    round_seed: u64,
) -> Result<ParamVector, FedError> {
    if client.data.is_empty() {
        return Err(FedError::EmptyDataset(client.sbs_id));
    }
    let mut params = global.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
    let mut order: Vec<usize> = (0..client.data.len()).collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let grad = batch_gradient(&global.spec, &params, &client.data, batch)?;
            params.add_scaled(-cfg.client_lr, &grad);
        }
    }
    Ok(params.minus(&global.params))
}

/// Sample-count-weighted mean of client deltas.
pub fn aggregate(deltas: &[(ParamVector, usize)]) -> Result<ParamVector, FedError> {
    let total: usize = deltas.iter().map(|(_, n)| n).sum();
    if total == 0 || deltas.is_empty() {
        return Err(FedError::NoSamples);
    }
    let len = deltas[0].0.len();
    let mut mean = ParamVector::zeros(len);
    for (delta, n) in deltas {
        if delta.len() != len {
            return Err(FedError::ShapeMismatch(len, delta.len()));
        }
        mean.add_scaled(*n as f64 / total as f64, delta);
    }
    Ok(mean)
}

/// Folds the aggregated delta into the global model.
pub fn server_update(global: &GlobalModel, delta: &ParamVector, server_lr: f64) -> GlobalModel {
    let mut params = global.params.clone();
    params.add_scaled(server_lr, delta);
    GlobalModel {
        spec: global.spec.clone(),
        params,
    }
}

/// One line of the per-round RMSE log; `model` is `global` or a client id.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub model: String,
    pub rmse: f64,
}

/// RMSE of a model over a dataset.
pub fn model_rmse(
    spec: &LayerSpec,
    params: &ParamVector,
    data: &RegressionSet,
) -> Result<f64, FedError> {
    let mut preds = Vec::with_capacity(data.len());
    for input in &data.inputs {
        preds.push(forward(spec, params, input)?[0]);
    }
    rmse(&preds, &data.targets)
}

/// The whole protocol: broadcast, local training, aggregation, server
/// update, over `cfg.rounds` rounds. Clients are visited in index order so
/// the run is deterministic regardless of scheduling. The log carries the
/// untrained round-0 validation RMSE, each client's post-training RMSE on
/// its own data, and the global validation RMSE after every round.
pub fn run_federation(
    clients: &[ClientDataset],
    val: &RegressionSet,
    spec: &LayerSpec,
    cfg: &FederationConfig,
    seed: u64,
) -> Result<(GlobalModel, Vec<RoundRecord>), FedError> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    for c in clients {
        if c.data.is_empty() {
            return Err(FedError::EmptyDataset(c.sbs_id));
        }
    }
    let mut global = GlobalModel::init(spec.clone(), seed);
    let mut log = Vec::new();
    log.push(RoundRecord {
        round: 0,
        model: "global".into(),
        rmse: model_rmse(spec, &global.params, val)?,
    });
    for round in 1..=cfg.rounds {
        let round_seed = mix_seed(seed, round);
        let mut deltas = Vec::with_capacity(clients.len());
        for client in clients {
            let delta = local_training(client, &global, cfg, round_seed)?;
            let mut trained = global.params.clone();
            trained.add_scaled(1.0, &delta);
            log.push(RoundRecord {
                round,
                model: format!("client_{}", client.sbs_id),
                rmse: model_rmse(spec, &trained, &client.data)?,
            });
            deltas.push((delta, client.n_samples()));
        }
        let mean_delta = aggregate(&deltas)?;
        global = server_update(&global, &mean_delta, cfg.server_lr);
        log.push(RoundRecord {
            round,
            model: "global".into(),
            rmse: model_rmse(spec, &global.params, val)?,
        });
    }
    Ok((global, log))
}

/// The schedule a federation of one client runs: the same round structure
/// with the full delta folded in each time. Used as the
/// centralized-equivalence reference.
pub fn solo_training(
    client: &ClientDataset,
    initial: GlobalModel,
    cfg: &FederationConfig,
    seed: u64,
) -> Result<GlobalModel, FedError> {
    let mut model = initial;
    for round in 1..=cfg.rounds {
        let delta = local_training(client, &model, cfg, mix_seed(seed, round))?;
        model = server_update(&model, &delta, 1.0);
    }
    Ok(model)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64, FedError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(FedError::BadRmseInput(pred.len(), target.len()));
    }
    let sum_sq: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum_sq / pred.len() as f64).sqrt())
}

/// Next-slot load per small cell, clipped into `[0, 1]`. Histories longer
/// than the window contribute their most recent slots.
pub fn predict_loads(global: &GlobalModel, histories: &[Vec<f64>]) -> Result<Vec<f64>, FedError> {
    let window = global.spec.input_width();
    let mut out = Vec::with_capacity(histories.len());
    for history in histories {
        if history.len() < window {
            return Err(FedError::ShortHistory {
                want: window,
                got: history.len(),
            });
        }
        let tail = &history[history.len() - window..];
        let raw = forward(&global.spec, &global.params, tail)?[0];
        out.push(raw.clamp(0.0, 1.0));
    }
    Ok(out)
}
