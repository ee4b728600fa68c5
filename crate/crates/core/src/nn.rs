//! A minimal dense-network engine: flat parameter vectors, exact
//! reverse-mode gradients and an Adam optimizer. Shared by the traffic
//! predictor, the actor trunk/heads and the critic.
//!
//! Parameters live in one flat vector per network. Layer `l` mapping `in`
//! to `out` units occupies `(in + 1) * out` slots: the `out x in` weight
//! matrix row-major, then `out` biases. Checkpoints use the same flat
//! layout: a little-endian `u32` header length, a JSON header describing the
//! [`LayerSpec`] and parameter count, then the raw values as little-endian
//! `f64`s.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected} {what}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

/// Activation on the last layer. `Sigmoid` is applied per unit, which is
/// what lets a policy emit one independent on/off probability per output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    Sigmoid,
    Relu,
}

/// Widths and activations; fully determines the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// `[input, hidden..., output]` unit counts.
    pub widths: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl LayerSpec {
    pub fn new(
        widths: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::InvalidSpec(format!(
                "need input and output widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "zero-width layer in {widths:?}"
            )));
        }
        Ok(LayerSpec {
            widths,
            hidden_activation,
            output_activation,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total parameters: weights plus biases over every layer.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Offset of layer `l`'s block in the flat vector.
    fn layer_offset(&self, layer: usize) -> usize {
        self.widths
            .windows(2)
            .take(layer)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }
}

/// Flat, layer-indexed parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

/// Gradients share the flat layout of the parameters they refer to.
pub type Gradient = ParamVector;

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamVector) {
        assert_eq!(self.len(), other.len(), "parameter shapes must match");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    /// `self - other`, elementwise.
    pub fn minus(&self, other: &ParamVector) -> ParamVector {
        assert_eq!(self.len(), other.len(), "parameter shapes must match");
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, scale: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * scale).collect())
    }
}

/// Seeded uniform initialization in `+-sqrt(6 / (fan_in + fan_out))`;
/// biases start at zero.
pub fn init_params(spec: &LayerSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for w in spec.widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.random_range(-bound..bound));
        }
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector(values)
}

fn apply_hidden(activation: HiddenActivation, z: f64) -> f64 {
    match activation {
        HiddenActivation::Relu => z.max(0.0),
        HiddenActivation::Tanh => z.tanh(),
    }
}

fn hidden_derivative(activation: HiddenActivation, z: f64, y: f64) -> f64 {
    match activation {
        HiddenActivation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        HiddenActivation::Tanh => 1.0 - y * y,
    }
}

fn apply_output(activation: OutputActivation, z: f64) -> f64 {
    match activation {
        OutputActivation::Linear => z,
        OutputActivation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        OutputActivation::Relu => z.max(0.0),
    }
}

fn output_derivative(activation: OutputActivation, z: f64, y: f64) -> f64 {
    match activation {
        OutputActivation::Linear => 1.0,
        OutputActivation::Sigmoid => y * (1.0 - y),
        OutputActivation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn check_shapes(spec: &LayerSpec, params: &ParamVector, input: &[f64]) -> Result<(), NnError> {
    if params.len() != spec.param_count() {
        return Err(NnError::ShapeMismatch {
            what: "parameters",
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    if input.len() != spec.input_width() {
        return Err(NnError::ShapeMismatch {
            what: "input units",
            expected: spec.input_width(),
            got: input.len(),
        });
    }
    Ok(())
}

struct ForwardTrace {
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
    /// Activated values per layer (the last one is the network output).
    act: Vec<Vec<f64>>,
}

fn forward_trace(spec: &LayerSpec, params: &ParamVector, input: &[f64]) -> ForwardTrace {
    let n_layers = spec.n_layers();
    let mut pre = Vec::with_capacity(n_layers);
    let mut act = Vec::with_capacity(n_layers);
    let values = params.values();
    let mut current: &[f64] = input;
    for layer in 0..n_layers {
        let (fan_in, fan_out) = (spec.widths[layer], spec.widths[layer + 1]);
        let offset = spec.layer_offset(layer);
        let weights = &values[offset..offset + fan_in * fan_out];
        let biases = &values[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        let mut z = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut sum = biases[o];
            for (w, x) in row.iter().zip(current) {
                sum += w * x;
            }
            z.push(sum);
        }
        let y: Vec<f64> = if layer + 1 == n_layers {
            z.iter()
                .map(|v| apply_output(spec.output_activation, *v))
                .collect()
        } else {
            z.iter()
                .map(|v| apply_hidden(spec.hidden_activation, *v))
                .collect()
        };
        pre.push(z);
        act.push(y);
        current = act.last().unwrap();
    }
    ForwardTrace { pre, act }
}

/// Deterministic forward pass.
pub fn forward(spec: &LayerSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>, NnError> {
    check_shapes(spec, params, input)?;
    let mut trace = forward_trace(spec, params, input);
    // A spec always has at least one layer.
    Ok(trace.act.pop().unwrap())
}

/// Gradients of `output . upstream` with respect to parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    pub param_grad: Gradient,
    pub input_grad: Vec<f64>,
}

/// Exact reverse-mode gradient of the scalar `output . upstream`.
pub fn backward(
    spec: &LayerSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<BackwardResult, NnError> {
    check_shapes(spec, params, input)?;
    if upstream.len() != spec.output_width() {
        return Err(NnError::ShapeMismatch {
            what: "upstream units",
            expected: spec.output_width(),
            got: upstream.len(),
        });
    }
    let trace = forward_trace(spec, params, input);
    let n_layers = spec.n_layers();
    let values = params.values();
    let mut grad = vec![0.0; params.len()];

    // Delta at the output layer.
    let last = n_layers - 1;
    let mut delta: Vec<f64> = (0..spec.output_width())
        .map(|o| {
            upstream[o]
                * output_derivative(
                    spec.output_activation,
                    trace.pre[last][o],
                    trace.act[last][o],
                )
        })
        .collect();

    for layer in (0..n_layers).rev() {
        let (fan_in, fan_out) = (spec.widths[layer], spec.widths[layer + 1]);
        let offset = spec.layer_offset(layer);
        let prev_act: &[f64] = if layer == 0 {
            input
        } else {
            &trace.act[layer - 1]
        };

        for o in 0..fan_out {
            let w_row = offset + o * fan_in;
            for i in 0..fan_in {
                grad[w_row + i] = delta[o] * prev_act[i];
            }
            grad[offset + fan_in * fan_out + o] = delta[o];
        }

        // Propagate to the previous layer (or the input).
        let mut prev_delta = vec![0.0; fan_in];
        for o in 0..fan_out {
            let row = &values[offset + o * fan_in..offset + (o + 1) * fan_in];
            for i in 0..fan_in {
                prev_delta[i] += row[i] * delta[o];
            }
        }
        if layer > 0 {
            for (i, d) in prev_delta.iter_mut().enumerate() {
                *d *= hidden_derivative(
                    spec.hidden_activation,
                    trace.pre[layer - 1][i],
                    trace.act[layer - 1][i],
                );
            }
        }
        delta = prev_delta;
    }

    Ok(BackwardResult {
        param_grad: ParamVector(grad),
        input_grad: delta,
    })
}

/// Adam moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One bias-corrected Adam step in the descent direction of `grad`.
    /// Ascent callers pass the negated gradient.
    pub fn step(
        &mut self,
        params: &mut ParamVector,
        grad: &Gradient,
        lr: f64,
        betas: (f64, f64),
        eps: f64,
    ) -> Result<(), NnError> {
        if grad.len() != params.len() || grad.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                what: "gradient entries",
                expected: params.len(),
                got: grad.len(),
            });
        }
        if !grad.is_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        let (beta1, beta2) = betas;
        self.t += 1;
        let bias1 = 1.0 - beta1.powi(self.t as i32);
        let bias2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..grad.len() {
            let g = grad.values()[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params.values_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    /// [`AdamState::step`] with the conventional `beta = (0.9, 0.999)`,
    /// `eps = 1e-8`.
    pub fn step_default(
        &mut self,
        params: &mut ParamVector,
        grad: &Gradient,
        lr: f64,
    ) -> Result<(), NnError> {
        self.step(params, grad, lr, (0.9, 0.999), 1e-8)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    widths: Vec<usize>,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
    param_count: usize,
}

/// Writes `[u32 header_len][JSON header][f64 LE values]`.
pub fn save_params<W: Write>(
    mut writer: W,
    spec: &LayerSpec,
    params: &ParamVector,
) -> Result<(), NnError> {
    if params.len() != spec.param_count() {
        return Err(NnError::ShapeMismatch {
            what: "parameters",
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    let header = CheckpointHeader {
        widths: spec.widths.clone(),
        hidden_activation: spec.hidden_activation,
        output_activation: spec.output_activation,
        param_count: params.len(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| NnError::BadHeader(e.to_string()))?;
    writer.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    writer.write_all(&header_bytes)?;
    for v in params.values() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_params`].
pub fn load_params<R: Read>(mut reader: R) -> Result<(LayerSpec, ParamVector), NnError> {
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| NnError::BadHeader(e.to_string()))?;
    let spec = LayerSpec::new(
        header.widths,
        header.hidden_activation,
        header.output_activation,
    )?;
    if header.param_count != spec.param_count() {
        return Err(NnError::BadHeader(format!(
            "param_count {} does not match spec ({})",
            header.param_count,
            spec.param_count()
        )));
    }
    let mut values = Vec::with_capacity(header.param_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.param_count {
        reader.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((spec, ParamVector(values)))
}
