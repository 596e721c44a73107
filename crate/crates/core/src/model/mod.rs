//! Representation networks.
//!
//! Both architectures share the input embedding `u⁽⁰⁾ = tanh(W_in x + b_in)`
//! and the linear head. The baseline stacks plain `tanh(W u + b)` layers.
//! The xLSTM stack replaces each layer with a block that runs `S`
//! memory-gated micro-steps with shared weights, a gated feedforward mixer,
//! and a final `tanh` shaping layer.

mod checkpoint;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Field, JetTensor, NodeId, ParamId, ParamStore, Primitive, Tape};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Baseline,
    Xlstm,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Baseline => "pinn",
            Architecture::Xlstm => "xlstm-pinn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Sigmoid,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    /// Number of blocks (or hidden layers for the baseline), `L`.
    pub blocks: usize,
    /// Channel width `W`.
    pub width: usize,
    /// Micro-steps per block `S`; `0` skips the gated memory entirely.
    pub micro_steps: usize,
    pub input_gate: GateMode,
    pub forget_gate: GateMode,
    pub layer_norm: bool,
    /// Guard in the normalized read-out `c / (n + ε)`.
    pub eps: f64,
    /// Bounds applied to log-gate arguments after stabilization.
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Xlstm,
            input_dim: 2,
            blocks: 4,
            width: 64,
            micro_steps: 3,
            input_gate: GateMode::Exponential,
            forget_gate: GateMode::Sigmoid,
            layer_norm: false,
            eps: 1e-8,
            clip_lo: -30.0,
            clip_hi: 0.0,
        }
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl ModelConfig {
    pub fn xlstm(input_dim: usize, blocks: usize, width: usize, micro_steps: usize) -> Self {
        ModelConfig { input_dim, blocks, width, micro_steps, ..Default::default() }
    }

    pub fn baseline(input_dim: usize, blocks: usize, width: usize) -> Self {
        ModelConfig {
            architecture: Architecture::Baseline,
            input_dim,
            blocks,
            width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 {
            return Err(Error::Config("input dimension and width must be positive".into()));
        }
        if !(self.eps >= 0.0) || !(self.clip_lo < self.clip_hi) {
            return Err(Error::Config(format!(
                "need eps ≥ 0 and clip_lo < clip_hi, got eps={} clip=[{}, {}]",
                self.eps, self.clip_lo, self.clip_hi
            )));
        }
        Ok(())
    }

    /// Exact number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let (d, w) = (self.input_dim, self.width);
        let ends = w * d + w + w + 1;
        let per_layer = match self.architecture {
            Architecture::Baseline => w * w + w,
            Architecture::Xlstm => 13 * w * w + 6 * w,
        };
        ends + self.blocks * per_layer
    }

    /// Baseline with the same depth whose width brings its parameter count
    /// closest to this configuration's.
    pub fn matched_baseline(&self) -> ModelConfig {
        let target = self.param_count() as i64;
        let mut best = ModelConfig::baseline(self.input_dim, self.blocks, 1);
        let mut best_gap = i64::MAX;
        for w in 1..=4096 {
            let cand = ModelConfig::baseline(self.input_dim, self.blocks, w);
            let count = cand.param_count() as i64;
            let gap = (count - target).abs();
            if gap < best_gap {
                best_gap = gap;
                best = cand;
            }
            if count > target {
                break;
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
struct XlstmIds {
    gate_w: ParamId,
    gate_u: ParamId,
    gate_b: ParamId,
    proj: ParamId,
    mix1: ParamId,
    mix2: ParamId,
    mix_gate_w: ParamId,
    mix_gate_b: ParamId,
    shape_w: ParamId,
    shape_b: ParamId,
}

#[derive(Clone, Debug)]
enum LayerIds {
    Dense { w: ParamId, b: ParamId },
    Xlstm(Box<XlstmIds>),
}

#[derive(Clone, Debug)]
struct NetIds {
    embed_w: ParamId,
    embed_b: ParamId,
    layers: Vec<LayerIds>,
    head_w: ParamId,
    head_b: ParamId,
}

fn allocate(config: &ModelConfig) -> (ParamStore, NetIds) {
    let (d, w) = (config.input_dim, config.width);
    let mut p = ParamStore::new();
    let embed_w = p.add("embed.w", w, d);
    let embed_b = p.add("embed.b", w, 1);
    let mut layers = Vec::with_capacity(config.blocks);
    for l in 0..config.blocks {
        layers.push(match config.architecture {
            Architecture::Baseline => LayerIds::Dense {
                w: p.add(format!("layer{l}.w"), w, w),
                b: p.add(format!("layer{l}.b"), w, 1),
            },
            Architecture::Xlstm => LayerIds::Xlstm(Box::new(XlstmIds {
                gate_w: p.add(format!("block{l}.gate_w"), 4 * w, w),
                gate_u: p.add(format!("block{l}.gate_u"), 4 * w, w),
                gate_b: p.add(format!("block{l}.gate_b"), 4 * w, 1),
                proj: p.add(format!("block{l}.proj"), w, w),
                mix1: p.add(format!("block{l}.mix1"), w, w),
                mix2: p.add(format!("block{l}.mix2"), w, w),
                mix_gate_w: p.add(format!("block{l}.mix_gate_w"), w, w),
                mix_gate_b: p.add(format!("block{l}.mix_gate_b"), w, 1),
                shape_w: p.add(format!("block{l}.shape_w"), w, w),
                shape_b: p.add(format!("block{l}.shape_b"), w, 1),
            })),
        });
    }
    let head_w = p.add("head.w", 1, w);
    let head_b = p.add("head.b", 1, 1);
    (p, NetIds { embed_w, embed_b, layers, head_w, head_b })
}

/// Recurrent state of one block between micro-steps; `None` is an exact zero.
#[derive(Clone, Debug, Default)]
pub struct BlockState {
    pub h: Option<NodeId>,
    pub c: Option<NodeId>,
    pub n: Option<NodeId>,
    pub m: Option<NodeId>,
}

impl BlockState {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Block state as plain vectors, for single-point evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValues {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
}

impl StateValues {
    pub fn zero(width: usize) -> Self {
        StateValues { h: vec![0.0; width], c: vec![0.0; width], n: vec![0.0; width], m: vec![0.0; width] }
    }

    pub fn all_finite(&self) -> bool {
        [&self.h, &self.c, &self.n, &self.m].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Configuration plus every trainable tensor.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    config: ModelConfig,
    store: ParamStore,
    ids: NetIds,
}

impl NetworkParams {
    /// Uniform `±√(1/fan_in)` weights, zero biases, forget-gate bias `+1`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (mut store, ids) = allocate(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<_> = store.entries().to_vec();
        for (i, e) in entries.iter().enumerate() {
            if e.name.ends_with("_b") || e.name.ends_with(".b") {
                continue;
            }
            let bound = (1.0 / e.cols as f64).sqrt();
            for v in store.slice_mut(ParamId(i)) {
                *v = rng.random_range(-bound..=bound);
            }
        }
        for layer in &ids.layers {
            if let LayerIds::Xlstm(b) = layer {
                let w = config.width;
                store.slice_mut(b.gate_b)[w..2 * w].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Ok(NetworkParams { config: config.clone(), store, ids })
    }

    /// Rebuild from a stored parameter vector, checking names and shapes.
    pub fn from_store(config: &ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let (expected, ids) = allocate(config);
        if expected.entries() != store.entries() {
            return Err(Error::Format("parameter layout does not match the configuration".into()));
        }
        Ok(NetworkParams { config: config.clone(), store, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// Parameter id of a named tensor, e.g. `block0.proj`.
    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.store.id(name)
    }

    fn block_ids(&self, block: usize) -> Result<&XlstmIds> {
        match self.ids.layers.get(block) {
            Some(LayerIds::Xlstm(b)) => Ok(b),
            _ => Err(Error::Config(format!("layer {block} is not an xLSTM block"))),
        }
    }

    /// Gate stack `(W, U, b)` and projection `P` of an xLSTM block, rows ordered `(i, f, o, z)`.
    pub fn block_gates(&self, block: usize) -> Result<(ArrayView2<'_, f64>, ArrayView2<'_, f64>, &[f64], ArrayView2<'_, f64>)> {
        let b = self.block_ids(block)?;
        Ok((self.store.view(b.gate_w), self.store.view(b.gate_u), self.store.slice(b.gate_b), self.store.view(b.proj)))
    }

    /// Record the full network on `input` (`rows × input_dim` jets).
    pub fn forward(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId> {
        let mut u = self.embed(tape, input)?;
        for l in 0..self.ids.layers.len() {
            u = self.layer_forward(tape, l, u)?;
        }
        Ok(tape.affine(u, self.ids.head_w, Some(self.ids.head_b))?)
    }

    /// `u⁽⁰⁾ = tanh(W_in x + b_in)`.
    pub fn embed(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId> {
        let z = tape.affine(input, self.ids.embed_w, Some(self.ids.embed_b))?;
        Ok(tape.tanh(z)?)
    }

    /// One block, or one affine+tanh layer for the baseline.
    pub fn layer_forward(&self, tape: &mut Tape<'_>, layer: usize, u: NodeId) -> Result<NodeId> {
        match &self.ids.layers[layer] {
            LayerIds::Dense { w, b } => {
                let z = tape.affine(u, *w, Some(*b))?;
                Ok(tape.tanh(z)?)
            }
            LayerIds::Xlstm(_) => self.block_forward(tape, layer, u),
        }
    }

    /// One gated memory update followed by the residual refinement
    /// `u ← u + tanh(P h)`, with log-space stabilization of the gates.
    pub fn micro_step(
        &self,
        tape: &mut Tape<'_>,
        block: usize,
        step: usize,
        u: NodeId,
        state: &BlockState,
    ) -> Result<(NodeId, BlockState)> {
        let ids = self.block_ids(block)?;
        let cfg = &self.config;
        let w = cfg.width;
        let check = |tape: &Tape<'_>, id: NodeId, gate: &'static str| -> Result<NodeId> {
            if tape.value(id).all_finite() {
                Ok(id)
            } else {
                Err(Error::NonFinite { block, step, gate })
            }
        };
        let mut g = tape.affine(u, ids.gate_w, Some(ids.gate_b))?;
        if let Some(h) = state.h {
            let uh = tape.affine(h, ids.gate_u, None)?;
            g = tape.add(g, uh)?;
        }
        check(tape, g, "gate pre-activation")?;
        let gi = tape.col_slice(g, 0, w)?;
        let gf = tape.col_slice(g, w, w)?;
        let go = tape.col_slice(g, 2 * w, w)?;
        let gz = tape.col_slice(g, 3 * w, w)?;
        let log_i = match cfg.input_gate {
            GateMode::Exponential => gi,
            GateMode::Sigmoid => tape.unary(gi, Primitive::LogSigmoid)?,
        };
        let log_f = match cfg.forget_gate {
            GateMode::Exponential => gf,
            GateMode::Sigmoid => tape.unary(gf, Primitive::LogSigmoid)?,
        };
        let log_f_m = match state.m {
            Some(m) => tape.add(log_f, m)?,
            None => log_f,
        };
        let m_next = tape.max(log_f_m, log_i)?;
        let m_next = check(tape, m_next, "stabilizer")?;
        let f_arg = tape.sub(log_f_m, m_next)?;
        let f_arg = tape.clip(f_arg, cfg.clip_lo, cfg.clip_hi)?;
        let f_bar = tape.exp(f_arg)?;
        let f_bar = check(tape, f_bar, "forget gate")?;
        let i_arg = tape.sub(log_i, m_next)?;
        let i_arg = tape.clip(i_arg, cfg.clip_lo, cfg.clip_hi)?;
        let i_bar = tape.exp(i_arg)?;
        let i_bar = check(tape, i_bar, "input gate")?;
        let o = tape.sigmoid(go)?;
        let z = tape.tanh(gz)?;

        let iz = tape.mul(i_bar, z)?;
        let c_next = match state.c {
            Some(c) => {
                let fc = tape.mul(f_bar, c)?;
                tape.add(fc, iz)?
            }
            None => iz,
        };
        let n_next = match state.n {
            Some(n) => {
                let fn_ = tape.mul(f_bar, n)?;
                tape.add(fn_, i_bar)?
            }
            None => i_bar,
        };
        let c_next = check(tape, c_next, "cell memory")?;
        let n_next = check(tape, n_next, "normalizer")?;
        let guard = tape.shift(n_next, cfg.eps)?;
        let inv = tape
            .unary(guard, Primitive::Recip)
            .map_err(|_| Error::NonFinite { block, step, gate: "normalizer" })?;
        let ratio = tape.mul(c_next, inv)?;
        let h_next = tape.mul(o, ratio)?;
        let h_next = check(tape, h_next, "hidden output")?;
        let ph = tape.affine(h_next, ids.proj, None)?;
        let refine = tape.tanh(ph)?;
        let u_next = tape.add(u, refine)?;
        let u_next = check(tape, u_next, "residual refinement")?;
        Ok((u_next, BlockState { h: Some(h_next), c: Some(c_next), n: Some(n_next), m: Some(m_next) }))
    }

    /// `S` micro-steps from the zero state, then the gated mixer, optional
    /// layer norm and the `tanh` shaping layer.
    pub fn block_forward(&self, tape: &mut Tape<'_>, block: usize, u: NodeId) -> Result<NodeId> {
        let u_s = self.micro_steps(tape, block, u)?;
        let mixed = self.mixer(tape, block, u_s)?;
        let ids = self.block_ids(block)?;
        let z = tape.affine(mixed, ids.shape_w, Some(ids.shape_b))?;
        Ok(tape.tanh(z)?)
    }

    /// Only the recurrent part of a block: `u_S`.
    pub fn micro_steps(&self, tape: &mut Tape<'_>, block: usize, u: NodeId) -> Result<NodeId> {
        let mut state = BlockState::zero();
        let mut u = u;
        for t in 0..self.config.micro_steps {
            let (next, s) = self.micro_step(tape, block, t, u, &state)?;
            u = next;
            state = s;
        }
        Ok(u)
    }

    /// `u⁺ = u_S + σ(W_γ u_S + b_γ) ⊙ tanh(W₂ tanh(W₁ u_S))`, then optional layer norm.
    pub fn mixer(&self, tape: &mut Tape<'_>, block: usize, u_s: NodeId) -> Result<NodeId> {
        let ids = self.block_ids(block)?;
        let a = tape.affine(u_s, ids.mix1, None)?;
        let a = tape.tanh(a)?;
        let y = tape.affine(a, ids.mix2, None)?;
        let y = tape.tanh(y)?;
        let gamma = tape.affine(u_s, ids.mix_gate_w, Some(ids.mix_gate_b))?;
        let gamma = tape.sigmoid(gamma)?;
        let gy = tape.mul(gamma, y)?;
        let mut out = tape.add(u_s, gy)?;
        if self.config.layer_norm {
            out = layer_norm(tape, out, self.config.width)?;
        }
        Ok(out)
    }

    /// Values of the field at `points` (`rows × input_dim`).
    pub fn predict(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.nrows());
        for chunk in points.axis_chunks_iter(ndarray::Axis(0), 1024) {
            let mut tape = Tape::new(&self.store);
            let x = tape.leaf(JetTensor::plain(chunk.to_owned()));
            let y = self.forward(&mut tape, x)?;
            out.extend(tape.value(y).values().iter().copied());
        }
        Ok(out)
    }

    /// Run one micro-step on plain vectors.
    pub fn micro_step_values(&self, block: usize, u: &[f64], state: &StateValues) -> Result<(Vec<f64>, StateValues)> {
        let w = self.config.width;
        if u.len() != w {
            return Err(Error::Config(format!("expected {w} channels, got {}", u.len())));
        }
        let row = |v: &[f64]| JetTensor::plain(Array2::from_shape_vec((1, w), v.to_vec()).expect("shape"));
        let mut tape = Tape::new(&self.store);
        let un = tape.leaf(row(u));
        let st = BlockState {
            h: Some(tape.leaf(row(&state.h))),
            c: Some(tape.leaf(row(&state.c))),
            n: Some(tape.leaf(row(&state.n))),
            m: Some(tape.leaf(row(&state.m))),
        };
        let (next, s) = self.micro_step(&mut tape, block, 0, un, &st)?;
        let get = |id: Option<NodeId>| tape.value(id.expect("state")).values().iter().copied().collect::<Vec<_>>();
        let values = StateValues { h: get(s.h), c: get(s.c), n: get(s.n), m: get(s.m) };
        Ok((get(Some(next)), values))
    }
}

fn layer_norm(tape: &mut Tape<'_>, x: NodeId, width: usize) -> Result<NodeId> {
    let mean = tape.mean_cols(x)?;
    let mean = tape.broadcast(mean, width)?;
    let centered = tape.sub(x, mean)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_cols(sq)?;
    let var = tape.shift(var, LAYER_NORM_EPS)?;
    let inv = tape.unary(var, Primitive::InvSqrt)?;
    let inv = tape.broadcast(inv, width)?;
    Ok(tape.mul(centered, inv)?)
}

impl Field for NetworkParams {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn eval(&self, tape: &mut Tape<'_>, input: NodeId) -> Result<NodeId> {
        self.forward(tape, input)
    }
}

#[cfg(test)]
mod tests;
