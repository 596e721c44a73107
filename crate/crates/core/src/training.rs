//! Collocation losses, the Adam optimizer and the training loop.
//!
//! The objective is a weighted sum of per-term mean squared residuals over
//! fixed collocation sets. Sets are evaluated in chunks, each on its own
//! tape; chunk gradients are added into one buffer in a fixed order, so a
//! run is bit-reproducible for a given seed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Field, Tape};
use crate::model::{Architecture, ModelConfig, NetworkParams};
use crate::problems::{record_term, sample, ProblemSpec, SampleSets};
use crate::{Error, Result};

/// Rows recorded on a single tape.
pub const DEFAULT_CHUNK: usize = 256;

/// Largest relative parameter-count gap accepted for a paired run.
pub const MAX_COUNT_GAP: f64 = 0.02;

/// One nonnegative weight per problem term, in term order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub Vec<f64>);

impl LossWeights {
    pub fn uniform(terms: usize) -> Self {
        LossWeights(vec![1.0; terms])
    }

    pub fn validate(&self, terms: usize) -> Result<()> {
        if self.0.len() != terms {
            return Err(Error::Config(format!("{} loss weights for {terms} terms", self.0.len())));
        }
        if let Some(w) = self.0.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("loss weight {w} is not a finite nonnegative number")));
        }
        Ok(())
    }
}

/// Per-term mean squared residuals and their weighted sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub iteration: usize,
    pub terms: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    /// `Σ λ_i · term_i`, accumulated left to right.
    pub fn weighted_total(weights: &[f64], terms: &[f64]) -> f64 {
        weights.iter().zip(terms).fold(0.0, |acc, (w, t)| acc + w * t)
    }
}

fn evaluate_loss(
    spec: &ProblemSpec,
    field: &dyn Field,
    weights: &LossWeights,
    sets: &SampleSets,
    chunk: usize,
    grad: Option<&mut Vec<f64>>,
) -> Result<LossBreakdown> {
    weights.validate(spec.terms.len())?;
    if sets.sets.len() != spec.terms.len() {
        return Err(Error::Config(format!(
            "{} sample sets for {} terms of {}",
            sets.sets.len(),
            spec.terms.len(),
            spec.name
        )));
    }
    let chunk = chunk.max(1);
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.clear();
        g.resize(field.params().len(), 0.0);
    }
    let mut terms = Vec::with_capacity(spec.terms.len());
    for ((term, points), &w) in spec.terms.iter().zip(&sets.sets).zip(&weights.0) {
        let n = points.nrows();
        if n == 0 {
            if w > 0.0 {
                return Err(Error::Config(format!("term `{}` has weight {w} but no points", term.name)));
            }
            terms.push(0.0);
            continue;
        }
        let mut raw = 0.0;
        for block in points.axis_chunks_iter(ndarray::Axis(0), chunk) {
            let mut tape = Tape::new(field.params());
            let r = record_term(&mut tape, field, term, block)?;
            raw += tape.value(r).values().iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad.as_deref_mut() {
                if w > 0.0 {
                    let s = tape.sum_squares(r, w / n as f64)?;
                    tape.accumulate_grad(s, g)?;
                }
            }
        }
        terms.push(raw / n as f64);
    }
    let total = LossBreakdown::weighted_total(&weights.0, &terms);
    Ok(LossBreakdown { iteration: 0, terms, total })
}

/// Loss and its parameter gradient for `field` on `sets`.
pub fn assemble_loss(
    spec: &ProblemSpec,
    field: &dyn Field,
    weights: &LossWeights,
    sets: &SampleSets,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = Vec::new();
    let b = evaluate_loss(spec, field, weights, sets, DEFAULT_CHUNK, Some(&mut grad))?;
    Ok((b, grad))
}

/// Loss without a gradient.
pub fn loss_value(spec: &ProblemSpec, field: &dyn Field, weights: &LossWeights, sets: &SampleSets) -> Result<LossBreakdown> {
    evaluate_loss(spec, field, weights, sets, DEFAULT_CHUNK, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: usize, config: AdamConfig) -> Self {
        OptimState { config, m: vec![0.0; params], v: vec![0.0; params], step: 0 }
    }

    /// One bias-corrected Adam update of `params`.
    pub fn adam_step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Config(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: self.step as usize,
                what: format!("gradient component {i}"),
            });
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub optimizer: AdamConfig,
    /// Per-term weights; all ones when absent.
    pub weights: Option<Vec<f64>>,
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { iterations: 20_000, optimizer: AdamConfig::default(), weights: None, chunk: DEFAULT_CHUNK }
    }
}

impl TrainConfig {
    pub fn weights_for(&self, spec: &ProblemSpec) -> Result<LossWeights> {
        let w = match &self.weights {
            Some(w) => LossWeights(w.clone()),
            None => LossWeights::uniform(spec.terms.len()),
        };
        w.validate(spec.terms.len())?;
        Ok(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Training stopped early; parameters are the last ones with a finite loss.
    Aborted { iteration: usize, reason: String },
}

/// Everything needed to inspect or replay a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub model: ModelConfig,
    pub param_count: usize,
    pub seed: u64,
    /// SHA-256 of the collocation sets.
    pub sample_digest: String,
    pub train: TrainConfig,
    pub history: Vec<LossBreakdown>,
    pub wall_clock_seconds: f64,
    pub status: RunStatus,
    /// Where the final parameters were written, if they were.
    pub checkpoint: Option<String>,
}

impl RunRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|b| b.total)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub params: NetworkParams,
}

/// Train `net` on fixed collocation sets for `config.iterations` Adam steps.
pub fn train(
    spec: &ProblemSpec,
    net: NetworkParams,
    sets: &SampleSets,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if config.iterations == 0 {
        return Err(Error::Config("iteration budget must be at least 1".into()));
    }
    let weights = config.weights_for(spec)?;
    let started = Instant::now();
    let mut net = net;
    let mut optim = OptimState::new(net.param_count(), config.optimizer);
    let mut history = Vec::with_capacity(config.iterations);
    let mut grad = Vec::new();
    let mut status = RunStatus::Completed;
    let mut previous = net.store().values().to_vec();
    for it in 0..config.iterations {
        let evaluated = evaluate_loss(spec, &net, &weights, sets, config.chunk, Some(&mut grad));
        let mut breakdown = match evaluated {
            Ok(b) if b.total.is_finite() => b,
            Ok(_) => {
                status = RunStatus::Aborted { iteration: it, reason: "non-finite loss".into() };
                net.store_mut().values_mut().copy_from_slice(&previous);
                break;
            }
            Err(e @ Error::NonFinite { .. }) | Err(e @ Error::Autodiff(_)) => {
                status = RunStatus::Aborted { iteration: it, reason: e.to_string() };
                net.store_mut().values_mut().copy_from_slice(&previous);
                break;
            }
            Err(e) => return Err(e),
        };
        breakdown.iteration = it;
        history.push(breakdown);
        previous.copy_from_slice(net.store().values());
        if let Err(e) = optim.adam_step(net.store_mut().values_mut(), &grad) {
            status = RunStatus::Aborted { iteration: it, reason: e.to_string() };
            break;
        }
    }
    let record = RunRecord {
        problem: spec.name.clone(),
        model: net.config().clone(),
        param_count: net.param_count(),
        seed,
        sample_digest: sets.digest(),
        train: config.clone(),
        history,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        status,
        checkpoint: None,
    };
    Ok(TrainOutcome { record, params: net })
}

/// Relative gap `|a − b| / a` between two parameter counts.
pub fn count_gap(reference: usize, other: usize) -> f64 {
    (reference as f64 - other as f64).abs() / reference as f64
}

#[derive(Clone, Debug)]
pub struct PairedOutcome {
    pub xlstm: TrainOutcome,
    pub baseline: TrainOutcome,
}

/// Train an xLSTM model and its count-matched baseline on identical sets,
/// with the same seed, budget and optimizer settings.
pub fn train_paired(spec: &ProblemSpec, xlstm: &ModelConfig, config: &TrainConfig, seed: u64) -> Result<PairedOutcome> {
    if xlstm.architecture != Architecture::Xlstm {
        return Err(Error::Config("paired runs take the xLSTM configuration".into()));
    }
    if xlstm.input_dim != spec.dim() {
        return Err(Error::Config(format!(
            "model takes {} coordinates but {} has {}",
            xlstm.input_dim,
            spec.name,
            spec.dim()
        )));
    }
    let base = xlstm.matched_baseline();
    let gap = count_gap(xlstm.param_count(), base.param_count());
    if gap > MAX_COUNT_GAP {
        return Err(Error::Config(format!(
            "no baseline width matches {} parameters within 2% (best {} at width {})",
            xlstm.param_count(),
            base.param_count(),
            base.width
        )));
    }
    let sets = sample(spec, seed);
    let x = train(spec, NetworkParams::init(xlstm, seed)?, &sets, config, seed)?;
    let b = train(spec, NetworkParams::init(&base, seed)?, &sets, config, seed)?;
    debug_assert_eq!(x.record.sample_digest, b.record.sample_digest);
    Ok(PairedOutcome { xlstm: x, baseline: b })
}

#[cfg(test)]
mod tests;
