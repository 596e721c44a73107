//! Frequency-domain probes: modal decay under a linearized kernel, the
//! linearization of one gated block and the kernel lift it induces, and the
//! plane-wave regression benchmark.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{JetTensor, Tape};
use crate::model::{Architecture, GateMode, ModelConfig, NetworkParams};
use crate::problems::{plane_wave_problem_with, plane_wave_target, sample, Grid, PLANE_WAVE_GRID, PLANE_WAVE_POINTS};
use crate::training::{train_paired, RunStatus, TrainConfig, TrainOutcome};
use crate::{Error, Result};

/// Relative error threshold for time-to-threshold and bandwidth.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Feature directions shorter than this are excluded from ratios.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Slack for rounding when checking the kernel bound.
const BOUND_SLACK: f64 = 1e-14;

/// One kernel eigenmode under linearized gradient flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalState {
    pub wavenumber: f64,
    pub error0: f64,
    pub eigenvalue: f64,
    pub learning_rate: f64,
}

impl ModalState {
    /// `e(t) = e(0)·exp(−ηλt)`.
    pub fn error_at(&self, t: f64) -> f64 {
        self.error0 * (-self.learning_rate * self.eigenvalue * t).exp()
    }

    /// Explicit Euler for `ė = −ηλe`, `steps` equal steps up to `t`.
    pub fn euler(&self, t: f64, steps: usize) -> f64 {
        let dt = t / steps as f64;
        let factor = 1.0 - self.learning_rate * self.eigenvalue * dt;
        (0..steps).fold(self.error0, |e, _| e * factor)
    }
}

fn check_rate(lambda: f64, eta: f64) -> Result<()> {
    if !(lambda >= 0.0) || !(eta > 0.0) {
        return Err(Error::Domain(format!("modal decay needs λ ≥ 0 and η > 0, got λ = {lambda}, η = {eta}")));
    }
    Ok(())
}

/// Closed-form endpoint error after time `t`.
pub fn modal_decay(lambda: f64, eta: f64, e0: f64, t: f64) -> Result<f64> {
    check_rate(lambda, eta)?;
    Ok(ModalState { wavenumber: 0.0, error0: e0, eigenvalue: lambda, learning_rate: eta }.error_at(t))
}

/// First time the decaying error reaches `eps`; infinite when it never does.
pub fn time_to_threshold(lambda: f64, eta: f64, e0: f64, eps: f64) -> Result<f64> {
    check_rate(lambda, eta)?;
    if e0 <= eps {
        return Ok(0.0);
    }
    if lambda == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((e0 / eps).ln() / (eta * lambda))
}

/// `e_base(T) / e_x(T) = exp(η(λ_x − λ_base)T)`.
pub fn endpoint_gain(lambda_base: f64, lambda_x: f64, eta: f64, t: f64) -> f64 {
    (eta * (lambda_x - lambda_base) * t).exp()
}

/// `τ_x / τ_base = λ_base / λ_x`.
pub fn threshold_ratio(lambda_base: f64, lambda_x: f64) -> f64 {
    lambda_base / lambda_x
}

/// Largest wavenumber whose cumulative squared error, accumulated in order
/// of increasing `|k|`, stays within `eps²`.
pub fn resolvable_bandwidth(wavenumbers: &[f64], errors: &[f64], eps: f64) -> Option<f64> {
    let mut order: Vec<usize> = (0..wavenumbers.len().min(errors.len())).collect();
    order.sort_by(|&a, &b| wavenumbers[a].abs().total_cmp(&wavenumbers[b].abs()));
    let mut total = 0.0;
    let mut best = None;
    for i in order {
        total += errors[i] * errors[i];
        if !(total <= eps * eps) {
            break;
        }
        best = Some(wavenumbers[i].abs());
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pieces of the probe cell at `(h, c) = (0, 0)`.
struct ProbeCell {
    g: Vec<f64>,
    i: Vec<f64>,
    o: Vec<f64>,
    z: Vec<f64>,
    c: Vec<f64>,
    ph: Vec<f64>,
}

fn probe_cell(net: &NetworkParams, block: usize, u: &[f64]) -> Result<ProbeCell> {
    let cfg = net.config();
    if cfg.architecture != Architecture::Xlstm
        || cfg.input_gate != GateMode::Sigmoid
        || cfg.forget_gate != GateMode::Sigmoid
    {
        return Err(Error::Config("block linearization needs an xLSTM model with sigmoid gates".into()));
    }
    let w = cfg.width;
    if u.len() != w {
        return Err(Error::Config(format!("state of length {} for width {w}", u.len())));
    }
    let (gw, _, gb, proj) = net.block_gates(block)?;
    let g: Vec<f64> = (0..4 * w).map(|r| gw.row(r).iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + gb[r]).collect();
    let i: Vec<f64> = g[..w].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = g[2 * w..3 * w].iter().map(|&v| sigmoid(v)).collect();
    let z: Vec<f64> = g[3 * w..].iter().map(|v| v.tanh()).collect();
    let c: Vec<f64> = i.iter().zip(&z).map(|(a, b)| a * b).collect();
    let h: Vec<f64> = o.iter().zip(&c).map(|(a, b)| a * b.tanh()).collect();
    let ph: Vec<f64> = proj.rows().into_iter().map(|r| r.iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
    Ok(ProbeCell { g, i, o, z, c, ph })
}

/// Displacement `Δu = tanh(P h)` of one micro-step of the probe cell
/// `c = i z`, `h = o tanh(c)` started from `(h, c) = (0, 0)`.
pub fn probe_displacement(net: &NetworkParams, block: usize, u: &[f64]) -> Result<Vec<f64>> {
    Ok(probe_cell(net, block, u)?.ph.iter().map(|v| v.tanh()).collect())
}

/// Jacobian of [`probe_displacement`] with respect to `u`.
pub fn compute_a(net: &NetworkParams, block: usize, u: &[f64]) -> Result<DMatrix<f64>> {
    let cell = probe_cell(net, block, u)?;
    let w = net.config().width;
    let (gw, _, _, proj) = net.block_gates(block)?;
    let dsig = |v: f64| {
        let s = sigmoid(v);
        s * (1.0 - s)
    };
    let mut jh = DMatrix::zeros(w, w);
    for j in 0..w {
        let d_o = dsig(cell.g[2 * w + j]) * cell.c[j].tanh();
        let t = cell.c[j].tanh();
        let d_c = cell.o[j] * (1.0 - t * t);
        let via_i = d_c * cell.z[j] * dsig(cell.g[j]);
        let via_z = d_c * cell.i[j] * (1.0 - cell.z[j] * cell.z[j]);
        for col in 0..w {
            jh[(j, col)] = d_o * gw[[2 * w + j, col]] + via_i * gw[[j, col]] + via_z * gw[[3 * w + j, col]];
        }
    }
    let p = DMatrix::from_fn(w, w, |r, c| proj[[r, c]]);
    let mut a = p * jh;
    for (r, v) in cell.ph.iter().enumerate() {
        let t = v.tanh();
        a.row_mut(r).scale_mut(1.0 - t * t);
    }
    Ok(a)
}

/// `(I + A)^S` with its extreme singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveMap {
    pub matrix: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

pub fn effective_map(a: &DMatrix<f64>, steps: usize) -> Result<EffectiveMap> {
    if steps == 0 {
        return Err(Error::Config("effective map needs at least one micro-step".into()));
    }
    if !a.is_square() {
        return Err(Error::Config("effective map needs a square matrix".into()));
    }
    let n = a.nrows();
    let step = DMatrix::identity(n, n) + a;
    let mut matrix = step.clone();
    for _ in 1..steps {
        matrix = &matrix * &step;
    }
    let sv = matrix.clone().svd(false, false).singular_values;
    let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    Ok(EffectiveMap { matrix, sigma_min, sigma_max })
}

/// Kernel eigenvalues along one plane-wave feature direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMode {
    pub wavenumber: f64,
    /// `‖v‖²`.
    pub base: f64,
    /// `‖((I + A)^S)ᵀ v‖²`.
    pub lifted: f64,
    /// `vᵀBv / ‖v‖²` with `B` the symmetric part of `A`.
    pub rayleigh: f64,
    /// `α = 2ρ`.
    pub gain: f64,
    /// `(1 + α)^S`.
    pub bound: f64,
    pub degenerate: bool,
}

impl KernelMode {
    pub fn ratio(&self) -> Option<f64> {
        (!self.degenerate).then(|| self.lifted / self.base)
    }

    /// Whether `λ_x / λ_base ≥ (1 + α)^S`, up to rounding.
    pub fn bound_holds(&self) -> Option<bool> {
        self.ratio().map(|r| r >= self.bound - BOUND_SLACK * self.bound.abs().max(1.0))
    }
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Kernel quantities for one feature vector `v`.
pub fn kernel_mode(wavenumber: f64, v: &DVector<f64>, a: &DMatrix<f64>, map: &DMatrix<f64>, steps: usize) -> KernelMode {
    let base = v.norm_squared();
    let lifted = (map.transpose() * v).norm_squared();
    let degenerate = v.norm() < DEGENERATE_NORM;
    let rayleigh = if degenerate { 0.0 } else { v.dot(&(symmetric_part(a) * v)) / base };
    let gain = 2.0 * rayleigh;
    let bound = (1.0 + gain).powi(steps as i32);
    KernelMode { wavenumber, base, lifted, rayleigh, gain, bound, degenerate }
}

/// `v_k = Φᵀφ_k/√N` for each wavenumber, with `φ_k` the plane wave on the
/// 1-D sample `points`, then the base and lifted eigenvalues per direction.
pub fn kernel_pair(
    features: &DMatrix<f64>,
    points: &[f64],
    a: &DMatrix<f64>,
    steps: usize,
    wavenumbers: &[f64],
    phase: f64,
) -> Result<Vec<KernelMode>> {
    if features.nrows() != points.len() || features.ncols() != a.nrows() {
        return Err(Error::Config("feature matrix does not match points and block width".into()));
    }
    let map = effective_map(a, steps)?;
    let scale = (points.len() as f64).sqrt().recip();
    Ok(wavenumbers
        .iter()
        .map(|&k| {
            let target = plane_wave_target(&[k], phase);
            let phi = DVector::from_iterator(points.len(), points.iter().map(|&x| target(&[x]) * scale));
            let v = features.transpose() * phi;
            kernel_mode(k, &v, a, &map.matrix, steps)
        })
        .collect())
}

/// Midpoints of `n` equal cells of `[−1, 1]`.
pub fn probe_points(n: usize) -> Vec<f64> {
    Grid::Line { lo: -1.0, hi: 1.0, n }.points().into_raw_vec_and_offset().0
}

/// Inputs to `layer` (post-embedding features for layer 0) at 1-D `points`.
pub fn layer_features(net: &NetworkParams, layer: usize, points: &[f64]) -> Result<DMatrix<f64>> {
    let cfg = net.config();
    if cfg.input_dim != 1 {
        return Err(Error::Config("feature probe expects a one-dimensional model".into()));
    }
    if layer >= cfg.blocks.max(1) {
        return Err(Error::Config(format!("layer {layer} out of range for {} blocks", cfg.blocks)));
    }
    let mut tape = Tape::new(net.store());
    let x = tape.leaf(JetTensor::plain(Array2::from_shape_vec((points.len(), 1), points.to_vec()).expect("shape")));
    let mut u = net.embed(&mut tape, x)?;
    for l in 0..layer {
        u = net.layer_forward(&mut tape, l, u)?;
    }
    let v = tape.value(u).values();
    Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[[r, c]]))
}

/// Linearization of one block around the mean feature, and the kernel lift
/// it induces along plane-wave directions.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizationProbe {
    pub points: Vec<f64>,
    pub features: DMatrix<f64>,
    /// Linearization point `u`.
    pub state: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub micro_steps: usize,
    pub modes: Vec<KernelMode>,
}

impl LinearizationProbe {
    pub fn build(net: &NetworkParams, layer: usize, samples: usize, wavenumbers: &[f64], phase: f64) -> Result<Self> {
        let points = probe_points(samples);
        let features = layer_features(net, layer, &points)?;
        let state: Vec<f64> = features.column_iter().map(|c| c.mean()).collect();
        let a = compute_a(net, layer, &state)?;
        let micro_steps = net.config().micro_steps.max(1);
        let modes = kernel_pair(&features, &points, &a, micro_steps, wavenumbers, phase)?;
        let b = symmetric_part(&a);
        Ok(LinearizationProbe { points, features, state, a, b, micro_steps, modes })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,lambda_base,lambda_xlstm,ratio,rayleigh,alpha,bound,bound_holds,degenerate\n");
        for m in &self.modes {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{}\n",
                m.wavenumber,
                m.base,
                m.lifted,
                m.ratio().map_or("".into(), |r| format!("{r:.16e}")),
                m.rayleigh,
                m.gain,
                m.bound,
                m.bound_holds().map_or("".into(), |b| b.to_string()),
                m.degenerate
            ));
        }
        out
    }
}

/// Settings for the plane-wave regression benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencyConfig {
    /// xLSTM side of the pair; the baseline is width-matched to it.
    pub model: ModelConfig,
    pub wavenumbers: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub threshold: f64,
    pub phase: f64,
    /// Regression points per run.
    pub points: usize,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig {
            model: ModelConfig::xlstm(1, 2, 16, 2),
            wavenumbers: (1..=24).map(f64::from).collect(),
            seeds: (1..=5).collect(),
            train: TrainConfig { iterations: 1000, ..TrainConfig::default() },
            threshold: DEFAULT_THRESHOLD,
            phase: 0.0,
            points: PLANE_WAVE_POINTS,
        }
    }
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl Band {
    pub fn of(values: &[f64]) -> Band {
        let count = values.len();
        if count == 0 {
            return Band { mean: f64::NAN, sd: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Band { mean, sd, count }
    }
}

/// One model's regression onto one plane wave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRun {
    pub wavenumber: f64,
    pub seed: u64,
    pub architecture: Architecture,
    /// Relative `L²` error on the dense grid after the budget.
    pub endpoint: f64,
    /// First iteration whose relative training error is within threshold.
    pub tau: Option<usize>,
    /// Relative training error per iteration.
    pub history: Vec<f64>,
}

/// Seed-aggregated statistics at one wavenumber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub wavenumber: f64,
    pub endpoint_base: Band,
    pub endpoint_xlstm: Band,
    /// `E_base / E_x`, averaged over seeds.
    pub gain: Band,
    /// Censored runs count as the full budget.
    pub tau_base: Band,
    pub tau_xlstm: Band,
    pub censored_base: usize,
    pub censored_xlstm: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub config: FrequencyConfig,
    pub param_count_xlstm: usize,
    pub param_count_base: usize,
    pub rows: Vec<FrequencyRow>,
    pub k_star_base: Option<f64>,
    pub k_star_xlstm: Option<f64>,
    pub runs: Vec<ProbeRun>,
    /// `(wavenumber, seed, model, reason)` for runs that did not finish.
    pub dropped: Vec<(f64, u64, Architecture, String)>,
}

/// Relative `L²` distance to the plane wave over the dense midpoint grid;
/// absolute when the target vanishes.
pub fn relative_l2(net: &NetworkParams, k: f64, phase: f64) -> Result<f64> {
    let points = Grid::Line { lo: -1.0, hi: 1.0, n: PLANE_WAVE_GRID }.points();
    let pred = net.predict(points.view())?;
    let target = plane_wave_target(&[k], phase);
    let (mut err, mut norm) = (0.0, 0.0);
    for (p, x) in pred.iter().zip(points.column(0)) {
        let t = target(&[*x]);
        err += (p - t) * (p - t);
        norm += t * t;
    }
    Ok(if norm > DEGENERATE_NORM { (err / norm).sqrt() } else { (err / pred.len() as f64).sqrt() })
}

fn probe_run(k: f64, seed: u64, config: &FrequencyConfig, outcome: &TrainOutcome, target_ms: f64) -> Result<ProbeRun> {
    let history: Vec<f64> = outcome
        .record
        .history
        .iter()
        .map(|b| if target_ms > DEGENERATE_NORM { (b.total / target_ms).sqrt() } else { b.total.sqrt() })
        .collect();
    Ok(ProbeRun {
        wavenumber: k,
        seed,
        architecture: outcome.record.model.architecture,
        endpoint: relative_l2(&outcome.params, k, config.phase)?,
        tau: history.iter().position(|e| *e <= config.threshold),
        history,
    })
}

/// Paired plane-wave regressions over wavenumbers and seeds.
pub fn frequency_benchmark(config: &FrequencyConfig) -> Result<FrequencyReport> {
    if config.model.input_dim != 1 {
        return Err(Error::Config("the plane-wave benchmark is one-dimensional".into()));
    }
    if config.seeds.is_empty() || config.wavenumbers.is_empty() {
        return Err(Error::Config("need at least one wavenumber and one seed".into()));
    }
    let base_cfg = config.model.matched_baseline();
    let budget = config.train.iterations as f64;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut dropped = Vec::new();
    for &k in &config.wavenumbers {
        let spec = plane_wave_problem_with(&[k], config.phase, config.points);
        let mut gains = Vec::new();
        let mut per_model: [(Vec<f64>, Vec<f64>, usize); 2] = Default::default();
        for &seed in &config.seeds {
            let sets = sample(&spec, seed);
            let target = &spec.terms[0].target;
            let target_ms = sets.sets[0].rows().into_iter().map(|r| target(r.as_slice().expect("row")).powi(2)).sum::<f64>()
                / sets.sets[0].nrows() as f64;
            let pair = train_paired(&spec, &config.model, &config.train, seed)?;
            let mut endpoints = [None, None];
            for (slot, outcome) in [&pair.xlstm, &pair.baseline].into_iter().enumerate() {
                if let RunStatus::Aborted { reason, .. } = &outcome.record.status {
                    dropped.push((k, seed, outcome.record.model.architecture, reason.clone()));
                    continue;
                }
                let run = probe_run(k, seed, config, outcome, target_ms)?;
                let (ends, taus, censored) = &mut per_model[slot];
                ends.push(run.endpoint);
                match run.tau {
                    Some(t) => taus.push(t as f64),
                    None => {
                        taus.push(budget);
                        *censored += 1;
                    }
                }
                endpoints[slot] = Some(run.endpoint);
                runs.push(run);
            }
            if let [Some(x), Some(b)] = endpoints {
                gains.push(b / x);
            }
        }
        let [(ex, tx, cx), (eb, tb, cb)] = per_model;
        rows.push(FrequencyRow {
            wavenumber: k,
            endpoint_base: Band::of(&eb),
            endpoint_xlstm: Band::of(&ex),
            gain: Band::of(&gains),
            tau_base: Band::of(&tb),
            tau_xlstm: Band::of(&tx),
            censored_base: cb,
            censored_xlstm: cx,
        });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.wavenumber).collect();
    let eb: Vec<f64> = rows.iter().map(|r| r.endpoint_base.mean).collect();
    let ex: Vec<f64> = rows.iter().map(|r| r.endpoint_xlstm.mean).collect();
    Ok(FrequencyReport {
        config: config.clone(),
        param_count_xlstm: config.model.param_count(),
        param_count_base: base_cfg.param_count(),
        k_star_base: resolvable_bandwidth(&ks, &eb, config.threshold),
        k_star_xlstm: resolvable_bandwidth(&ks, &ex, config.threshold),
        rows,
        runs,
        dropped,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

impl FrequencyReport {
    /// Wavenumbers in the upper half of the grid.
    pub fn upper_half(&self) -> &[FrequencyRow] {
        &self.rows[self.rows.len() / 2..]
    }

    /// One row per wavenumber; `k*` values repeat on every row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,E_base_mean,E_base_sd,E_xlstm_mean,E_xlstm_sd,G_mean,G_sd,tau_base_mean,tau_base_sd,tau_base_censored,\
             tau_xlstm_mean,tau_xlstm_sd,tau_xlstm_censored,k_star_base,k_star_xlstm\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{},{},{}\n",
                r.wavenumber,
                r.endpoint_base.mean,
                r.endpoint_base.sd,
                r.endpoint_xlstm.mean,
                r.endpoint_xlstm.sd,
                r.gain.mean,
                r.gain.sd,
                r.tau_base.mean,
                r.tau_base.sd,
                r.censored_base,
                r.tau_xlstm.mean,
                r.tau_xlstm.sd,
                r.censored_xlstm,
                opt(self.k_star_base),
                opt(self.k_star_xlstm)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests;
