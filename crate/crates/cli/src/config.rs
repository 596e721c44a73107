use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use xlstm_pinn::model::{Architecture, ModelConfig};
use xlstm_pinn::problems::{Problem, PLANE_WAVE_POINTS};
use xlstm_pinn::spectral::FrequencyConfig;
use xlstm_pinn::training::TrainConfig;
use xlstm_pinn::verify::{desk_benchmarks, desk_frequency};

/// Everything a training run depends on. Written next to the artifacts;
/// feeding it back through `--config` repeats the run bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub problem: Problem,
    /// xLSTM configuration; paired runs derive the baseline from it.
    pub model: ModelConfig,
    pub paired: bool,
    /// Which model a single run trains.
    pub single_model: Architecture,
    pub seed: u64,
    pub train: TrainConfig,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Desk-scale defaults for `problem`.
    pub fn for_problem(problem: Problem) -> Self {
        let case = desk_benchmarks().into_iter().find(|c| c.problem == problem);
        let dim = problem.spec().dim();
        match case {
            Some(c) => RunConfig { problem, model: c.model, train: c.train, seed: c.seed, ..RunConfig::default() },
            None => RunConfig { model: ModelConfig { input_dim: dim, ..RunConfig::default().model }, problem, ..RunConfig::default() },
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let case = desk_benchmarks().into_iter().next().expect("at least one benchmark");
        RunConfig {
            problem: case.problem,
            model: case.model,
            paired: false,
            single_model: Architecture::Xlstm,
            seed: case.seed,
            train: case.train,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelProbeConfig {
    pub width: usize,
    pub micro_steps: usize,
    pub seed: u64,
    pub samples: usize,
    pub wavenumbers: Vec<f64>,
    pub phase: f64,
    pub out: Option<PathBuf>,
}

impl Default for KernelProbeConfig {
    fn default() -> Self {
        KernelProbeConfig {
            width: 16,
            micro_steps: 1,
            seed: 1,
            samples: PLANE_WAVE_POINTS,
            wavenumbers: (1..=24).map(f64::from).collect(),
            phase: 0.0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralRunConfig {
    pub frequency: FrequencyConfig,
    pub kernel: KernelProbeConfig,
    pub out: Option<PathBuf>,
}

impl Default for SpectralRunConfig {
    fn default() -> Self {
        SpectralRunConfig { frequency: desk_frequency(), kernel: KernelProbeConfig::default(), out: None }
    }
}
