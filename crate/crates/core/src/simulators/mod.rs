//! Ensemble of generative models producing (latent, observation) training
//! pairs: GP signals with hierarchically sampled hyperparameters, the
//! stochastic anharmonic oscillator under Gaussian or conditionally
//! dependent observation noise, and the synthetic alpha-oscillation
//! generator.

pub mod alpha;
pub mod dataset_io;
pub mod gp;
pub mod noise;
pub mod oscillator;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use alpha::AlphaGenParams;
pub use gp::{sample_gp, sample_gp_hyperparams, SqExpKernelParams};
pub use noise::{observe_conditional, observe_gaussian, sample_jump_process, ConditionalNoiseParams};
pub use oscillator::{simulate_oscillator, OscillatorParams};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::series::{TimeGrid, TimeSeries};

/// One supervised example: a latent trajectory, its observation sequence,
/// and the seed that regenerates both.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPair {
    pub latent: TimeSeries,
    pub observed: TimeSeries,
    pub generator_seed: u64,
}

/// Self-describing generator configuration. Together with a trial seed this
/// fully determines a [`TrialPair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// GP latent with per-trial log-normal hyperparameters and Gaussian
    /// observation noise with per-trial log-normal std.
    Gp { grid: TimeGrid },
    /// Anharmonic oscillator latent, Gaussian observation noise.
    OscillatorGaussian {
        grid: TimeGrid,
        oscillator: OscillatorParams,
        obs_noise_std: f64,
        /// Per-trial initial state spread: x0 ~ N(oscillator.x0,
        /// init_x_std^2), v0 ~ N(oscillator.v0, init_v_std^2). Zero keeps
        /// the fixed initial state. Spreads beyond ~(0.3, 1.5) push trials
        /// over the potential barrier of the benchmark parameters.
        init_x_std: f64,
        init_v_std: f64,
    },
    /// Anharmonic oscillator latent, conditionally dependent noise.
    OscillatorConditional {
        grid: TimeGrid,
        oscillator: OscillatorParams,
        noise: ConditionalNoiseParams,
        init_x_std: f64,
        init_v_std: f64,
    },
    /// Synthetic alpha-band oscillation with its own observation model.
    Alpha { grid: TimeGrid, params: AlphaGenParams },
}

impl GeneratorSpec {
    pub fn default_grid() -> TimeGrid {
        TimeGrid { n: 200, dt: 0.01 }
    }

    pub fn gp_default() -> Self {
        GeneratorSpec::Gp { grid: Self::default_grid() }
    }

    pub fn oscillator_gaussian_default() -> Self {
        GeneratorSpec::OscillatorGaussian {
            grid: Self::default_grid(),
            oscillator: OscillatorParams::default(),
            obs_noise_std: 20.0,
            init_x_std: 0.3,
            init_v_std: 1.5,
        }
    }

    pub fn oscillator_conditional_default() -> Self {
        GeneratorSpec::OscillatorConditional {
            grid: Self::default_grid(),
            oscillator: OscillatorParams::default(),
            noise: ConditionalNoiseParams::default(),
            init_x_std: 0.3,
            init_v_std: 1.5,
        }
    }

    pub fn alpha_default() -> Self {
        GeneratorSpec::Alpha { grid: Self::default_grid(), params: AlphaGenParams::default() }
    }

    /// Lookup by the generator names used on the command line.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gp" => Ok(Self::gp_default()),
            "oscillator-gaussian" => Ok(Self::oscillator_gaussian_default()),
            "oscillator-conditional" => Ok(Self::oscillator_conditional_default()),
            "alpha" => Ok(Self::alpha_default()),
            other => Err(Error::Config(format!(
                "unknown generator '{other}' (expected gp | oscillator-gaussian | oscillator-conditional | alpha)"
            ))),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        match self {
            GeneratorSpec::Gp { grid }
            | GeneratorSpec::OscillatorGaussian { grid, .. }
            | GeneratorSpec::OscillatorConditional { grid, .. }
            | GeneratorSpec::Alpha { grid, .. } => *grid,
        }
    }

    /// Generates the trial for `seed`; the same `(spec, seed)` always
    /// reproduces the same pair.
    ///
    /// The oscillator ensembles have a small per-trial probability of
    /// crossing the potential barrier and blowing up numerically; such a
    /// trial is retried with a deterministically derived sub-seed (at most
    /// [`MAX_DIVERGENCE_RETRIES`] times), so the pair is still a pure
    /// function of `(spec, seed)`.
    pub fn generate_trial(&self, seed: u64) -> Result<TrialPair> {
        let mut attempt_seed = seed;
        let mut last_err = None;
        for attempt in 1..=MAX_DIVERGENCE_RETRIES {
            match self.generate_trial_once(attempt_seed) {
                Ok(mut pair) => {
                    pair.generator_seed = seed;
                    return Ok(pair);
                }
                Err(err @ Error::SimulationDiverged { .. }) => {
                    last_err = Some(err);
                    attempt_seed = derive_seed(seed, "diverged-retry", attempt as u64);
                }
                Err(other) => return Err(other),
            }
        }
        Err(last_err.expect("loop ran at least once"))
    }

    fn generate_trial_once(&self, seed: u64) -> Result<TrialPair> {
        let mut rng = seeded_rng(seed);
        let (latent, observed) = match self {
            GeneratorSpec::Gp { grid } => {
                let (kernel, noise_std) = sample_gp_hyperparams(&mut rng);
                let latent = sample_gp(*grid, &kernel, &mut rng)?;
                let observed = observe_gaussian(&latent, noise_std, &mut rng)?;
                (latent, observed)
            }
            GeneratorSpec::OscillatorGaussian { grid, oscillator, obs_noise_std, init_x_std, init_v_std } => {
                let params = resolve_init(oscillator, *init_x_std, *init_v_std, &mut rng);
                let latent = simulate_oscillator(*grid, &params, &mut rng)?;
                let observed = observe_gaussian(&latent, *obs_noise_std, &mut rng)?;
                (latent, observed)
            }
            GeneratorSpec::OscillatorConditional { grid, oscillator, noise, init_x_std, init_v_std } => {
                let params = resolve_init(oscillator, *init_x_std, *init_v_std, &mut rng);
                let latent = simulate_oscillator(*grid, &params, &mut rng)?;
                let observed = observe_conditional(&latent, *grid, noise, &mut rng)?;
                (latent, observed)
            }
            GeneratorSpec::Alpha { grid, params } => alpha::generate_alpha_trial(*grid, params, &mut rng)?,
        };
        Ok(TrialPair { latent, observed, generator_seed: seed })
    }
}

/// Attempt cap for the divergence retry in [`GeneratorSpec::generate_trial`].
pub const MAX_DIVERGENCE_RETRIES: usize = 8;

fn resolve_init(base: &OscillatorParams, init_x_std: f64, init_v_std: f64, rng: &mut impl Rng) -> OscillatorParams {
    if init_x_std == 0.0 && init_v_std == 0.0 {
        return *base;
    }
    let x0 = base.x0 + init_x_std * rng.sample::<f64, _>(StandardNormal);
    let v0 = base.v0 + init_v_std * rng.sample::<f64, _>(StandardNormal);
    OscillatorParams { x0, v0, ..*base }
}

/// Seed of trial `index` within a dataset built from `master_seed`.
pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    derive_seed(master_seed, "trial", index)
}

/// Seeded, reproducible collection of trials plus generator provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: GeneratorSpec,
    pub master_seed: u64,
    pub trials: Vec<TrialPair>,
}

/// Provenance record embedded in containers and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: GeneratorSpec,
    pub master_seed: u64,
    pub count: usize,
    pub grid: TimeGrid,
}

impl Dataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            format_version: dataset_io::DATASET_VERSION,
            spec: self.spec.clone(),
            master_seed: self.master_seed,
            count: self.trials.len(),
            grid: self.spec.grid(),
        }
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string(&self.manifest()).expect("manifest serializes")
    }

    pub fn signal_length(&self) -> usize {
        self.spec.grid().n
    }
}

/// Generates `count` trials. Trial `i` derives its seed from
/// `(master_seed, i)` alone, so any single trial can be regenerated without
/// the others and generation order (or parallelism) cannot change the
/// result.
pub fn build_dataset(spec: &GeneratorSpec, count: usize, master_seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidArgument("dataset needs count >= 1".into()));
    }
    let trials: Vec<TrialPair> = (0..count as u64)
        .into_par_iter()
        .map(|i| spec.generate_trial(trial_seed(master_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { spec: spec.clone(), master_seed, trials })
}
