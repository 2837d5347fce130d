//! Synthetic alpha-band oscillation generator: a GP-modulated envelope and
//! instantaneous frequency drive a polynomially distorted cosine, giving
//! ~10 Hz waveforms with variable shape, amplitude and peak frequency.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::series::{TimeGrid, TimeSeries};
use crate::simulators::gp::{sample_gp, SqExpKernelParams};
use crate::simulators::noise::{observe_conditional, sample_student_t, ConditionalNoiseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaGenParams {
    pub envelope_gp: SqExpKernelParams,
    pub freq_gp: SqExpKernelParams,
    /// Mean angular frequency (rad/s).
    pub freq_mean: f64,
    /// Degrees of freedom of the Student-t priors on the waveform
    /// coefficients.
    pub taylor_df: u32,
    /// Accumulate the phase as the integral of omega(t) instead of the
    /// literal product omega(t) * t.
    pub phase_integral: bool,
    /// Observation noise applied to the latent waveform.
    pub noise: ConditionalNoiseParams,
}

impl Default for AlphaGenParams {
    fn default() -> Self {
        let two_pi = std::f64::consts::TAU;
        AlphaGenParams {
            envelope_gp: SqExpKernelParams { length_scale: 0.5, amplitude: 1.0 },
            freq_gp: SqExpKernelParams { length_scale: 1.0, amplitude: two_pi },
            freq_mean: two_pi * 10.0,
            taylor_df: 3,
            phase_integral: false,
            // The full conditionally dependent model would bury the unit
            // amplitude waveform; a 0.2x rescale keeps trend/jumps/t-noise
            // present at amplitudes where recovery is meaningful.
            noise: ConditionalNoiseParams::default().scaled(0.2),
        }
    }
}

/// Polynomial waveform distortion `f(a) = w1 a + w2 a^2 + ... + w5 a^5`.
pub fn taylor_waveform(a: f64, w: &[f64; 5]) -> f64 {
    a * (w[0] + a * (w[1] + a * (w[2] + a * (w[3] + a * w[4]))))
}

/// Coefficient draw: odd coefficients from a Student-t truncated to
/// `[0, inf)`, even coefficients from the plain Student-t.
pub fn sample_taylor_coeffs(df: u32, rng: &mut impl Rng) -> [f64; 5] {
    [
        sample_student_t(df, rng).abs(),
        sample_student_t(df, rng),
        sample_student_t(df, rng).abs(),
        sample_student_t(df, rng),
        sample_student_t(df, rng).abs(),
    ]
}

/// Deterministic waveform assembly from the sampled modulators:
/// `x(t) = A(t) * f(cos(phase(t)))` with `phase = omega(t) * t + phi0`, or
/// the accumulated integral of omega when `phase_integral` is set.
pub fn alpha_waveform(
    envelope: &TimeSeries,
    omega: &TimeSeries,
    phi0: f64,
    w: &[f64; 5],
    grid: TimeGrid,
    phase_integral: bool,
) -> TimeSeries {
    let mut values = Vec::with_capacity(grid.n);
    let mut acc_phase = phi0;
    for j in 0..grid.n {
        let phase = if phase_integral {
            if j > 0 {
                acc_phase += omega.values[j] * grid.dt;
            }
            acc_phase
        } else {
            omega.values[j] * grid.time(j) + phi0
        };
        values.push(envelope.values[j] * taylor_waveform(phase.cos(), w));
    }
    TimeSeries::new(grid.dt, values)
}

/// Samples one (latent, observed) alpha trial: GP envelope, GP frequency
/// offset around `freq_mean`, uniform initial phase, Student-t waveform
/// coefficients, then the conditionally dependent observation model.
pub fn generate_alpha_trial(
    grid: TimeGrid,
    params: &AlphaGenParams,
    rng: &mut impl Rng,
) -> Result<(TimeSeries, TimeSeries)> {
    let envelope = sample_gp(grid, &params.envelope_gp, rng)?;
    let freq_dev = sample_gp(grid, &params.freq_gp, rng)?;
    let omega = TimeSeries::new(grid.dt, freq_dev.values.iter().map(|d| params.freq_mean + d).collect());
    let phi0 = rng.random_range(0.0..std::f64::consts::TAU);
    let w = sample_taylor_coeffs(params.taylor_df, rng);
    let latent = alpha_waveform(&envelope, &omega, phi0, &w, grid, params.phase_integral);
    let observed = observe_conditional(&latent, grid, &params.noise, rng)?;
    Ok((latent, observed))
}
