//! Gaussian-process signal generator with a squared exponential covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeGrid, TimeSeries};

/// Squared exponential kernel `amplitude^2 * exp(-(t - t')^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqExpKernelParams {
    /// Length scale in seconds.
    pub length_scale: f64,
    pub amplitude: f64,
}

impl SqExpKernelParams {
    pub fn new(length_scale: f64, amplitude: f64) -> Result<Self> {
        if !(length_scale > 0.0) || !(amplitude > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel parameters must be strictly positive, got l = {length_scale}, a = {amplitude}"
            )));
        }
        Ok(SqExpKernelParams { length_scale, amplitude })
    }

    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        let d = t1 - t2;
        self.amplitude * self.amplitude * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Dense kernel matrix over a set of sample times.
pub fn kernel_matrix(times: &[f64], params: &SqExpKernelParams) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| params.eval(times[i], times[j]))
}

/// Cholesky factor of `k` with an escalating diagonal jitter ladder:
/// starting at `1e-10 * scale` and growing tenfold up to `1e-4 * scale`.
pub fn cholesky_with_jitter(k: &DMatrix<f64>, scale: f64) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(chol) = nalgebra::Cholesky::new(k.clone()) {
        return Ok(chol);
    }
    let mut factor = 1e-10;
    while factor <= 1e-4 {
        let mut jittered = k.clone();
        for i in 0..k.nrows() {
            jittered[(i, i)] += factor * scale;
        }
        if let Some(chol) = nalgebra::Cholesky::new(jittered) {
            return Ok(chol);
        }
        factor *= 10.0;
    }
    Err(Error::Numerical(format!(
        "kernel matrix is not positive definite even with jitter up to 1e-4 * {scale}"
    )))
}

/// Draws one zero-mean GP sample path on the grid.
pub fn sample_gp(grid: TimeGrid, params: &SqExpKernelParams, rng: &mut impl Rng) -> Result<TimeSeries> {
    if params.amplitude == 0.0 {
        return Ok(TimeSeries::zeros(grid));
    }
    let times = grid.times();
    let k = kernel_matrix(&times, params);
    let chol = cholesky_with_jitter(&k, params.amplitude * params.amplitude)?;
    let z = DVector::from_fn(grid.n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = chol.l() * z;
    Ok(TimeSeries::new(grid.dt, x.iter().copied().collect()))
}

/// Hierarchical hyperparameter draw for the GP signal ensemble: log-normal
/// length scale (mu -1.9, sigma 0.8), amplitude (mu 0, sigma 0.5) and
/// observation noise standard deviation (mu -0.9, sigma 0.5).
pub fn sample_gp_hyperparams(rng: &mut impl Rng) -> (SqExpKernelParams, f64) {
    let length = LogNormal::new(-1.9, 0.8).unwrap().sample(rng);
    let amplitude = LogNormal::new(0.0, 0.5).unwrap().sample(rng);
    let noise_std = LogNormal::new(-0.9, 0.5).unwrap().sample(rng);
    (SqExpKernelParams { length_scale: length, amplitude }, noise_std)
}
