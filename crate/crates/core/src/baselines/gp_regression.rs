//! GP regression baselines: exact posterior mean, log marginal likelihood,
//! and multi-start hyperparameter optimization by gradient ascent on the
//! log-parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::series::{TimeGrid, TimeSeries};
use crate::simulators::gp::{cholesky_with_jitter, kernel_matrix, SqExpKernelParams};

fn noisy_kernel(times: &[f64], kernel: &SqExpKernelParams, noise_std: f64) -> DMatrix<f64> {
    let mut k = kernel_matrix(times, kernel);
    let n = times.len();
    for i in 0..n {
        k[(i, i)] += noise_std * noise_std;
    }
    k
}

/// Posterior mean `K (K + noise^2 I)^{-1} y` at the observation times.
pub fn gp_posterior_mean(
    observed: &TimeSeries,
    grid: TimeGrid,
    kernel: &SqExpKernelParams,
    noise_std: f64,
) -> Result<TimeSeries> {
    if observed.len() != grid.n {
        return Err(Error::InvalidArgument("observation length does not match grid".into()));
    }
    if !(noise_std > 0.0) {
        return Err(Error::InvalidArgument("noise_std must be positive".into()));
    }
    let times = grid.times();
    let ky = noisy_kernel(&times, kernel, noise_std);
    let chol = cholesky_with_jitter(&ky, kernel.amplitude * kernel.amplitude + noise_std * noise_std)?;
    let mut alpha = DVector::from_vec(observed.values.clone());
    chol.solve_mut(&mut alpha);
    let k = kernel_matrix(&times, kernel);
    let mean = k * alpha;
    Ok(TimeSeries::new(grid.dt, mean.iter().copied().collect()))
}

/// `-0.5 y^T (K + s^2 I)^{-1} y - 0.5 log det(K + s^2 I) - n/2 log(2 pi)`.
pub fn gp_log_marginal_likelihood(
    observed: &TimeSeries,
    grid: TimeGrid,
    kernel: &SqExpKernelParams,
    noise_std: f64,
) -> Result<f64> {
    if observed.len() != grid.n {
        return Err(Error::InvalidArgument("observation length does not match grid".into()));
    }
    if !(noise_std > 0.0) {
        return Err(Error::InvalidArgument("noise_std must be positive".into()));
    }
    let times = grid.times();
    let ky = noisy_kernel(&times, kernel, noise_std);
    let chol = cholesky_with_jitter(&ky, kernel.amplitude * kernel.amplitude + noise_std * noise_std)?;
    let y = DVector::from_vec(observed.values.clone());
    let mut alpha = y.clone();
    chol.solve_mut(&mut alpha);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let n = grid.n as f64;
    Ok(-0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln length_scale, ln amplitude, ln noise_std)`.
pub fn gp_lml_and_gradient(
    observed: &TimeSeries,
    grid: TimeGrid,
    kernel: &SqExpKernelParams,
    noise_std: f64,
) -> Result<(f64, [f64; 3])> {
    let times = grid.times();
    let n = grid.n;
    let k = kernel_matrix(&times, kernel);
    let mut ky = k.clone();
    for i in 0..n {
        ky[(i, i)] += noise_std * noise_std;
    }
    let chol = cholesky_with_jitter(&ky, kernel.amplitude * kernel.amplitude + noise_std * noise_std)?;
    let y = DVector::from_vec(observed.values.clone());
    let mut alpha = y.clone();
    chol.solve_mut(&mut alpha);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln();

    // d lml / d theta = 0.5 tr((alpha alpha^T - Ky^-1) dKy/dtheta).
    let ky_inv = chol.inverse();
    let l2 = kernel.length_scale * kernel.length_scale;
    let mut g = [0.0f64; 3];
    for i in 0..n {
        for j in 0..n {
            let a_ij = alpha[i] * alpha[j] - ky_inv[(i, j)];
            let d = times[i] - times[j];
            // dK/d(ln l) = K .* d^2 / l^2, dK/d(ln a) = 2 K.
            g[0] += 0.5 * a_ij * k[(i, j)] * (d * d / l2);
            g[1] += 0.5 * a_ij * 2.0 * k[(i, j)];
        }
        // dKy/d(ln s) = 2 s^2 I.
        g[2] += 0.5 * (alpha[i] * alpha[i] - ky_inv[(i, i)]) * 2.0 * noise_std * noise_std;
    }
    Ok((lml, g))
}

/// Bounds keeping the log-parameter ascent in a numerically sane box.
const LOG_BOUNDS: [(f64, f64); 3] = [(-6.9, 2.3), (-9.2, 6.9), (-9.2, 6.9)];

fn clamp_log(theta: &mut [f64; 3]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(LOG_BOUNDS) {
        *t = t.clamp(lo, hi);
    }
}

fn eval_theta(observed: &TimeSeries, grid: TimeGrid, theta: &[f64; 3]) -> Result<(f64, [f64; 3])> {
    let kernel = SqExpKernelParams { length_scale: theta[0].exp(), amplitude: theta[1].exp() };
    gp_lml_and_gradient(observed, grid, &kernel, theta[2].exp())
}

fn eval_theta_value(observed: &TimeSeries, grid: TimeGrid, theta: &[f64; 3]) -> Result<f64> {
    let kernel = SqExpKernelParams { length_scale: theta[0].exp(), amplitude: theta[1].exp() };
    gp_log_marginal_likelihood(observed, grid, &kernel, theta[2].exp())
}

/// Gradient ascent with backtracking from one starting point. Returns the
/// best visited `(theta, lml)`. Backtracking probes evaluate the likelihood
/// only; the gradient (which needs a dense inverse) is computed once per
/// accepted point.
fn ascend(observed: &TimeSeries, grid: TimeGrid, start: [f64; 3], max_iter: usize) -> Result<([f64; 3], f64)> {
    let mut theta = start;
    clamp_log(&mut theta);
    let (mut value, mut grad) = eval_theta(observed, grid, &theta)?;
    let mut step = 0.1;
    for _ in 0..max_iter {
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-6 {
            break;
        }
        let mut advanced = false;
        for _ in 0..40 {
            let mut cand = theta;
            for i in 0..3 {
                cand[i] += step * grad[i];
            }
            clamp_log(&mut cand);
            match eval_theta_value(observed, grid, &cand) {
                Ok(v) if v > value => {
                    let (_, g) = eval_theta(observed, grid, &cand)?;
                    theta = cand;
                    value = v;
                    grad = g;
                    step = (step * 1.5).min(1.0);
                    advanced = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !advanced {
            break;
        }
    }
    Ok((theta, value))
}

/// Multi-start maximization of the marginal likelihood. The default grid of
/// five starts spans length scales {0.05, 0.15, 0.5} s and noise levels
/// {0.1, 1.0}; the amplitude always starts at the sample std of the data.
/// The returned optimum is at least as good as every starting point.
pub fn gp_optimize_hyperparams(
    observed: &TimeSeries,
    grid: TimeGrid,
    starts: &[(f64, f64)],
    max_iter: usize,
) -> Result<(SqExpKernelParams, f64)> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("need at least one starting point".into()));
    }
    let n = observed.len() as f64;
    let mean = observed.values.iter().sum::<f64>() / n;
    let sd = (observed.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let amp0 = sd.max(1e-3);
    let mut best: Option<([f64; 3], f64)> = None;
    let mut failures = 0;
    for &(l0, s0) in starts {
        let start = [l0.ln(), amp0.ln(), s0.ln()];
        match ascend(observed, grid, start, max_iter) {
            Ok((theta, value)) => {
                if best.as_ref().map_or(true, |(_, b)| value > *b) {
                    best = Some((theta, value));
                }
            }
            Err(_) => failures += 1,
        }
    }
    match best {
        Some((theta, _)) => Ok((
            SqExpKernelParams { length_scale: theta[0].exp(), amplitude: theta[1].exp() },
            theta[2].exp(),
        )),
        None => Err(Error::Numerical(format!(
            "all {failures} optimization starts failed numerically"
        ))),
    }
}

/// The five standard starting points (length scale, noise std).
pub const DEFAULT_GP_STARTS: [(f64, f64); 5] =
    [(0.05, 0.1), (0.15, 0.1), (0.5, 0.1), (0.05, 1.0), (0.5, 1.0)];

pub const DEFAULT_GP_MAX_ITER: usize = 500;
