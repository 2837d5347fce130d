//! Extended and unscented Kalman smoothers for nonlinear state-space
//! models, plus the state-space embedding of the anharmonic oscillator.

use nalgebra::{DMatrix, DVector};

use crate::baselines::kalman::{solve_right_spd, symmetrize, LinearGaussianModel, SmootherOutput};
use crate::error::{Error, Result};
use crate::simulators::OscillatorParams;

type StateFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacobianFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Nonlinear model with deterministic transition/observation functions,
/// their Jacobians, and additive Gaussian noise.
pub struct NonlinearModel {
    pub transition_fn: StateFn,
    pub transition_jacobian: JacobianFn,
    pub process_cov: DMatrix<f64>,
    pub observation_fn: StateFn,
    pub observation_jacobian: JacobianFn,
    pub observation_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl NonlinearModel {
    pub fn state_dim(&self) -> usize {
        self.initial_mean.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation_cov.nrows()
    }

    /// Wraps a linear model; EKS and UKS then reduce to the RTS smoother.
    pub fn from_linear(m: &LinearGaussianModel) -> Self {
        let f = m.transition.clone();
        let f2 = m.transition.clone();
        let h = m.observation.clone();
        let h2 = m.observation.clone();
        NonlinearModel {
            transition_fn: Box::new(move |x| &f * x),
            transition_jacobian: Box::new(move |_| f2.clone()),
            process_cov: m.process_cov.clone(),
            observation_fn: Box::new(move |x| &h * x),
            observation_jacobian: Box::new(move |_| h2.clone()),
            observation_cov: m.observation_cov.clone(),
            initial_mean: m.initial_mean.clone(),
            initial_cov: m.initial_cov.clone(),
        }
    }

    /// One Euler-Maruyama step of the anharmonic oscillator as the state
    /// transition over `(x, v)`, observing `x`. The process covariance is
    /// the integrator's own increment covariance `diag(0, dyn_noise_std^2 dt)`
    /// (made definite with a vanishing position jitter).
    pub fn oscillator(
        params: &OscillatorParams,
        dt: f64,
        obs_noise_std: f64,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
    ) -> Self {
        let p = *params;
        let p2 = *params;
        NonlinearModel {
            transition_fn: Box::new(move |s| {
                let (x, v) = (s[0], s[1]);
                let drift = -p.omega0 * p.omega0 * x - p.beta * v + p.k2 * x * x + p.k3 * x * x * x;
                DVector::from_vec(vec![x + v * dt, v + drift * dt])
            }),
            transition_jacobian: Box::new(move |s| {
                let x = s[0];
                let ddrift_dx = -p2.omega0 * p2.omega0 + 2.0 * p2.k2 * x + 3.0 * p2.k3 * x * x;
                DMatrix::from_row_slice(2, 2, &[1.0, dt, ddrift_dx * dt, 1.0 - p2.beta * dt])
            }),
            process_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![
                1e-12,
                params.dyn_noise_std * params.dyn_noise_std * dt,
            ])),
            observation_fn: Box::new(|s| DVector::from_vec(vec![s[0]])),
            observation_jacobian: Box::new(|_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
            observation_cov: DMatrix::from_element(1, 1, obs_noise_std * obs_noise_std),
            initial_mean,
            initial_cov,
        }
    }

    /// Checks both Jacobians against central finite differences at the
    /// given probe states.
    pub fn validate_jacobians(&self, probes: &[DVector<f64>], tol: f64) -> Result<()> {
        let h = 1e-6;
        for probe in probes {
            for (what, func, jac_fn, rows) in [
                ("transition", &self.transition_fn, &self.transition_jacobian, self.state_dim()),
                ("observation", &self.observation_fn, &self.observation_jacobian, self.obs_dim()),
            ] {
                let jac = jac_fn(probe);
                for j in 0..probe.len() {
                    let mut up = probe.clone();
                    up[j] += h;
                    let mut down = probe.clone();
                    down[j] -= h;
                    let fd = (func(&up) - func(&down)) / (2.0 * h);
                    for i in 0..rows {
                        let denom = jac[(i, j)].abs().max(fd[i].abs()).max(1.0);
                        if (jac[(i, j)] - fd[i]).abs() / denom > tol {
                            return Err(Error::InvalidArgument(format!(
                                "{what} jacobian entry ({i},{j}) disagrees with finite differences: {} vs {}",
                                jac[(i, j)],
                                fd[i]
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_obs(model: &NonlinearModel, observations: &[DVector<f64>]) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    if observations.iter().any(|y| y.len() != model.obs_dim()) {
        return Err(Error::InvalidArgument("observation dimension mismatch".into()));
    }
    Ok(())
}

fn finite_or_diverged(mean: &DVector<f64>, step: usize) -> Result<()> {
    if mean.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::EstimationDiverged { step })
    }
}

/// Extended Kalman smoother: EKF forward pass with per-step linearization,
/// then the backward recursion using the transition Jacobians.
pub fn extended_kalman_smoother(model: &NonlinearModel, observations: &[DVector<f64>]) -> Result<SmootherOutput> {
    check_obs(model, observations)?;
    let n = observations.len();
    let d = model.state_dim();
    let identity = DMatrix::<f64>::identity(d, d);

    let mut filtered_means = Vec::with_capacity(n);
    let mut filtered_covs = Vec::with_capacity(n);
    let mut predicted_means = Vec::with_capacity(n);
    let mut predicted_covs = Vec::with_capacity(n);
    let mut jacobians = Vec::with_capacity(n);

    let mut mean = model.initial_mean.clone();
    let mut cov = model.initial_cov.clone();
    for (t, y) in observations.iter().enumerate() {
        if t > 0 {
            let jac = (model.transition_jacobian)(&mean);
            mean = (model.transition_fn)(&mean);
            cov = &jac * cov * jac.transpose() + &model.process_cov;
            symmetrize(&mut cov);
            jacobians.push(jac);
        }
        predicted_means.push(mean.clone());
        predicted_covs.push(cov.clone());

        let h = (model.observation_jacobian)(&mean);
        let innovation = y - (model.observation_fn)(&mean);
        let s = &h * &cov * h.transpose() + &model.observation_cov;
        let gain = solve_right_spd(&(&cov * h.transpose()), &s, "innovation covariance", t)?;
        mean += &gain * innovation;
        finite_or_diverged(&mean, t)?;
        let a = &identity - &gain * &h;
        cov = &a * cov * a.transpose() + &gain * &model.observation_cov * gain.transpose();
        symmetrize(&mut cov);
        filtered_means.push(mean.clone());
        filtered_covs.push(cov.clone());
    }

    let mut means = filtered_means.clone();
    let mut covs = filtered_covs.clone();
    for t in (0..n - 1).rev() {
        let gain = solve_right_spd(
            &(&filtered_covs[t] * jacobians[t].transpose()),
            &predicted_covs[t + 1],
            "predicted covariance",
            t + 1,
        )?;
        means[t] = &filtered_means[t] + &gain * (&means[t + 1] - &predicted_means[t + 1]);
        covs[t] = &filtered_covs[t] + &gain * (&covs[t + 1] - &predicted_covs[t + 1]) * gain.transpose();
        symmetrize(&mut covs[t]);
        finite_or_diverged(&means[t], t)?;
    }
    Ok(SmootherOutput { means, covariances: covs })
}

/// Sigma-point spread parameters. Defaults: alpha 1, beta 2, kappa 0.
#[derive(Debug, Clone, Copy)]
pub struct SigmaParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams { alpha: 1.0, beta: 2.0, kappa: 0.0 }
    }
}

impl SigmaParams {
    fn lambda(&self, d: usize) -> f64 {
        self.alpha * self.alpha * (d as f64 + self.kappa) - d as f64
    }

    fn weights(&self, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let lambda = self.lambda(d);
        let c = d as f64 + lambda;
        if c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma-point parameters need lambda + d > 0, got {c}"
            )));
        }
        let mut wm = vec![1.0 / (2.0 * c); 2 * d + 1];
        let mut wc = wm.clone();
        wm[0] = lambda / c;
        wc[0] = lambda / c + 1.0 - self.alpha * self.alpha + self.beta;
        Ok((wm, wc))
    }
}

fn sigma_points(mean: &DVector<f64>, cov: &DMatrix<f64>, c: f64, step: usize) -> Result<Vec<DVector<f64>>> {
    let d = mean.len();
    let chol = nalgebra::Cholesky::new(cov.clone() * c)
        .ok_or_else(|| Error::Numerical(format!("covariance lost positive definiteness at step {step}")))?;
    let l = chol.l();
    let mut points = Vec::with_capacity(2 * d + 1);
    points.push(mean.clone());
    for i in 0..d {
        let col = l.column(i).into_owned();
        points.push(mean + &col);
        points.push(mean - &col);
    }
    Ok(points)
}

fn unscented_moments(
    points: &[DVector<f64>],
    wm: &[f64],
    wc: &[f64],
    extra_cov: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = points[0].len();
    let mut mean = DVector::<f64>::zeros(dim);
    for (p, w) in points.iter().zip(wm) {
        mean += p * *w;
    }
    let mut cov = extra_cov.clone();
    for (p, w) in points.iter().zip(wc) {
        let dev = p - &mean;
        cov += &dev * dev.transpose() * *w;
    }
    symmetrize(&mut cov);
    (mean, cov)
}

/// Unscented Kalman smoother: sigma-point forward filter and the unscented
/// backward recursion. No Jacobians are evaluated.
pub fn unscented_kalman_smoother(
    model: &NonlinearModel,
    observations: &[DVector<f64>],
    sigma: &SigmaParams,
) -> Result<SmootherOutput> {
    check_obs(model, observations)?;
    let n = observations.len();
    let d = model.state_dim();
    let (wm, wc) = sigma.weights(d)?;
    let c = d as f64 + sigma.lambda(d);

    let mut filtered_means = Vec::with_capacity(n);
    let mut filtered_covs = Vec::with_capacity(n);
    let mut predicted_means = Vec::with_capacity(n);
    let mut predicted_covs = Vec::with_capacity(n);
    // Cross covariances Cov(x_t, x_{t+1} | y_{1..t}) for the backward pass.
    let mut cross_covs: Vec<DMatrix<f64>> = Vec::with_capacity(n);

    let mut mean = model.initial_mean.clone();
    let mut cov = model.initial_cov.clone();
    for (t, y) in observations.iter().enumerate() {
        if t > 0 {
            let points = sigma_points(&mean, &cov, c, t)?;
            let propagated: Vec<DVector<f64>> = points.iter().map(|p| (model.transition_fn)(p)).collect();
            let (pred_mean, pred_cov) = unscented_moments(&propagated, &wm, &wc, &model.process_cov);
            let mut cross = DMatrix::<f64>::zeros(d, d);
            for i in 0..points.len() {
                cross += (&points[i] - &mean) * (&propagated[i] - &pred_mean).transpose() * wc[i];
            }
            cross_covs.push(cross);
            mean = pred_mean;
            cov = pred_cov;
        }
        predicted_means.push(mean.clone());
        predicted_covs.push(cov.clone());

        let points = sigma_points(&mean, &cov, c, t)?;
        let observed: Vec<DVector<f64>> = points.iter().map(|p| (model.observation_fn)(p)).collect();
        let (y_mean, s) = unscented_moments(&observed, &wm, &wc, &model.observation_cov);
        let mut cross_xy = DMatrix::<f64>::zeros(d, model.obs_dim());
        for i in 0..points.len() {
            cross_xy += (&points[i] - &mean) * (&observed[i] - &y_mean).transpose() * wc[i];
        }
        let gain = solve_right_spd(&cross_xy, &s, "innovation covariance", t)?;
        mean += &gain * (y - &y_mean);
        finite_or_diverged(&mean, t)?;
        cov -= &gain * &s * gain.transpose();
        symmetrize(&mut cov);
        filtered_means.push(mean.clone());
        filtered_covs.push(cov.clone());
    }

    let mut means = filtered_means.clone();
    let mut covs = filtered_covs.clone();
    for t in (0..n - 1).rev() {
        let gain = solve_right_spd(&cross_covs[t], &predicted_covs[t + 1], "predicted covariance", t + 1)?;
        means[t] = &filtered_means[t] + &gain * (&means[t + 1] - &predicted_means[t + 1]);
        covs[t] = &filtered_covs[t] + &gain * (&covs[t + 1] - &predicted_covs[t + 1]) * gain.transpose();
        symmetrize(&mut covs[t]);
        finite_or_diverged(&means[t], t)?;
    }
    Ok(SmootherOutput { means, covariances: covs })
}
