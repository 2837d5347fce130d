//! Linear-Gaussian state-space model and the forward-backward
//! (Kalman / Rauch-Tung-Striebel) smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `x_{t+1} = F x_t + w`, `y_t = H x_t + v`, `w ~ N(0, Q)`, `v ~ N(0, R)`,
/// `x_0 ~ N(initial_mean, initial_cov)`.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub transition: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub observation_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn check_dims(&self) -> Result<()> {
        let d = self.state_dim();
        let o = self.obs_dim();
        let ok = self.transition.ncols() == d
            && self.process_cov.shape() == (d, d)
            && self.observation.ncols() == d
            && self.observation_cov.shape() == (o, o)
            && self.initial_mean.len() == d
            && self.initial_cov.shape() == (d, d);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("inconsistent model dimensions".into()))
        }
    }
}

/// Per-time smoothed means and covariances.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl SmootherOutput {
    /// First state component as a plain series (the usual scalar readout).
    pub fn component(&self, idx: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[idx]).collect()
    }

    pub fn variances(&self, idx: usize) -> Vec<f64> {
        self.covariances.iter().map(|p| p[(idx, idx)]).collect()
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Solves `X S = B` for X (i.e. `X = B S^{-1}`) through the Cholesky factor
/// of the symmetric positive-definite `S`.
pub(crate) fn solve_right_spd(b: &DMatrix<f64>, s: &DMatrix<f64>, what: &str, step: usize) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(s.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} is singular at step {step}")))?;
    // X = B S^-1  <=>  S X^T = B^T.
    let mut xt = b.transpose();
    chol.solve_mut(&mut xt);
    Ok(xt.transpose())
}

struct ForwardPass {
    filtered_means: Vec<DVector<f64>>,
    filtered_covs: Vec<DMatrix<f64>>,
    predicted_means: Vec<DVector<f64>>,
    predicted_covs: Vec<DMatrix<f64>>,
}

fn kalman_forward(model: &LinearGaussianModel, observations: &[DVector<f64>]) -> Result<ForwardPass> {
    let n = observations.len();
    let d = model.state_dim();
    let identity = DMatrix::<f64>::identity(d, d);
    let mut fwd = ForwardPass {
        filtered_means: Vec::with_capacity(n),
        filtered_covs: Vec::with_capacity(n),
        predicted_means: Vec::with_capacity(n),
        predicted_covs: Vec::with_capacity(n),
    };
    let mut mean = model.initial_mean.clone();
    let mut cov = model.initial_cov.clone();
    for (t, y) in observations.iter().enumerate() {
        if t > 0 {
            mean = &model.transition * mean;
            cov = &model.transition * cov * model.transition.transpose() + &model.process_cov;
            symmetrize(&mut cov);
        }
        fwd.predicted_means.push(mean.clone());
        fwd.predicted_covs.push(cov.clone());

        let innovation = y - &model.observation * &mean;
        let s = &model.observation * &cov * model.observation.transpose() + &model.observation_cov;
        let gain = solve_right_spd(&(&cov * model.observation.transpose()), &s, "innovation covariance", t)?;
        mean += &gain * innovation;
        // Joseph form keeps the covariance symmetric positive semidefinite.
        let a = &identity - &gain * &model.observation;
        cov = &a * cov * a.transpose() + &gain * &model.observation_cov * gain.transpose();
        symmetrize(&mut cov);
        fwd.filtered_means.push(mean.clone());
        fwd.filtered_covs.push(cov.clone());
    }
    Ok(fwd)
}

/// Forward Kalman filter followed by the backward recursion. Returns the
/// smoothed marginals; at every step the smoothed variance cannot exceed
/// the filtered variance.
pub fn kalman_rts_smoother(model: &LinearGaussianModel, observations: &[DVector<f64>]) -> Result<SmootherOutput> {
    model.check_dims()?;
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    if observations.iter().any(|y| y.len() != model.obs_dim()) {
        return Err(Error::InvalidArgument("observation dimension mismatch".into()));
    }
    let fwd = kalman_forward(model, observations)?;
    let n = observations.len();
    let mut means = fwd.filtered_means.clone();
    let mut covs = fwd.filtered_covs.clone();
    for t in (0..n - 1).rev() {
        let gain = solve_right_spd(
            &(&fwd.filtered_covs[t] * model.transition.transpose()),
            &fwd.predicted_covs[t + 1],
            "predicted covariance",
            t + 1,
        )?;
        means[t] = &fwd.filtered_means[t] + &gain * (&means[t + 1] - &fwd.predicted_means[t + 1]);
        covs[t] = &fwd.filtered_covs[t]
            + &gain * (&covs[t + 1] - &fwd.predicted_covs[t + 1]) * gain.transpose();
        symmetrize(&mut covs[t]);
    }
    Ok(SmootherOutput { means, covariances: covs })
}

/// Filtered (not smoothed) marginals; used by tests to verify that
/// smoothing never increases the marginal variance.
pub fn kalman_filter(model: &LinearGaussianModel, observations: &[DVector<f64>]) -> Result<SmootherOutput> {
    model.check_dims()?;
    let fwd = kalman_forward(model, observations)?;
    Ok(SmootherOutput { means: fwd.filtered_means, covariances: fwd.filtered_covs })
}
