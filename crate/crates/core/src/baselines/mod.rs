//! Classical smoothers used as comparison baselines: exact and
//! hyperparameter-optimized GP regression, the linear Kalman/RTS smoother,
//! extended and unscented Kalman smoothers, and a zero-phase Butterworth
//! band-pass filter.

pub mod butterworth;
pub mod gp_regression;
pub mod kalman;
pub mod nonlinear;

pub use butterworth::{butterworth_bandpass_twopass, ButterworthDesign};
pub use gp_regression::{
    gp_log_marginal_likelihood, gp_optimize_hyperparams, gp_posterior_mean, DEFAULT_GP_MAX_ITER,
    DEFAULT_GP_STARTS,
};
pub use kalman::{kalman_filter, kalman_rts_smoother, LinearGaussianModel, SmootherOutput};
pub use nonlinear::{extended_kalman_smoother, unscented_kalman_smoother, NonlinearModel, SigmaParams};
