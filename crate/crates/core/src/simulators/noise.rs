//! Observation-noise models: plain Gaussian, and the conditionally
//! dependent model that adds a random linear trend, a Cauchy-jump process
//! and Student-t white noise on top of the latent signal.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeGrid, TimeSeries};

/// `y_j = x_j + noise_std * N(0,1)`, independent across samples.
pub fn observe_gaussian(latent: &TimeSeries, noise_std: f64, rng: &mut impl Rng) -> Result<TimeSeries> {
    if noise_std < 0.0 {
        return Err(Error::InvalidArgument("noise_std must be non-negative".into()));
    }
    let values = latent
        .values
        .iter()
        .map(|x| x + noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(TimeSeries::new(latent.dt, values))
}

/// Parameters of the conditionally dependent observation model
/// `y(t) = x(t) + eta t + gamma(t) + zeta(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalNoiseParams {
    /// Std of the normal prior over the trend slope eta.
    pub trend_slope_std: f64,
    /// Mean of the exponential inter-jump interval of gamma(t), seconds.
    pub jump_mean_interval: f64,
    /// Cauchy scale of the jump sizes.
    pub jump_scale: f64,
    /// Gamma scale for the Student-t noise scale.
    pub t_scale_gamma_scale: f64,
    /// Gamma shape for the Student-t noise scale.
    pub t_scale_gamma_shape: f64,
    /// Inclusive range of the uniformly drawn integer degrees of freedom.
    pub t_df_min: u32,
    pub t_df_max: u32,
}

impl Default for ConditionalNoiseParams {
    fn default() -> Self {
        ConditionalNoiseParams {
            trend_slope_std: 10.0,
            jump_mean_interval: 0.5,
            jump_scale: 1.5,
            t_scale_gamma_scale: 0.3,
            t_scale_gamma_shape: 2.0,
            t_df_min: 2,
            t_df_max: 21,
        }
    }
}

impl ConditionalNoiseParams {
    /// Same structure with every noise amplitude multiplied by `factor`
    /// (jump timing is left untouched).
    pub fn scaled(&self, factor: f64) -> Self {
        ConditionalNoiseParams {
            trend_slope_std: self.trend_slope_std * factor,
            jump_scale: self.jump_scale * factor,
            t_scale_gamma_scale: self.t_scale_gamma_scale * factor,
            ..*self
        }
    }
}

/// Standard Cauchy scaled by `scale`, via the tangent transform of a
/// uniform variate.
pub fn sample_cauchy(scale: f64, rng: &mut impl Rng) -> f64 {
    let mut u: f64 = rng.random();
    while u == 0.0 {
        u = rng.random();
    }
    scale * (std::f64::consts::PI * (u - 0.5)).tan()
}

/// Student-t with integer degrees of freedom: a standard normal over the
/// square root of an independent chi-square (sum of df squared normals)
/// divided by df.
pub fn sample_student_t(df: u32, rng: &mut impl Rng) -> f64 {
    debug_assert!(df >= 1);
    let z: f64 = rng.sample(StandardNormal);
    let mut chi2 = 0.0;
    for _ in 0..df {
        let g: f64 = rng.sample(StandardNormal);
        chi2 += g * g;
    }
    z / (chi2 / df as f64).sqrt()
}

/// Pure jump process: piecewise-constant path starting at 0, exponential
/// inter-jump intervals, Cauchy-distributed jump increments.
pub fn sample_jump_process(grid: TimeGrid, params: &ConditionalNoiseParams, rng: &mut impl Rng) -> TimeSeries {
    let mut values = Vec::with_capacity(grid.n);
    if !params.jump_mean_interval.is_finite() || params.jump_mean_interval <= 0.0 {
        values.resize(grid.n, 0.0);
        return TimeSeries::new(grid.dt, values);
    }
    let exp = Exp::new(1.0 / params.jump_mean_interval).expect("positive rate");
    let mut next_jump = {
        let mut w: f64 = exp.sample(rng);
        while w == 0.0 {
            w = exp.sample(rng);
        }
        w
    };
    let mut level = 0.0;
    for j in 0..grid.n {
        let t = grid.time(j);
        while next_jump <= t {
            level += sample_cauchy(params.jump_scale, rng);
            next_jump += exp.sample(rng);
        }
        values.push(level);
    }
    TimeSeries::new(grid.dt, values)
}

/// The four additive components of the conditionally dependent model,
/// generated independently.
pub struct ConditionalComponents {
    pub latent: TimeSeries,
    pub trend: TimeSeries,
    pub jumps: TimeSeries,
    pub t_noise: TimeSeries,
}

impl ConditionalComponents {
    pub fn sum(&self) -> TimeSeries {
        let values = (0..self.latent.len())
            .map(|j| {
                self.latent.values[j] + self.trend.values[j] + self.jumps.values[j] + self.t_noise.values[j]
            })
            .collect();
        TimeSeries::new(self.latent.dt, values)
    }
}

/// Draws the per-trial noise parameters (trend slope, jump path, t-noise
/// scale and degrees of freedom) and returns each additive component.
pub fn conditional_components(
    latent: &TimeSeries,
    grid: TimeGrid,
    params: &ConditionalNoiseParams,
    rng: &mut impl Rng,
) -> Result<ConditionalComponents> {
    if latent.len() != grid.n {
        return Err(Error::InvalidArgument(format!(
            "latent length {} does not match grid length {}",
            latent.len(),
            grid.n
        )));
    }
    let slope = if params.trend_slope_std > 0.0 {
        params.trend_slope_std * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let trend = TimeSeries::new(grid.dt, (0..grid.n).map(|j| slope * grid.time(j)).collect());
    let jumps = sample_jump_process(grid, params, rng);
    let t_scale = if params.t_scale_gamma_scale > 0.0 {
        Gamma::new(params.t_scale_gamma_shape, params.t_scale_gamma_scale)
            .map_err(|e| Error::InvalidArgument(format!("gamma parameters: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let df = rng.random_range(params.t_df_min..=params.t_df_max);
    let t_noise = TimeSeries::new(
        grid.dt,
        (0..grid.n).map(|_| t_scale * sample_student_t(df, rng)).collect(),
    );
    Ok(ConditionalComponents { latent: latent.clone(), trend, jumps, t_noise })
}

/// `y(t) = x(t) + eta t + gamma(t) + zeta(t)` with all noise parameters
/// redrawn per call.
pub fn observe_conditional(
    latent: &TimeSeries,
    grid: TimeGrid,
    params: &ConditionalNoiseParams,
    rng: &mut impl Rng,
) -> Result<TimeSeries> {
    Ok(conditional_components(latent, grid, params, rng)?.sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn grid_2s() -> TimeGrid {
        TimeGrid::new(200, 0.01).unwrap()
    }

    #[test]
    fn zero_noise_observation_is_identity() {
        let latent = TimeSeries::new(0.01, (0..50).map(|i| (i as f64).sin()).collect());
        let y = observe_gaussian(&latent, 0.0, &mut seeded_rng(1)).unwrap();
        assert_eq!(y, latent);
    }

    #[test]
    fn gaussian_noise_has_the_requested_std_and_is_white() {
        let n = 100_000;
        let latent = TimeSeries::new(0.01, vec![0.0; n]);
        let y = observe_gaussian(&latent, 20.0, &mut seeded_rng(2)).unwrap();
        let mean = y.values.iter().sum::<f64>() / n as f64;
        let var = y.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 20.0).abs() / 20.0 < 0.01, "std {std}");
        let lag1: f64 = y.values.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>()
            / ((n - 1) as f64 * var);
        assert!(lag1.abs() < 0.02, "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn jump_process_starts_at_zero_and_is_piecewise_constant() {
        let params = ConditionalNoiseParams::default();
        let mut rng = seeded_rng(3);
        let path = sample_jump_process(grid_2s(), &params, &mut rng);
        assert_eq!(path.values[0], 0.0);
        // Between changes the level is exactly constant.
        let mut distinct = 1;
        for w in path.values.windows(2) {
            if w[0] != w[1] {
                distinct += 1;
            }
        }
        assert!(distinct < 25, "suspiciously many level changes: {distinct}");
    }

    #[test]
    fn jump_count_matches_the_renewal_rate() {
        let params = ConditionalNoiseParams::default();
        let mut rng = seeded_rng(4);
        let runs = 10_000;
        let mut jumps = 0usize;
        for _ in 0..runs {
            let path = sample_jump_process(grid_2s(), &params, &mut rng);
            jumps += path.values.windows(2).filter(|w| w[0] != w[1]).count();
        }
        // 2 s of grid span at one jump per 0.5 s.
        let mean = jumps as f64 / runs as f64;
        let expect = grid_2s().duration() / params.jump_mean_interval;
        assert!((mean - expect).abs() / expect < 0.1, "mean jump count {mean} vs {expect}");
    }

    #[test]
    fn disabled_channels_reduce_to_identity() {
        let params = ConditionalNoiseParams {
            trend_slope_std: 0.0,
            jump_mean_interval: f64::INFINITY,
            t_scale_gamma_scale: 0.0,
            ..ConditionalNoiseParams::default()
        };
        let latent = TimeSeries::new(0.01, (0..200).map(|i| (i as f64 * 0.1).cos()).collect());
        let y = observe_conditional(&latent, grid_2s(), &params, &mut seeded_rng(5)).unwrap();
        assert_eq!(y.values, latent.values);
    }

    #[test]
    fn trend_slopes_have_the_configured_spread() {
        // Only the trend channel active, so the least-squares slope of y
        // recovers eta exactly.
        let params = ConditionalNoiseParams {
            jump_mean_interval: f64::INFINITY,
            t_scale_gamma_scale: 0.0,
            ..ConditionalNoiseParams::default()
        };
        let grid = grid_2s();
        let latent = TimeSeries::zeros(grid);
        let times = grid.times();
        let t_mean = times.iter().sum::<f64>() / grid.n as f64;
        let denom: f64 = times.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
        let mut rng = seeded_rng(6);
        let trials = 10_000;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let y = observe_conditional(&latent, grid, &params, &mut rng).unwrap();
            let y_mean = y.values.iter().sum::<f64>() / grid.n as f64;
            let num: f64 = times.iter().zip(&y.values).map(|(t, v)| (t - t_mean) * (v - y_mean)).sum();
            let slope = num / denom;
            sum_sq += slope * slope;
        }
        let slope_std = (sum_sq / trials as f64).sqrt();
        assert!((slope_std - 10.0).abs() / 10.0 < 0.05, "slope std {slope_std}");
    }

    #[test]
    fn student_t_tails_follow_the_df() {
        let mut rng = seeded_rng(7);
        // Excess kurtosis 6 / (df - 4) for df > 4.
        let n = 400_000;
        let df = 12;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for _ in 0..n {
            let x = sample_student_t(df, &mut rng);
            m2 += x * x;
            m4 += x * x * x * x;
        }
        m2 /= n as f64;
        m4 /= n as f64;
        let excess = m4 / (m2 * m2) - 3.0;
        let expect = 6.0 / (df as f64 - 4.0);
        assert!((excess - expect).abs() < 0.3 * expect, "excess kurtosis {excess} vs {expect}");

        // df = 3: heavier than any Gaussian; the kurtosis estimate blows up
        // well past the Gaussian value of 0.
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for _ in 0..n {
            let x = sample_student_t(3, &mut rng);
            m2 += x * x;
            m4 += x * x * x * x;
        }
        let excess3 = (m4 / n as f64) / ((m2 / n as f64) * (m2 / n as f64)) - 3.0;
        assert!(excess3 > 3.0, "df=3 excess kurtosis {excess3}");
    }

    #[test]
    fn cauchy_jumps_defeat_variance_estimates() {
        // Sample variance keeps growing with the sample count, unlike any
        // finite-variance law.
        let mut rng = seeded_rng(8);
        let var_of = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let x = sample_cauchy(1.5, rng);
                sum += x;
                sum_sq += x * x;
            }
            sum_sq / n as f64 - (sum / n as f64) * (sum / n as f64)
        };
        let small = var_of(1_000, &mut rng);
        let large = var_of(1_000_000, &mut rng);
        assert!(large > 5.0 * small, "variance did not grow: {small} -> {large}");
    }

    #[test]
    fn components_sum_exactly_to_the_observation() {
        let latent = TimeSeries::new(0.01, (0..200).map(|i| (i as f64 * 0.05).sin()).collect());
        let params = ConditionalNoiseParams::default();
        let comps = conditional_components(&latent, grid_2s(), &params, &mut seeded_rng(9)).unwrap();
        let y = comps.sum();
        for j in 0..200 {
            let direct =
                comps.latent.values[j] + comps.trend.values[j] + comps.jumps.values[j] + comps.t_noise.values[j];
            assert_eq!(y.values[j], direct);
        }
    }

    #[test]
    fn inter_jump_intervals_average_to_the_mean() {
        // Long horizon, count jumps: mean interval = span / count.
        let params = ConditionalNoiseParams::default();
        let grid = TimeGrid::new(100_000, 0.01).unwrap();
        let mut rng = seeded_rng(10);
        let path = sample_jump_process(grid, &params, &mut rng);
        let count = path.values.windows(2).filter(|w| w[0] != w[1]).count();
        let est = grid.duration() / count as f64;
        assert!((est - 0.5).abs() < 0.05, "mean interval {est}");
    }
}
