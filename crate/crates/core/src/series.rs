use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform sampling grid: `n` samples at interval `dt` seconds, with
/// `t_j = j * dt` for `j = 0..n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(n: usize, dt: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("time grid needs n >= 1".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("sample interval must be positive, got {dt}")));
        }
        Ok(TimeGrid { n, dt })
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.time(j)).collect()
    }

    /// Total spanned duration `(n - 1) * dt`.
    pub fn duration(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }
}

/// A uniformly sampled real-valued sequence together with its sample
/// interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Self {
        TimeSeries { dt, values }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        TimeSeries { dt: grid.dt, values: vec![0.0; grid.n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.values.len(), self.dt)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
