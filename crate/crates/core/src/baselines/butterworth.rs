//! Digital Butterworth band-pass design (analog prototype, band transform,
//! bilinear transform with frequency prewarping) and zero-phase two-pass
//! filtering.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Band-pass design in transfer-function form. The denominator is
/// normalized to a leading coefficient of 1 and all poles lie strictly
/// inside the unit circle.
#[derive(Debug, Clone)]
pub struct ButterworthDesign {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate_hz: f64,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

/// Expands a polynomial from its roots; leading coefficient 1.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

fn real_coeffs(coeffs: &[Complex64]) -> Result<Vec<f64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(1.0f64, f64::max);
    for c in coeffs {
        if c.im.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "polynomial coefficients are not real (imag {} vs scale {scale})",
                c.im
            )));
        }
    }
    Ok(coeffs.iter().map(|c| c.re).collect())
}

impl ButterworthDesign {
    /// Designs an order-`order` analog Butterworth prototype, transforms it
    /// to the `[low_hz, high_hz]` band, and discretizes by the bilinear
    /// transform with prewarped band edges. The resulting digital filter
    /// has order `2 * order`.
    pub fn bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("filter order must be >= 1".into()));
        }
        if !(low_hz > 0.0) || !(high_hz > low_hz) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < low < high, got [{low_hz}, {high_hz}]"
            )));
        }
        if high_hz >= sample_rate_hz / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "band edge {high_hz} Hz is at or above the Nyquist frequency {}",
                sample_rate_hz / 2.0
            )));
        }

        // Analog low-pass prototype poles on the unit left half circle.
        let n = order as i32;
        let prototype_poles: Vec<Complex64> = (0..order)
            .map(|k| {
                let theta = std::f64::consts::PI * (2 * k as i32 + 1 - n) as f64 / (2 * n) as f64;
                -(Complex64::new(0.0, theta)).exp()
            })
            .collect();

        // Prewarp the band edges (internal sampling rate 2).
        let fs = 2.0;
        let warp = |f_hz: f64| 2.0 * fs * (std::f64::consts::PI * (2.0 * f_hz / sample_rate_hz) / fs).tan();
        let (w1, w2) = (warp(low_hz), warp(high_hz));
        let bw = w2 - w1;
        let wo = (w1 * w2).sqrt();

        // Low-pass to band-pass: each pole splits into two.
        let mut poles = Vec::with_capacity(2 * order);
        for p in &prototype_poles {
            let scaled = p * (bw / 2.0);
            let shift = (scaled * scaled - wo * wo).sqrt();
            poles.push(scaled + shift);
            poles.push(scaled - shift);
        }
        // `order` zeros at the origin; gain picks up bw^order.
        let zeros = vec![Complex64::new(0.0, 0.0); order];
        let gain = bw.powi(n);

        // Bilinear transform z = (2 fs + s) / (2 fs - s).
        let fs2 = Complex64::new(2.0 * fs, 0.0);
        let z_digital: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
        let p_digital: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
        let num_gain: Complex64 = zeros.iter().map(|z| fs2 - z).product();
        let den_gain: Complex64 = poles.iter().map(|p| fs2 - p).product();
        let k_digital = gain * (num_gain / den_gain).re;
        // Analog zeros at infinity land at z = -1.
        let mut z_digital = z_digital;
        z_digital.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(2 * order - order));

        for p in &p_digital {
            if p.norm() >= 1.0 {
                return Err(Error::Numerical(format!("pole at |z| = {} is not stable", p.norm())));
            }
        }

        let mut numerator = real_coeffs(&poly_from_roots(&z_digital))?;
        for c in &mut numerator {
            *c *= k_digital;
        }
        let denominator = real_coeffs(&poly_from_roots(&p_digital))?;
        Ok(ButterworthDesign {
            order,
            low_hz,
            high_hz,
            sample_rate_hz,
            numerator,
            denominator,
        })
    }

    /// Complex frequency response at `f_hz` (single pass).
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * f_hz / self.sample_rate_hz;
        let z_inv = Complex64::new(0.0, -omega).exp();
        let eval = |coeffs: &[f64]| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &c in coeffs.iter().rev() {
                acc = acc * z_inv + c;
            }
            acc
        };
        eval(&self.numerator) / eval(&self.denominator)
    }

    /// Text export of the coefficients for external verification.
    pub fn coefficient_text(&self) -> String {
        let fmt = |v: &[f64]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "# butterworth bandpass order={} low_hz={} high_hz={} sample_rate_hz={}\nb,{}\na,{}\n",
            self.order,
            self.low_hz,
            self.high_hz,
            self.sample_rate_hz,
            fmt(&self.numerator),
            fmt(&self.denominator)
        )
    }
}

/// Direct-form II transposed filtering with zero initial state.
fn lfilter(b: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
    let order = b.len().max(a.len()) - 1;
    let mut state = vec![0.0f64; order];
    let mut b = b.to_vec();
    let mut a = a.to_vec();
    b.resize(order + 1, 0.0);
    a.resize(order + 1, 0.0);
    let mut out = Vec::with_capacity(x.len());
    for &xi in x {
        let yi = b[0] * xi + state[0];
        for k in 0..order {
            let next = if k + 1 < order { state[k + 1] } else { 0.0 };
            state[k] = b[k + 1] * xi + next - a[k + 1] * yi;
        }
        out.push(yi);
    }
    out
}

/// Zero-phase two-pass filtering: odd-reflection padding of three times the
/// digital filter order on both ends, forward pass, backward pass, trim.
pub fn butterworth_bandpass_twopass(signal: &TimeSeries, design: &ButterworthDesign) -> Result<TimeSeries> {
    let fs = 1.0 / signal.dt;
    if (fs - design.sample_rate_hz).abs() > 1e-9 * design.sample_rate_hz {
        return Err(Error::InvalidArgument(format!(
            "signal sample rate {fs} Hz does not match the design's {} Hz",
            design.sample_rate_hz
        )));
    }
    let pad = 3 * (design.denominator.len().max(design.numerator.len()) - 1);
    let n = signal.len();
    if n <= pad {
        return Err(Error::InvalidArgument(format!(
            "signal length {n} must exceed the padding length {pad}"
        )));
    }
    let x = &signal.values;
    let mut extended = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        extended.push(2.0 * x[0] - x[i]);
    }
    extended.extend_from_slice(x);
    for i in (1..=pad).rev() {
        extended.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let forward = lfilter(&design.numerator, &design.denominator, &extended);
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    reversed = lfilter(&design.numerator, &design.denominator, &reversed);
    let full: Vec<f64> = reversed.into_iter().rev().collect();
    Ok(TimeSeries::new(signal.dt, full[pad..pad + n].to_vec()))
}
