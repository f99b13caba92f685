//! Wigner–Ville distribution and two smoothed Cohen-class baselines:
//! smoothed pseudo Wigner–Ville (SPWV) and Choi–Williams (CWD).
//!
//! Real inputs are replaced by their analytic signal first. Lags are indexed
//! in half-lag samples `m`, `z[n+m]·conj(z[n−m])`, so a lag FFT of length `M`
//! lands on frequencies `k·fs/(2M)`; results are resampled onto the shared
//! STFT lattice bins `0..=n_fft/2`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linear::{boundary_mask, Lattice};
use crate::signal::{GridValues, Signal, TimeFrequencyGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohenConfig {
    /// Length of the time-smoothing window `g` (odd).
    pub time_window_samples: usize,
    /// Length of the lag (frequency-smoothing) window `h` (odd).
    pub freq_window_samples: usize,
    pub cwd_sigma: f64,
}

impl CohenConfig {
    /// Time window of the given length, lag window 2.5 times longer.
    pub fn for_time_window(time_window_samples: usize) -> CohenConfig {
        let f = (2.5 * time_window_samples as f64).round() as usize;
        CohenConfig { time_window_samples, freq_window_samples: f | 1, cwd_sigma: 1.0 }
    }

    fn validate(&self, signal_len: usize) -> Result<()> {
        for (name, l) in [("time", self.time_window_samples), ("frequency", self.freq_window_samples)] {
            if l == 0 || l % 2 == 0 {
                return Err(Error::InvalidParameter(format!("{name} window length must be odd, got {l}")));
            }
            if l > signal_len {
                return Err(Error::WindowTruncation(format!(
                    "{name} window ({l} samples) is longer than the signal ({signal_len})"
                )));
            }
        }
        if !(self.cwd_sigma > 0.0 && self.cwd_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("cwd_sigma must be positive, got {}", self.cwd_sigma)));
        }
        Ok(())
    }
}

/// Symmetric Hann window of odd length `len` with nonzero end points.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 * (1.0 - (2.0 * PI * (i + 1) as f64 / (len + 1) as f64).cos())).collect()
}

/// Analytic signal of a real record (FFT-based Hilbert transform); complex
/// signals are returned unchanged.
pub fn analytic_signal(signal: &Signal) -> Signal {
    if !signal.is_real() {
        return signal.clone();
    }
    let n = signal.len();
    let mut planner = FftPlanner::new();
    let mut buf = signal.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *b *= gain / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Signal::new(buf, signal.sample_rate_hz(), signal.t0_s()).expect("same length and rate")
}

/// Lag-domain kernel for one frame: `R(m)` for `0 ≤ m ≤ max_lag`.
type LagFn<'a> = dyn Fn(&[Complex64], usize, usize) -> Vec<Complex64> + Sync + 'a;

/// Evaluates `Σ_m R(m) e^{−i2πνm·2/fs} Δτ` on the lattice bins for every frame.
fn lag_transform(
    z: &[Complex64],
    fs: f64,
    lattice: Lattice,
    max_lag: usize,
    kernel: &LagFn<'_>,
) -> Array2<f64> {
    let half_fft = lattice.n_fft / 2;
    let m_fft = (2 * max_lag + 1).next_power_of_two().max(half_fft);
    let stride = m_fft / half_fft;
    let n_bins = half_fft + 1;
    let fft = FftPlanner::new().plan_fft_forward(m_fft);
    let dtau = 2.0 / fs;
    let centers = lattice.frame_centers(z.len());
    let rows: Vec<Vec<f64>> = centers
        .par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); m_fft],
            |buf, &n| {
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                let r = kernel(z, n, max_lag);
                buf[0] = r[0];
                for (m, v) in r.iter().enumerate().skip(1) {
                    buf[m] = *v;
                    buf[m_fft - m] = v.conj();
                }
                fft.process(buf);
                (0..n_bins).map(|j| buf[(j * stride) % m_fft].re * dtau).collect()
            },
        )
        .collect();
    let mut out = Array2::zeros((centers.len(), n_bins));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).iter_mut().zip(row).for_each(|(o, v)| *o = v);
    }
    out
}

/// Bilinear outputs keep their (small) negative values; `power_view` clips.
fn grid(signal: &Signal, lattice: Lattice, values: Array2<f64>, half: usize) -> Result<TimeFrequencyGrid> {
    let values = GridValues::SignedReal(values);
    let centers = lattice.frame_centers(signal.len());
    TimeFrequencyGrid::new(lattice.times_s(signal), lattice.freqs_hz(signal.sample_rate_hz(), true), values)?
        .with_boundary(boundary_mask(&centers, half, signal.len()))
}

fn check_lattice(lattice: Lattice) -> Result<()> {
    if lattice.hop == 0 || lattice.n_fft < 2 || lattice.n_fft % 2 != 0 {
        return Err(Error::InvalidParameter(format!("unusable lattice {lattice:?}")));
    }
    Ok(())
}

/// Wigner–Ville distribution `W(t,ν) = Σ_τ z(t+τ/2) conj(z(t−τ/2)) e^{−i2πντ} Δτ`
/// using every lag available inside the record. Real valued, may be negative.
pub fn wigner_ville(signal: &Signal, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    check_lattice(lattice)?;
    let z = analytic_signal(signal);
    let len = z.len();
    let kernel = |z: &[Complex64], n: usize, _max: usize| -> Vec<Complex64> {
        let reach = n.min(len - 1 - n);
        (0..=reach).map(|m| z[n + m] * z[n - m].conj()).collect()
    };
    let values = lag_transform(z.samples(), z.sample_rate_hz(), lattice, len / 2, &kernel);
    grid(signal, lattice, values, 0)
}

/// Smoothed pseudo Wigner–Ville: Hann lag window `h` (peak 1) and Hann time
/// window `g` (normalized to unit sum over the in-record samples).
pub fn spwv(signal: &Signal, config: &CohenConfig, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    check_lattice(lattice)?;
    config.validate(signal.len())?;
    let z = analytic_signal(signal);
    let len = z.len();
    let h = hann(config.freq_window_samples);
    let g = hann(config.time_window_samples);
    let (lh, lg) = (h.len() / 2, g.len() / 2);
    let kernel = |z: &[Complex64], n: usize, max_lag: usize| -> Vec<Complex64> {
        let mut r = vec![Complex64::new(0.0, 0.0); max_lag + 1];
        for (m, out) in r.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for p in -(lg as isize)..=lg as isize {
                let c = n as isize - p;
                if c - (m as isize) < 0 || c + (m as isize) >= len as isize {
                    continue;
                }
                let c = c as usize;
                let w = g[(p + lg as isize) as usize];
                acc += z[c + m] * z[c - m].conj() * w;
                wsum += w;
            }
            if wsum > 0.0 {
                *out = acc / wsum * h[lh + m];
            }
        }
        r
    };
    let values = lag_transform(z.samples(), z.sample_rate_hz(), lattice, lh, &kernel);
    grid(signal, lattice, values, lg)
}

/// Choi–Williams distribution: exponential kernel
/// `exp(−σ p² / (16 m²))` in time offset `p` at half-lag `m`, limited to the
/// time window and weighted by the Hann lag window.
pub fn cwd(signal: &Signal, config: &CohenConfig, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    check_lattice(lattice)?;
    config.validate(signal.len())?;
    let z = analytic_signal(signal);
    let len = z.len();
    let h = hann(config.freq_window_samples);
    let g = hann(config.time_window_samples);
    let (lh, lg) = (h.len() / 2, g.len() / 2);
    let sigma = config.cwd_sigma;
    let kernel = |z: &[Complex64], n: usize, max_lag: usize| -> Vec<Complex64> {
        let mut r = vec![Complex64::new(0.0, 0.0); max_lag + 1];
        r[0] = z[n] * z[n].conj();
        for (m, out) in r.iter_mut().enumerate().skip(1) {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wsum = 0.0;
            for p in -(lg as isize)..=lg as isize {
                let c = n as isize - p;
                if c - (m as isize) < 0 || c + (m as isize) >= len as isize {
                    continue;
                }
                let c = c as usize;
                let pf = p as f64;
                let w = (-sigma * pf * pf / (16.0 * (m * m) as f64)).exp() * g[(p + lg as isize) as usize];
                acc += z[c + m] * z[c - m].conj() * w;
                wsum += w;
            }
            if wsum > 0.0 {
                *out = acc / wsum * h[lh + m];
            }
        }
        r
    };
    let values = lag_transform(z.samples(), z.sample_rate_hz(), lattice, lh, &kernel);
    grid(signal, lattice, values, lg)
}
