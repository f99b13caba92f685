//! Short-time Fourier transform with companion windows, and a Morlet
//! scalogram used as a comparison baseline.
//!
//! The STFT is modulated at the frame time,
//! `V(t,ν) = Σ_τ f(τ) h(τ−t) e^{−i2πν(τ−t)} Δτ`, so the phase of a pure tone
//! advances as `e^{i2πf₀t}` independently of `ν`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{GridValues, Signal, TimeFrequencyGrid};
use crate::windows::WindowFamily;

/// Frame hop and FFT size shared by every grid computed for one analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub hop: usize,
    pub n_fft: usize,
}

impl Lattice {
    /// Hop 1 and the next power of two at least four times the window length.
    pub fn for_window(window_len: usize) -> Lattice {
        Lattice { hop: 1, n_fft: (4 * window_len).next_power_of_two() }
    }

    pub fn with_hop(self, hop: usize) -> Lattice {
        Lattice { hop, ..self }
    }

    pub fn frame_centers(&self, len: usize) -> Vec<usize> {
        (0..len).step_by(self.hop.max(1)).collect()
    }

    /// Bins `0..=n_fft/2` for real signals, all `n_fft` bins otherwise.
    pub fn n_bins(&self, real: bool) -> usize {
        if real {
            self.n_fft / 2 + 1
        } else {
            self.n_fft
        }
    }

    pub fn freqs_hz(&self, fs: f64, real: bool) -> Vec<f64> {
        (0..self.n_bins(real)).map(|k| k as f64 * fs / self.n_fft as f64).collect()
    }

    pub fn bin_width(&self, fs: f64) -> f64 {
        fs / self.n_fft as f64
    }

    pub fn times_s(&self, signal: &Signal) -> Vec<f64> {
        self.frame_centers(signal.len()).into_iter().map(|n| signal.time_of(n)).collect()
    }

    fn validate(&self, signal: &Signal, window_len: usize) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::InvalidParameter("hop must be at least 1".into()));
        }
        if self.n_fft < window_len {
            return Err(Error::InvalidParameter(format!(
                "n_fft = {} is shorter than the window ({window_len})",
                self.n_fft
            )));
        }
        if window_len > signal.len() {
            return Err(Error::InvalidParameter(format!(
                "window ({window_len} samples) is longer than the signal ({})",
                signal.len()
            )));
        }
        Ok(())
    }
}

/// Frames whose window support runs past either end of the record.
pub fn boundary_mask(centers: &[usize], half: usize, len: usize) -> Vec<bool> {
    centers.iter().map(|&n| n < half || n + half >= len).collect()
}

/// STFTs of one signal with several windows on a common lattice. Returns one
/// `(frames, bins)` array per window.
pub(crate) fn stft_raw(signal: &Signal, windows: &[&[Complex64]], lattice: Lattice) -> Vec<Array2<Complex64>> {
    let len = windows[0].len();
    let half = (len - 1) / 2;
    let fs = signal.sample_rate_hz();
    let dt = 1.0 / fs;
    let n_fft = lattice.n_fft;
    let n_bins = lattice.n_bins(signal.is_real());
    let centers = lattice.frame_centers(signal.len());
    let x = signal.samples();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);

    let rows: Vec<Vec<Vec<Complex64>>> = centers
        .par_iter()
        .map_init(
            || (vec![Complex64::new(0.0, 0.0); n_fft], vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()]),
            |(buf, scratch), &n| {
                windows
                    .iter()
                    .map(|w| {
                        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                        for (k, wk) in w.iter().enumerate() {
                            let idx = n as isize + k as isize - half as isize;
                            if idx < 0 || idx as usize >= x.len() {
                                continue;
                            }
                            let u = k as isize - half as isize;
                            let slot = u.rem_euclid(n_fft as isize) as usize;
                            buf[slot] = x[idx as usize] * wk * dt;
                        }
                        fft.process_with_scratch(buf, scratch);
                        buf[..n_bins].to_vec()
                    })
                    .collect()
            },
        )
        .collect();

    (0..windows.len())
        .map(|w| {
            let mut out = Array2::zeros((centers.len(), n_bins));
            for (i, row) in rows.iter().enumerate() {
                out.row_mut(i).iter_mut().zip(&row[w]).for_each(|(o, v)| *o = *v);
            }
            out
        })
        .collect()
}

fn wrap_grid(signal: &Signal, lattice: Lattice, half: usize, values: Array2<Complex64>) -> Result<TimeFrequencyGrid> {
    let centers = lattice.frame_centers(signal.len());
    let boundary = boundary_mask(&centers, half, signal.len());
    TimeFrequencyGrid::new(
        lattice.times_s(signal),
        lattice.freqs_hz(signal.sample_rate_hz(), signal.is_real()),
        GridValues::Complex(values),
    )?
    .with_boundary(boundary)
}

/// STFT with the first window of `window`.
pub fn stft(signal: &Signal, window: &WindowFamily, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    lattice.validate(signal, window.len())?;
    let mut v = stft_raw(signal, &[&window.windows()[0]], lattice);
    wrap_grid(signal, lattice, window.half_len(), v.remove(0))
}

/// The five STFTs consumed by the reassignment rules, on one lattice.
#[derive(Debug, Clone)]
pub struct StftFamily {
    pub v_h: TimeFrequencyGrid,
    pub v_dh: TimeFrequencyGrid,
    pub v_ddh: TimeFrequencyGrid,
    pub v_th: TimeFrequencyGrid,
    pub v_tdh: TimeFrequencyGrid,
    pub lattice: Lattice,
    pub window_len: usize,
    pub window_sigma_s: f64,
}

impl StftFamily {
    pub fn times_s(&self) -> &[f64] {
        self.v_h.times_s()
    }

    pub fn freqs_hz(&self) -> &[f64] {
        self.v_h.freqs_hz()
    }

    pub fn boundary(&self) -> &[bool] {
        self.v_h.boundary()
    }

    pub fn bin_width(&self) -> f64 {
        self.v_h.freq_step().unwrap_or(0.0)
    }

    pub(crate) fn arrays(&self) -> [&Array2<Complex64>; 5] {
        fn get(g: &TimeFrequencyGrid) -> &Array2<Complex64> {
            g.complex().expect("stft family grids are complex")
        }
        [get(&self.v_h), get(&self.v_dh), get(&self.v_ddh), get(&self.v_th), get(&self.v_tdh)]
    }
}

/// STFTs of `signal` with the first window of `window` and its four companions.
pub fn stft_family(signal: &Signal, window: &WindowFamily, lattice: Lattice) -> Result<StftFamily> {
    lattice.validate(signal, window.len())?;
    let set = window.set(0);
    let mut v = stft_raw(signal, &[set.h, set.dh, set.ddh, set.th, set.tdh], lattice).into_iter();
    let half = window.half_len();
    let mut next = || wrap_grid(signal, lattice, half, v.next().expect("five grids"));
    Ok(StftFamily {
        v_h: next()?,
        v_dh: next()?,
        v_ddh: next()?,
        v_th: next()?,
        v_tdh: next()?,
        lattice,
        window_len: window.len(),
        window_sigma_s: window.sigma_s(),
    })
}

/// Analytic Morlet wavelet with nondimensional center frequency `omega0`.
///
/// This is a stand-in for the OAE-specific mother wavelets used in the
/// literature; outputs produced with it are labeled `morlet`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorletWavelet {
    pub omega0: f64,
}

impl Default for MorletWavelet {
    fn default() -> Self {
        MorletWavelet { omega0: 6.0 }
    }
}

impl MorletWavelet {
    /// Gaussian frequency response at scale `s` (seconds), amplitude
    /// preserving: a unit tone at the center frequency gives `|W| = 1`.
    fn response(&self, xi_hz: f64, scale_s: f64) -> f64 {
        if xi_hz <= 0.0 {
            return 0.0;
        }
        let arg = 2.0 * PI * xi_hz * scale_s - self.omega0;
        (-0.5 * arg * arg).exp()
    }

    pub fn scale_for(&self, freq_hz: f64) -> f64 {
        self.omega0 / (2.0 * PI * freq_hz)
    }

    /// Standard deviation of the frequency response in Hz at `freq_hz`.
    pub fn bandwidth_hz(&self, freq_hz: f64) -> f64 {
        freq_hz / self.omega0
    }
}

/// Log-spaced frequency axis with `n_voices` per octave.
pub fn log_frequencies(n_voices: usize, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let octaves = (hi_hz / lo_hz).log2();
    let n = (octaves * n_voices as f64).floor() as usize + 1;
    (0..n).map(|i| lo_hz * 2f64.powf(i as f64 / n_voices as f64)).collect()
}

/// Scalogram `|W(t,f)|²` on a log-spaced axis (hop 1).
pub fn scalogram(signal: &Signal, n_voices: usize, freq_range_hz: (f64, f64)) -> Result<TimeFrequencyGrid> {
    let (lo, hi) = freq_range_hz;
    let nyq = signal.sample_rate_hz() / 2.0;
    if !(lo > 0.0 && hi > lo && hi <= nyq) || n_voices == 0 {
        return Err(Error::InvalidParameter(format!(
            "scalogram range ({lo}, {hi}) Hz must be nonempty and within (0, {nyq}]"
        )));
    }
    let freqs = log_frequencies(n_voices, lo, hi);
    scalogram_on(signal, &freqs, 1, MorletWavelet::default())
}

/// Scalogram evaluated at arbitrary increasing frequencies and frame hop.
/// A frequency of 0 yields a zero row.
pub fn scalogram_on(signal: &Signal, freqs_hz: &[f64], hop: usize, wavelet: MorletWavelet) -> Result<TimeFrequencyGrid> {
    if freqs_hz.is_empty() || hop == 0 {
        return Err(Error::InvalidParameter("empty frequency axis or zero hop".into()));
    }
    let fs = signal.sample_rate_hz();
    let n = signal.len();
    let n_pad = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_pad);
    let inv = planner.plan_fft_inverse(n_pad);
    let mut spec = vec![Complex64::new(0.0, 0.0); n_pad];
    spec[..n].copy_from_slice(signal.samples());
    fwd.process(&mut spec);
    // Real inputs: keep positive frequencies only, doubled.
    let gain = if signal.is_real() { 2.0 } else { 1.0 };
    let centers: Vec<usize> = (0..n).step_by(hop).collect();

    let cols: Vec<Vec<f64>> = freqs_hz
        .par_iter()
        .map(|&f| {
            if f <= 0.0 {
                return vec![0.0; centers.len()];
            }
            let s = wavelet.scale_for(f);
            let mut buf: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let xi = if k <= n_pad / 2 { k as f64 } else { k as f64 - n_pad as f64 } * fs / n_pad as f64;
                    x * (gain * wavelet.response(xi, s) / n_pad as f64)
                })
                .collect();
            inv.process(&mut buf);
            centers.iter().map(|&c| buf[c].norm_sqr()).collect()
        })
        .collect();

    let mut values = Array2::zeros((centers.len(), freqs_hz.len()));
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[[i, j]] = *v;
        }
    }
    let times = centers.iter().map(|&c| signal.time_of(c)).collect();
    TimeFrequencyGrid::new(times, freqs_hz.to_vec(), GridValues::Power(values))
}
