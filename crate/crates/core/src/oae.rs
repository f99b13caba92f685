//! Coherent-reflection synthesis of click-evoked otoacoustic emissions.
//!
//! The cochlear place map is `x_p(ω) = l·ln(ω₀/ω)`; lengths are in meters.
//! The reflectance of an irregularity profile `ε(x)` is
//! `R(ω) = Σ_x ε(x)·ρ(x − x_p(ω))·dx` with the excitation pattern
//! `ρ(u) = exp(−u²/2Δx²)·exp(−i4πu/Λ)`, and the emission waveform is the
//! inverse FFT of `R` sampled on the FFT bins of the analysis band.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::signal::Signal;

/// Reach of the excitation pattern, in units of `Δx`, beyond which it is
/// treated as zero (`exp(−72)` relative).
const GAUSS_REACH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CochlearMap {
    pub l_m: f64,
    pub lambda_m: f64,
    pub delta_x_m: f64,
    pub omega0_rad_s: f64,
}

impl CochlearMap {
    pub fn new(l_m: f64, lambda_m: f64, delta_x_m: f64, omega0_rad_s: f64) -> Result<Self> {
        for (name, v) in [("l", l_m), ("Λ", lambda_m), ("Δx", delta_x_m), ("ω₀", omega0_rad_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(CochlearMap { l_m, lambda_m, delta_x_m, omega0_rad_s })
    }

    /// `l = 0.72 cm`, `Λ = l/5.5`, `Δx = Λ/2`, base of the map at 16 kHz.
    pub fn standard() -> Self {
        let l = 0.72e-2;
        let lambda = l / 5.5;
        CochlearMap { l_m: l, lambda_m: lambda, delta_x_m: lambda / 2.0, omega0_rad_s: 2.0 * PI * 16_000.0 }
    }

    /// Same `l` and `ω₀`, wavelength set by `l/Λ`; `Δx/Λ` is preserved.
    pub fn with_l_over_lambda(self, ratio: f64) -> Result<Self> {
        let lambda = self.l_m / ratio;
        CochlearMap::new(self.l_m, lambda, self.delta_x_m / self.lambda_m * lambda, self.omega0_rad_s)
    }

    pub fn with_delta_x_over_lambda(self, ratio: f64) -> Result<Self> {
        CochlearMap::new(self.l_m, self.lambda_m, ratio * self.lambda_m, self.omega0_rad_s)
    }

    pub fn l_over_lambda(&self) -> f64 {
        self.l_m / self.lambda_m
    }

    /// Characteristic place of angular frequency `ω`.
    pub fn place_m(&self, omega: f64) -> f64 {
        self.l_m * (self.omega0_rad_s / omega).ln()
    }

    /// Peak wavenumber `4π/Λ` of the excitation pattern's spectrum.
    pub fn peak_wavenumber(&self) -> f64 {
        4.0 * PI / self.lambda_m
    }

    fn excitation(&self, u: f64) -> Complex64 {
        Complex64::from_polar((-u * u / (2.0 * self.delta_x_m * self.delta_x_m)).exp(), -self.peak_wavenumber() * u)
    }
}

/// Mechanical irregularity `ε(x)` sampled on `x = 0, dx, …, x_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrregularityProfile {
    pub dx_m: f64,
    pub eps: Vec<f64>,
    pub sigma_eps: f64,
    /// Correlation length; 0 for a white profile.
    pub corr_len_m: f64,
    pub seed: u64,
}

impl IrregularityProfile {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn x_m(&self, i: usize) -> f64 {
        i as f64 * self.dx_m
    }

    pub fn x_max_m(&self) -> f64 {
        self.x_m(self.len().saturating_sub(1))
    }

    /// Zero profile on the same grid.
    pub fn zeros_like(&self) -> Self {
        IrregularityProfile { eps: vec![0.0; self.len()], sigma_eps: 0.0, ..self.clone() }
    }

    pub fn add(&self, other: &IrregularityProfile) -> Result<Self> {
        if self.len() != other.len() || self.dx_m != other.dx_m {
            return Err(Error::GeometryMismatch("irregularity profiles on different grids".into()));
        }
        let eps = self.eps.iter().zip(&other.eps).map(|(a, b)| a + b).collect();
        Ok(IrregularityProfile { eps, ..self.clone() })
    }
}

pub const DEFAULT_DX_M: f64 = 5e-6;
pub const DEFAULT_X_MAX_M: f64 = 35e-3;

fn grid_len(dx_m: f64, x_max_m: f64) -> Result<usize> {
    if !(dx_m > 0.0) || !(x_max_m > 0.0) {
        return Err(Error::InvalidParameter(format!("need dx > 0 and x_max > 0, got {dx_m}, {x_max_m}")));
    }
    Ok((x_max_m / dx_m).round() as usize + 1)
}

/// I.i.d. Gaussian irregularity with standard deviation `sigma_eps`.
pub fn white_irregularity(sigma_eps: f64, dx_m: f64, x_max_m: f64, seed: u64) -> Result<IrregularityProfile> {
    let n = grid_len(dx_m, x_max_m)?;
    if sigma_eps < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma_eps must be nonnegative, got {sigma_eps}")));
    }
    let mut rng = SeededRng::new(seed);
    let eps = (0..n).map(|_| sigma_eps * rng.normal()).collect();
    Ok(IrregularityProfile { dx_m, eps, sigma_eps, corr_len_m: 0.0, seed })
}

/// Moving-average smoothed irregularity: white noise filtered by the
/// half-cosine `cos(πu/D)` on `|u| ≤ D/2` with unit energy, so the
/// correlation is confined to lags below `D` and the variance stays `σ_ε²`.
pub fn correlated_irregularity(sigma_eps: f64, d_m: f64, dx_m: f64, x_max_m: f64, seed: u64) -> Result<IrregularityProfile> {
    let n = grid_len(dx_m, x_max_m)?;
    if d_m < dx_m * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!("correlation length {d_m} m is below the grid step {dx_m} m")));
    }
    if sigma_eps < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma_eps must be nonnegative, got {sigma_eps}")));
    }
    let half = ((d_m / 2.0) / dx_m).floor() as usize;
    let mut kernel: Vec<f64> = (0..=2 * half)
        .map(|i| (PI * (i as f64 - half as f64) * dx_m / d_m).cos().max(0.0))
        .collect();
    let energy: f64 = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    kernel.iter_mut().for_each(|k| *k /= energy);
    let mut rng = SeededRng::new(seed);
    let white = rng.normals(n + 2 * half);
    let eps = (0..n)
        .map(|i| sigma_eps * kernel.iter().zip(&white[i..i + kernel.len()]).map(|(k, w)| k * w).sum::<f64>())
        .collect();
    Ok(IrregularityProfile { dx_m, eps, sigma_eps, corr_len_m: d_m, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceSpectrum {
    pub omegas_rad_s: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ReflectanceSpectrum {
    /// Linear interpolation in `ω`; errors outside the grid.
    pub fn at(&self, omega: f64) -> Result<Complex64> {
        let w = &self.omegas_rad_s;
        let n = w.len();
        if n == 0 || omega < w[0] || omega > w[n - 1] {
            return Err(Error::OutsideLattice(format!("ω = {omega} rad/s outside the reflectance grid")));
        }
        let j = w.partition_point(|&x| x < omega);
        if j < n && w[j] == omega {
            return Ok(self.values[j]);
        }
        let a = (omega - w[j - 1]) / (w[j] - w[j - 1]);
        Ok(self.values[j - 1] * (1.0 - a) + self.values[j] * a)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn check_places(profile: &IrregularityProfile, map: &CochlearMap, omegas: &[f64]) -> Result<()> {
    let x_max = profile.x_max_m();
    for &w in omegas {
        let x = map.place_m(w);
        if !(w > 0.0) || !(-1e-12..=x_max + 1e-12).contains(&x) {
            return Err(Error::OutsideTonotopicRange(format!(
                "{:.1} Hz maps to x = {:.3} mm, outside [0, {:.3}] mm",
                w / (2.0 * PI),
                x * 1e3,
                x_max * 1e3
            )));
        }
    }
    Ok(())
}

/// Direct evaluation of the reflectance sum. The excitation pattern is
/// advanced along `x` by its exact two-term phasor recurrence.
pub fn reflectance(profile: &IrregularityProfile, map: &CochlearMap, omegas: &[f64]) -> Result<ReflectanceSpectrum> {
    check_places(profile, map, omegas)?;
    let dx = profile.dx_m;
    let n = profile.len();
    let s2 = map.delta_x_m * map.delta_x_m;
    let reach = (GAUSS_REACH * map.delta_x_m / dx).ceil() as usize;
    let decay = (-dx * dx / s2).exp();
    let kdx = map.peak_wavenumber() * dx;
    let eps = &profile.eps;
    let values = omegas
        .par_iter()
        .map(|&w| {
            let xp = map.place_m(w);
            let j0 = ((xp / dx).round() as usize).min(n - 1);
            let u0 = j0 as f64 * dx - xp;
            let mut acc = map.excitation(u0) * eps[j0];
            // forward: ρ(u+dx)/ρ(u) = exp(−(2u·dx + dx²)/2Δx² − iκdx)
            let mut rho = map.excitation(u0);
            let mut q = Complex64::from_polar((-(2.0 * u0 * dx + dx * dx) / (2.0 * s2)).exp(), -kdx);
            for &e in eps.iter().take((j0 + reach).min(n - 1) + 1).skip(j0 + 1) {
                rho *= q;
                q *= decay;
                acc += rho * e;
            }
            let mut rho = map.excitation(u0);
            let mut q = Complex64::from_polar(((2.0 * u0 * dx - dx * dx) / (2.0 * s2)).exp(), kdx);
            for j in (j0.saturating_sub(reach)..j0).rev() {
                rho *= q;
                q *= decay;
                acc += rho * eps[j];
            }
            acc * dx
        })
        .collect();
    Ok(ReflectanceSpectrum { omegas_rad_s: omegas.to_vec(), values })
}

/// Excitation-pattern spectrum on a periodic wavenumber grid.
#[derive(Debug, Clone)]
pub struct ExcitationSpectrum {
    /// Wavenumbers (rad/m), FFT order with negative values in the upper half.
    pub k: Vec<f64>,
    /// `ρ̃(−k)`, which equals the conjugate spectrum for real patterns and
    /// peaks at `k = +4π/Λ` here.
    pub values: Vec<Complex64>,
    pub period_m: f64,
}

/// `ρ̃(−k) = Σ_u ρ(u) e^{iku} du` over `u` sampled at `dx` on a period of
/// `n` samples (negative offsets wrapped into the upper half).
pub fn excitation_spectrum(map: &CochlearMap, dx_m: f64, n: usize) -> ExcitationSpectrum {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            map.excitation(m * dx_m) * dx_m
        })
        .collect();
    // inverse (unnormalized) FFT gives Σ ρ(u) e^{+iku}
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let period = n as f64 * dx_m;
    let k = (0..n)
        .map(|m| {
            let s = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * s / period
        })
        .collect();
    ExcitationSpectrum { k, values: buf, period_m: period }
}

/// Reflectance through the wavenumber domain,
/// `R(ω) = (1/P) Σ_k ρ̃(−k)·ε̃(k)·e^{ik·x_p(ω)}`, on a zero-padded period `P`
/// long enough that the excitation pattern never wraps onto the profile.
pub fn reflectance_wavenumber(profile: &IrregularityProfile, map: &CochlearMap, omegas: &[f64]) -> Result<ReflectanceSpectrum> {
    check_places(profile, map, omegas)?;
    let dx = profile.dx_m;
    let min_len = profile.len() + 2 * (GAUSS_REACH * map.delta_x_m / dx).ceil() as usize;
    let n = min_len.next_power_of_two();
    let rho = excitation_spectrum(map, dx, n);
    let mut eps: Vec<Complex64> = profile.eps.iter().map(|&e| Complex64::new(e * dx, 0.0)).chain(std::iter::repeat(Complex64::new(0.0, 0.0))).take(n).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut eps);
    let floor = 1e-18 * rho.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let terms: Vec<(f64, Complex64)> = (0..n)
        .filter(|&m| rho.values[m].norm() > floor)
        .map(|m| (rho.k[m], rho.values[m] * eps[m]))
        .collect();
    let period = rho.period_m;
    let values = omegas
        .par_iter()
        .map(|&w| {
            let xp = map.place_m(w);
            terms.iter().map(|&(k, c)| c * Complex64::from_polar(1.0, k * xp)).sum::<Complex64>() / period
        })
        .collect();
    Ok(ReflectanceSpectrum { omegas_rad_s: omegas.to_vec(), values })
}

/// FFT bin indices whose frequencies lie in `[lo, hi]` Hz.
pub fn band_bins(n_fft: usize, fs_hz: f64, band_hz: (f64, f64)) -> Vec<usize> {
    (0..=n_fft / 2)
        .filter(|&k| {
            let f = k as f64 * fs_hz / n_fft as f64;
            f >= band_hz.0 - 1e-9 && f <= band_hz.1 + 1e-9
        })
        .collect()
}

/// Angular frequencies of [`band_bins`].
pub fn band_omegas(n_fft: usize, fs_hz: f64, band_hz: (f64, f64)) -> Vec<f64> {
    band_bins(n_fft, fs_hz, band_hz).into_iter().map(|k| 2.0 * PI * k as f64 * fs_hz / n_fft as f64).collect()
}

pub const DEFAULT_N_FFT: usize = 4096;
pub const DEFAULT_FS_HZ: f64 = 32_000.0;
pub const DEFAULT_BAND_HZ: (f64, f64) = (200.0, 16_000.0);

/// `r = IFFT(R)` (normalized by `1/n_fft`) with `R` placed on its FFT bins and
/// every other bin zero. The result is complex; analyses use its real part.
pub fn impulse_response(spectrum: &ReflectanceSpectrum, n_fft: usize, fs_hz: f64) -> Result<Signal> {
    let df = 2.0 * PI * fs_hz / n_fft as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (&w, &v) in spectrum.omegas_rad_s.iter().zip(&spectrum.values) {
        let k = (w / df).round();
        if (w / df - k).abs() > 1e-6 || k < 0.0 || k as usize >= n_fft {
            return Err(Error::GeometryMismatch(format!("ω = {w} rad/s is not an FFT bin of n_fft = {n_fft} at {fs_hz} Hz")));
        }
        buf[k as usize] = v;
    }
    FftPlanner::new().plan_fft_inverse(n_fft).process(&mut buf);
    buf.iter_mut().for_each(|z| *z /= n_fft as f64);
    Signal::new(buf, fs_hz, 0.0)
}

/// Reflectance on the default band bins and the emission waveform.
pub fn synthesize_teoae(profile: &IrregularityProfile, map: &CochlearMap) -> Result<(ReflectanceSpectrum, Signal)> {
    let omegas = band_omegas(DEFAULT_N_FFT, DEFAULT_FS_HZ, DEFAULT_BAND_HZ);
    let spec = reflectance(profile, map, &omegas)?;
    let r = impulse_response(&spec, DEFAULT_N_FFT, DEFAULT_FS_HZ)?;
    Ok((spec, r))
}

/// Expected instantaneous frequency `ν̄(t) = (2/t)·(l/Λ)` of the emission.
pub fn expected_if(t_s: f64, map: &CochlearMap) -> Result<f64> {
    if !(t_s > 0.0) {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t_s}")));
    }
    Ok(2.0 * map.l_over_lambda() / t_s)
}

/// Mean group delay `(4π/Λ)·(l/ω)`.
pub fn expected_group_delay(omega_rad_s: f64, map: &CochlearMap) -> Result<f64> {
    if !(omega_rad_s > 0.0) {
        return Err(Error::InvalidParameter(format!("ω must be positive, got {omega_rad_s}")));
    }
    Ok(map.peak_wavenumber() * map.l_m / omega_rad_s)
}

/// Phase-gradient group delay `−∂Φ/∂ω` at the grid point nearest `omega`,
/// by a centered difference of the unwrapped phase. `None` when the point or
/// its neighbours fall below `1e-3·max|R|`.
pub fn phase_gradient_delay(spectrum: &ReflectanceSpectrum, omega: f64) -> Option<f64> {
    let w = &spectrum.omegas_rad_s;
    let j = w.partition_point(|&x| x < omega);
    let j = if j > 0 && (j == w.len() || (omega - w[j - 1]) < (w[j] - omega)) { j - 1 } else { j };
    if j == 0 || j + 1 >= w.len() {
        return None;
    }
    let floor = 1e-3 * spectrum.max_abs();
    let v = &spectrum.values;
    if v[j - 1].norm() < floor || v[j].norm() < floor || v[j + 1].norm() < floor {
        return None;
    }
    // unwrapped phase increments between neighbours
    let d1 = (v[j] * v[j - 1].conj()).arg();
    let d2 = (v[j + 1] * v[j].conj()).arg();
    Some(-(d1 + d2) / (w[j + 1] - w[j - 1]))
}

/// Tone-burst approximation `b̂(t) = C″·R(ω_b)·g(t − (4π/Λ)(l/ω_b))` with
/// `C″ = exp(i4πl/Λ)`; the delay is applied as a linear phase in frequency.
pub fn tboae_approx(stimulus: &Signal, omega_b: f64, spectrum: &ReflectanceSpectrum, map: &CochlearMap) -> Result<Signal> {
    let r = spectrum.at(omega_b)?;
    let delay = expected_group_delay(omega_b, map)?;
    let shifted = fractional_delay(stimulus, delay);
    let gain = c_double_prime(map) * r;
    stimulus.with_samples(shifted.into_iter().map(|z| z * gain).collect())
}

/// `C″ = exp(i4πl/Λ)`.
pub fn c_double_prime(map: &CochlearMap) -> Complex64 {
    Complex64::from_polar(1.0, map.peak_wavenumber() * map.l_m)
}

/// Circular band-limited delay by `tau` seconds.
fn fractional_delay(signal: &Signal, tau: f64) -> Vec<Complex64> {
    let n = signal.len();
    let fs = signal.sample_rate_hz();
    let mut planner = FftPlanner::new();
    let mut buf = signal.samples().to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let s = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *b *= Complex64::from_polar(1.0 / n as f64, -2.0 * PI * s * fs / n as f64 * tau);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

#[derive(Debug, Clone)]
pub struct ToneBurstReport {
    pub b: Signal,
    pub b_hat: Signal,
    pub rel_err_l2: f64,
    pub map: CochlearMap,
}

pub const TONE_BURST_FREQS_HZ: [f64; 2] = [4000.0, 2000.0];
pub const TONE_BURST_LENGTH_S: f64 = 4e-3;

/// Hann window on `[0, T]` sampled over a record of `n` samples.
fn burst_window(n: usize, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            if t <= TONE_BURST_LENGTH_S {
                (PI * t / TONE_BURST_LENGTH_S).sin().powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// Two-tone-burst experiment: exact `b = g * r` (via `R·G`) against the sum
/// of per-tone approximations, with `Δx` set to `ratio·Λ`.
pub fn two_tone_burst_experiment(map: &CochlearMap, profile: &IrregularityProfile, delta_x_over_lambda: f64) -> Result<ToneBurstReport> {
    let map = map.with_delta_x_over_lambda(delta_x_over_lambda)?;
    let (n, fs) = (DEFAULT_N_FFT, DEFAULT_FS_HZ);
    let (spectrum, _) = synthesize_teoae(profile, &map)?;
    let h = burst_window(n, fs);
    let tone = |f: f64| -> Vec<Complex64> {
        h.iter().enumerate().map(|(i, &w)| Complex64::from_polar(w, 2.0 * PI * f * i as f64 / fs)).collect()
    };
    let parts: Vec<Signal> = TONE_BURST_FREQS_HZ.iter().map(|&f| Signal::new(tone(f), fs, 0.0)).collect::<Result<_>>()?;
    let g: Vec<Complex64> = (0..n).map(|i| parts.iter().map(|p| p.samples()[i]).sum()).collect();

    let mut planner = FftPlanner::new();
    let mut gf = g;
    planner.plan_fft_forward(n).process(&mut gf);
    let mut rf = vec![Complex64::new(0.0, 0.0); n];
    let df = 2.0 * PI * fs / n as f64;
    for (&w, &v) in spectrum.omegas_rad_s.iter().zip(&spectrum.values) {
        rf[(w / df).round() as usize] = v;
    }
    let mut b: Vec<Complex64> = gf.iter().zip(&rf).map(|(a, r)| a * r / n as f64).collect();
    planner.plan_fft_inverse(n).process(&mut b);

    let mut b_hat = vec![Complex64::new(0.0, 0.0); n];
    for (p, &f) in parts.iter().zip(TONE_BURST_FREQS_HZ.iter()) {
        let part = tboae_approx(p, 2.0 * PI * f, &spectrum, &map)?;
        b_hat.iter_mut().zip(part.samples()).for_each(|(o, v)| *o += v);
    }
    let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff: f64 = b.iter().zip(&b_hat).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let rel_err_l2 = if norm == 0.0 { if diff == 0.0 { 0.0 } else { f64::INFINITY } } else { diff / norm };
    Ok(ToneBurstReport { b: Signal::new(b, fs, 0.0)?, b_hat: Signal::new(b_hat, fs, 0.0)?, rel_err_l2, map })
}
