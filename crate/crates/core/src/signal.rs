//! Waveform and time-frequency grid types, noise injection and SNR bookkeeping.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// A uniformly sampled waveform. Real-valued signals are stored with zero
/// imaginary part and flagged so analysis can restrict to nonnegative
/// frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    t0_s: f64,
    real_valued: bool,
}

impl Signal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        Self::check(samples.len(), sample_rate_hz, t0_s)?;
        Ok(Signal { samples, sample_rate_hz, t0_s, real_valued: false })
    }

    pub fn from_real(samples: &[f64], sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        Self::check(samples.len(), sample_rate_hz, t0_s)?;
        Ok(Signal {
            samples: samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate_hz,
            t0_s,
            real_valued: true,
        })
    }

    fn check(len: usize, fs: f64, t0: f64) -> Result<()> {
        if len == 0 {
            return Err(Error::InvalidSignal("empty sample sequence".into()));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidSignal(format!("sample rate must be positive, got {fs}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidSignal("time origin must be finite".into()));
        }
        Ok(())
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn is_real(&self) -> bool {
        self.real_valued
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0_s + index as f64 / self.sample_rate_hz
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    /// Projects onto the real part and marks the result real-valued.
    pub fn to_real(&self) -> Signal {
        Signal {
            samples: self.samples.iter().map(|z| Complex64::new(z.re, 0.0)).collect(),
            sample_rate_hz: self.sample_rate_hz,
            t0_s: self.t0_s,
            real_valued: true,
        }
    }

    /// Mean power over the full record.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Same geometry, new samples. Real-valuedness is kept only if the new
    /// samples have zero imaginary part.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Signal> {
        if samples.len() != self.samples.len() {
            return Err(Error::GeometryMismatch(format!(
                "expected {} samples, got {}",
                self.samples.len(),
                samples.len()
            )));
        }
        let real_valued = self.real_valued && samples.iter().all(|z| z.im == 0.0);
        Ok(Signal { samples, sample_rate_hz: self.sample_rate_hz, t0_s: self.t0_s, real_valued })
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        same_geometry(self, other)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect();
        Ok(Signal {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            t0_s: self.t0_s,
            real_valued: self.real_valued && other.real_valued,
        })
    }

    pub fn scale(&self, k: f64) -> Signal {
        Signal { samples: self.samples.iter().map(|z| z * k).collect(), ..self.clone() }
    }
}

fn same_geometry(a: &Signal, b: &Signal) -> Result<()> {
    if a.len() != b.len() || a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::GeometryMismatch(format!(
            "{} samples at {} Hz vs {} samples at {} Hz",
            a.len(),
            a.sample_rate_hz,
            b.len(),
            b.sample_rate_hz
        )));
    }
    Ok(())
}

/// Record of one additive-noise draw.
///
/// `sigma` is the per-sample standard deviation actually added; it is zero
/// only for the noiseless sentinel (`snr_db = +inf`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRealization {
    pub seed: u64,
    pub sigma: f64,
    pub snr_db: Option<f64>,
}

fn gaussian_noise(len: usize, complex: bool, seed: u64) -> Vec<Complex64> {
    let mut rng = SeededRng::new(seed);
    if complex {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        (0..len).map(|_| Complex64::new(rng.normal() * s, rng.normal() * s)).collect()
    } else {
        (0..len).map(|_| Complex64::new(rng.normal(), 0.0)).collect()
    }
}

/// Adds white Gaussian noise scaled so the realized SNR over the whole record
/// equals `snr_db`. `f64::INFINITY` returns the signal unchanged.
pub fn add_noise(signal: &Signal, snr_db: f64, seed: u64) -> Result<(Signal, NoiseRealization)> {
    let p_sig = signal.mean_power();
    if p_sig <= 0.0 {
        return Err(Error::DegenerateSignal);
    }
    if snr_db == f64::INFINITY {
        return Ok((signal.clone(), NoiseRealization { seed, sigma: 0.0, snr_db: Some(snr_db) }));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("snr_db = {snr_db}")));
    }
    let raw = gaussian_noise(signal.len(), !signal.is_real(), seed);
    let p_raw = raw.iter().map(|z| z.norm_sqr()).sum::<f64>() / raw.len() as f64;
    let p_target = p_sig / 10f64.powf(snr_db / 10.0);
    let k = (p_target / p_raw).sqrt();
    let samples = signal.samples.iter().zip(&raw).map(|(s, n)| s + n * k).collect();
    let noisy = Signal { samples, ..signal.clone() };
    Ok((noisy, NoiseRealization { seed, sigma: p_target.sqrt(), snr_db: Some(snr_db) }))
}

/// Adds white Gaussian noise with a fixed per-sample standard deviation.
pub fn add_noise_sigma(signal: &Signal, sigma: f64, seed: u64) -> Result<(Signal, NoiseRealization)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma must be positive, got {sigma}")));
    }
    let raw = gaussian_noise(signal.len(), !signal.is_real(), seed);
    let samples = signal.samples.iter().zip(&raw).map(|(s, n)| s + n * sigma).collect();
    let noisy = Signal { samples, ..signal.clone() };
    let snr = {
        let p = signal.mean_power();
        (p > 0.0).then(|| 10.0 * (p / (sigma * sigma)).log10())
    };
    Ok((noisy, NoiseRealization { seed, sigma, snr_db: snr }))
}

/// `10 log10(P_clean / P_(noisy - clean))`; `+inf` when the two coincide.
pub fn measure_snr(clean: &Signal, noisy: &Signal) -> Result<f64> {
    same_geometry(clean, noisy)?;
    let p_clean = clean.mean_power();
    let p_noise = clean
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(c, n)| (n - c).norm_sqr())
        .sum::<f64>()
        / clean.len() as f64;
    if p_noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (p_clean / p_noise).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    ComplexCoefficients,
    /// Nonnegative real values.
    Power,
    /// Real values that may be negative (bilinear distributions).
    SignedReal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridValues {
    Complex(Array2<Complex64>),
    Power(Array2<f64>),
    SignedReal(Array2<f64>),
}

/// Values on a (time frame, frequency bin) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrequencyGrid {
    times_s: Vec<f64>,
    freqs_hz: Vec<f64>,
    values: GridValues,
    boundary: Vec<bool>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite())
}

impl TimeFrequencyGrid {
    pub fn new(times_s: Vec<f64>, freqs_hz: Vec<f64>, values: GridValues) -> Result<Self> {
        if !strictly_increasing(&times_s) {
            return Err(Error::InvalidGrid("time axis must be strictly increasing".into()));
        }
        if !strictly_increasing(&freqs_hz) || freqs_hz.first().is_some_and(|&f| f < 0.0) {
            return Err(Error::InvalidGrid(
                "frequency axis must be strictly increasing and nonnegative".into(),
            ));
        }
        let dim = match &values {
            GridValues::Complex(a) => a.dim(),
            GridValues::Power(a) | GridValues::SignedReal(a) => a.dim(),
        };
        if dim != (times_s.len(), freqs_hz.len()) {
            return Err(Error::InvalidGrid(format!(
                "values are {:?}, axes are ({}, {})",
                dim,
                times_s.len(),
                freqs_hz.len()
            )));
        }
        if let GridValues::Power(a) = &values {
            if a.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidGrid("power grid has a negative or NaN entry".into()));
            }
        }
        let boundary = vec![false; times_s.len()];
        Ok(TimeFrequencyGrid { times_s, freqs_hz, values, boundary })
    }

    pub fn with_boundary(mut self, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != self.times_s.len() {
            return Err(Error::InvalidGrid("boundary mask length differs from time axis".into()));
        }
        self.boundary = boundary;
        Ok(self)
    }

    pub fn times_s(&self) -> &[f64] {
        &self.times_s
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn values(&self) -> &GridValues {
        &self.values
    }

    pub fn into_values(self) -> GridValues {
        self.values
    }

    /// Frames whose analysis support extended past the record (zero padded).
    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn kind(&self) -> GridKind {
        match self.values {
            GridValues::Complex(_) => GridKind::ComplexCoefficients,
            GridValues::Power(_) => GridKind::Power,
            GridValues::SignedReal(_) => GridKind::SignedReal,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.times_s.len(), self.freqs_hz.len())
    }

    pub fn complex(&self) -> Option<&Array2<Complex64>> {
        match &self.values {
            GridValues::Complex(a) => Some(a),
            _ => None,
        }
    }

    /// Real-valued view: power or signed values as stored, `None` for complex.
    pub fn real(&self) -> Option<&Array2<f64>> {
        match &self.values {
            GridValues::Power(a) | GridValues::SignedReal(a) => Some(a),
            GridValues::Complex(_) => None,
        }
    }

    /// Nonnegative magnitude-squared surface for display and scoring:
    /// `|z|^2` for complex grids, values for power grids, negatives clipped
    /// for signed grids.
    pub fn power_view(&self) -> Array2<f64> {
        match &self.values {
            GridValues::Complex(a) => a.mapv(|z| z.norm_sqr()),
            GridValues::Power(a) => a.clone(),
            GridValues::SignedReal(a) => a.mapv(|v| v.max(0.0)),
        }
    }

    pub fn same_axes(&self, other: &TimeFrequencyGrid) -> bool {
        self.times_s == other.times_s && self.freqs_hz == other.freqs_hz
    }

    pub fn freq_step(&self) -> Option<f64> {
        (self.freqs_hz.len() > 1).then(|| self.freqs_hz[1] - self.freqs_hz[0])
    }
}

/// Elementwise squared modulus of a complex coefficient grid.
pub fn to_power(grid: &TimeFrequencyGrid) -> Result<TimeFrequencyGrid> {
    match &grid.values {
        GridValues::Complex(a) => Ok(TimeFrequencyGrid {
            times_s: grid.times_s.clone(),
            freqs_hz: grid.freqs_hz.clone(),
            values: GridValues::Power(a.mapv(|z| z.norm_sqr())),
            boundary: grid.boundary.clone(),
        }),
        _ => Err(Error::InvalidGrid("to_power requires a complex coefficient grid".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(n: usize) -> Signal {
        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * 440.0 * i as f64 / 8000.0).sin()).collect();
        Signal::from_real(&s, 8000.0, 0.0).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Signal::from_real(&[], 1.0, 0.0).is_err());
        assert!(Signal::from_real(&[1.0], 0.0, 0.0).is_err());
        assert!(Signal::from_real(&[1.0], -3.0, 0.0).is_err());
    }

    #[test]
    fn snr_is_exact_by_construction() {
        let s = tone(1000);
        for &snr in &[0.0, 5.0, -3.0, 20.0] {
            let (noisy, rec) = add_noise(&s, snr, 1).unwrap();
            assert!((measure_snr(&s, &noisy).unwrap() - snr).abs() < 1e-9);
            assert!(rec.sigma > 0.0);
            assert!(noisy.is_real());
        }
    }

    #[test]
    fn complex_signals_get_complex_noise() {
        let z: Vec<Complex64> = (0..512).map(|i| Complex64::from_polar(1.0, 0.1 * i as f64)).collect();
        let s = Signal::new(z, 1000.0, 0.0).unwrap();
        let (noisy, _) = add_noise(&s, 3.0, 9).unwrap();
        assert!(noisy.samples().iter().any(|v| v.im != s.samples()[0].im));
        assert!((measure_snr(&s, &noisy).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn clean_sentinel_is_identity() {
        let s = tone(64);
        let (out, _) = add_noise(&s, f64::INFINITY, 3).unwrap();
        assert_eq!(out, s);
        assert_eq!(measure_snr(&s, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_power_is_degenerate() {
        let s = Signal::from_real(&[0.0; 16], 8000.0, 0.0).unwrap();
        assert!(matches!(add_noise(&s, 0.0, 1), Err(Error::DegenerateSignal)));
    }

    #[test]
    fn doubled_signal_has_zero_db() {
        let s = tone(256);
        let ss = s.add(&s).unwrap();
        assert!(measure_snr(&s, &ss).unwrap().abs() < 1e-12);
        let other = Signal::from_real(&[0.0; 10], 8000.0, 0.0).unwrap();
        assert!(measure_snr(&s, &other).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let s = tone(300);
        assert_eq!(add_noise(&s, 2.0, 77).unwrap().0, add_noise(&s, 2.0, 77).unwrap().0);
        assert_ne!(add_noise(&s, 2.0, 77).unwrap().0, add_noise(&s, 2.0, 78).unwrap().0);
    }

    #[test]
    fn sigma_noise_has_requested_scale() {
        let s = Signal::from_real(&vec![0.0; 20000], 32000.0, 0.0).unwrap();
        let (n, rec) = add_noise_sigma(&s, 4.7e-5, 5).unwrap();
        let sd = (n.mean_power()).sqrt();
        assert!((sd / 4.7e-5 - 1.0).abs() < 0.03, "{sd}");
        assert_eq!(rec.snr_db, None);
    }

    #[test]
    fn to_power_squares_modulus() {
        let v = Array2::from_elem((1, 1), Complex64::new(3.0, 4.0));
        let g = TimeFrequencyGrid::new(vec![0.0], vec![0.0], GridValues::Complex(v)).unwrap();
        let p = to_power(&g).unwrap();
        assert_eq!(p.kind(), GridKind::Power);
        assert_eq!(p.real().unwrap()[[0, 0]], 25.0);
        assert!(to_power(&p).is_err());
        let z = TimeFrequencyGrid::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0, 2.0],
            GridValues::Complex(Array2::zeros((2, 3))),
        )
        .unwrap();
        assert!(to_power(&z).unwrap().real().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_validates_axes_and_sign() {
        let bad = TimeFrequencyGrid::new(vec![0.0, 0.0], vec![0.0], GridValues::Power(Array2::zeros((2, 1))));
        assert!(bad.is_err());
        let neg = TimeFrequencyGrid::new(vec![0.0], vec![0.0], GridValues::Power(Array2::from_elem((1, 1), -1.0)));
        assert!(neg.is_err());
        let shape = TimeFrequencyGrid::new(vec![0.0], vec![0.0, 1.0], GridValues::Power(Array2::zeros((1, 1))));
        assert!(shape.is_err());
    }
}
