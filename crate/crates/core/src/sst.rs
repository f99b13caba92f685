//! Frequency reassignment, synchrosqueezing, multi-taper averaging and ConceFT.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linear::{stft_family, stft_raw, Lattice, StftFamily};
use crate::rng::derive_seed;
use crate::signal::{GridValues, Signal, TimeFrequencyGrid};
use crate::windows::{combine, sample_sphere, SphereSample, WindowFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SstOrder {
    First,
    Second,
}

/// How a reassigned coefficient is deposited on the output axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deposit {
    Nearest,
    /// Split between the two bracketing bins in proportion to distance.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SstConfig {
    /// Coefficients with `|V| <= gamma_rel · max|V|` are not reassigned.
    pub gamma_rel: f64,
    pub order: SstOrder,
    pub deposit: Deposit,
}

impl Default for SstConfig {
    fn default() -> Self {
        SstConfig { gamma_rel: 1e-4, order: SstOrder::Second, deposit: Deposit::Nearest }
    }
}

impl SstConfig {
    pub fn first_order() -> Self {
        SstConfig { order: SstOrder::First, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rel > 0.0 && self.gamma_rel < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma_rel must lie in (0,1), got {}", self.gamma_rel)));
        }
        Ok(())
    }
}

/// Reassigned frequency (Hz) for every STFT cell, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ReassignmentField {
    pub omega: Array2<f64>,
    pub valid: Array2<bool>,
}

impl ReassignmentField {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn magnitude_floor(v: &Array2<Complex64>, gamma_rel: f64) -> f64 {
    gamma_rel * v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// First-order rule `ω = ν − Im(V_Dh / (2π V_h))`.
pub fn reassign_first(fam: &StftFamily, cfg: &SstConfig) -> ReassignmentField {
    let [vh, vdh, ..] = fam.arrays();
    let floor = magnitude_floor(vh, cfg.gamma_rel);
    let freqs = fam.freqs_hz();
    let mut omega = Array2::from_elem(vh.dim(), f64::NAN);
    let mut valid = Array2::from_elem(vh.dim(), false);
    for ((i, k), z) in vh.indexed_iter() {
        let mag = z.norm();
        if !(mag > floor) {
            continue;
        }
        let w = freqs[k] - (vdh[[i, k]] / (2.0 * PI * z)).im;
        if w.is_finite() {
            omega[[i, k]] = w;
            valid[[i, k]] = true;
        }
    }
    ReassignmentField { omega, valid }
}

/// Second-order rule: `Ω = ω + Re(Q)·(t − T)` where the local group delay `T`
/// varies along frequency, `ω` otherwise.
///
/// `Q = (V_DDh V_h − V_Dh²) / (2πi [V_h² + V_Th V_Dh − V_TDh V_h])` and
/// `T = t + Re(V_Th / V_h)`, with `TDh` the derivative of `t·h`.
pub fn reassign_second(fam: &StftFamily, cfg: &SstConfig) -> ReassignmentField {
    let first = reassign_first(fam, cfg);
    let [vh, vdh, vddh, vth, vtdh] = fam.arrays();
    let (n_t, n_f) = vh.dim();
    let dt_frame = fam.lattice.hop as f64 / (fam.bin_width() * fam.lattice.n_fft as f64);
    let tol = 1e-8 * dt_frame;

    // group-delay offset T − t
    let mut delay = Array2::from_elem((n_t, n_f), f64::NAN);
    for ((i, k), v) in first.valid.indexed_iter() {
        if *v {
            delay[[i, k]] = (vth[[i, k]] / vh[[i, k]]).re;
        }
    }

    let mut omega = first.omega.clone();
    for i in 0..n_t {
        for k in 0..n_f {
            if !first.valid[[i, k]] {
                continue;
            }
            let left = (k > 0).then(|| delay[[i, k - 1]]).filter(|d| d.is_finite());
            let right = (k + 1 < n_f).then(|| delay[[i, k + 1]]).filter(|d| d.is_finite());
            let d_nu = match (left, right) {
                (Some(l), Some(r)) => 0.5 * (r - l),
                (Some(l), None) => delay[[i, k]] - l,
                (None, Some(r)) => r - delay[[i, k]],
                (None, None) => 0.0,
            };
            if d_nu.abs() <= tol {
                continue;
            }
            let v = vh[[i, k]];
            let den = Complex64::new(0.0, 2.0 * PI) * (v * v + vth[[i, k]] * vdh[[i, k]] - vtdh[[i, k]] * v);
            if den.norm() == 0.0 {
                continue;
            }
            let q = (vddh[[i, k]] * v - vdh[[i, k]] * vdh[[i, k]]) / den;
            let corrected = first.omega[[i, k]] - q.re * delay[[i, k]];
            if corrected.is_finite() {
                omega[[i, k]] = corrected;
            }
        }
    }
    ReassignmentField { omega, valid: first.valid }
}

pub fn reassign(fam: &StftFamily, cfg: &SstConfig) -> ReassignmentField {
    match cfg.order {
        SstOrder::First => reassign_first(fam, cfg),
        SstOrder::Second => reassign_second(fam, cfg),
    }
}

/// Bookkeeping for one synchrosqueezing pass. Masses are `Σ|V|Δν`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SqueezeStats {
    pub valid_cells: usize,
    pub out_of_band_cells: usize,
    pub valid_mass: f64,
    pub out_of_band_mass: f64,
    pub below_threshold_mass: f64,
}

impl SqueezeStats {
    pub fn out_of_band_fraction(&self) -> f64 {
        if self.valid_mass > 0.0 {
            self.out_of_band_mass / self.valid_mass
        } else {
            0.0
        }
    }

    fn merge(self, o: SqueezeStats) -> SqueezeStats {
        SqueezeStats {
            valid_cells: self.valid_cells + o.valid_cells,
            out_of_band_cells: self.out_of_band_cells + o.out_of_band_cells,
            valid_mass: self.valid_mass + o.valid_mass,
            out_of_band_mass: self.out_of_band_mass + o.out_of_band_mass,
            below_threshold_mass: self.below_threshold_mass + o.below_threshold_mass,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synchrosqueezed {
    pub grid: TimeFrequencyGrid,
    pub stats: SqueezeStats,
}

/// Output axis lookup: fractional bin position of a frequency.
struct Axis1 {
    freqs: Vec<f64>,
    uniform: Option<(f64, f64)>,
}

impl Axis1 {
    fn new(freqs: &[f64]) -> Axis1 {
        let uniform = if freqs.len() > 1 {
            let d = freqs[1] - freqs[0];
            freqs
                .windows(2)
                .all(|w| ((w[1] - w[0]) - d).abs() <= 1e-9 * d)
                .then_some((freqs[0], d))
        } else {
            None
        };
        Axis1 { freqs: freqs.to_vec(), uniform }
    }

    fn width(&self, k: usize) -> f64 {
        let n = self.freqs.len();
        if n == 1 {
            return 1.0;
        }
        match self.uniform {
            Some((_, d)) => d,
            None => {
                let lo = if k == 0 { self.freqs[0] } else { 0.5 * (self.freqs[k - 1] + self.freqs[k]) };
                let hi = if k + 1 == n { self.freqs[n - 1] } else { 0.5 * (self.freqs[k] + self.freqs[k + 1]) };
                let w = hi - lo;
                if k == 0 || k + 1 == n {
                    2.0 * w
                } else {
                    w
                }
            }
        }
    }

    /// Position in bin units, or `None` outside the half-bin-extended span.
    fn position(&self, f: f64) -> Option<f64> {
        let n = self.freqs.len();
        match self.uniform {
            Some((f0, d)) => {
                let p = (f - f0) / d;
                (p >= -0.5 && p < n as f64 - 0.5).then_some(p)
            }
            None => {
                if n == 1 {
                    return (f == self.freqs[0]).then_some(0.0);
                }
                let lo_edge = self.freqs[0] - 0.5 * (self.freqs[1] - self.freqs[0]);
                let hi_edge = self.freqs[n - 1] + 0.5 * (self.freqs[n - 1] - self.freqs[n - 2]);
                if f < lo_edge || f >= hi_edge {
                    return None;
                }
                let j = self.freqs.partition_point(|&x| x <= f);
                if j == 0 {
                    return Some((f - self.freqs[0]) / (self.freqs[1] - self.freqs[0]));
                }
                if j == n {
                    return Some((n - 1) as f64 + (f - self.freqs[n - 1]) / (self.freqs[n - 1] - self.freqs[n - 2]));
                }
                Some((j - 1) as f64 + (f - self.freqs[j - 1]) / (self.freqs[j] - self.freqs[j - 1]))
            }
        }
    }
}

/// Moves every valid coefficient along its own time column to the output bin
/// of its reassigned frequency. The output is a density on `out_freqs`:
/// `Σ_k S(t,ν_k)·Δν_k` equals the in-band valid STFT mass `Σ V(t,ν')·Δν'`.
pub fn synchrosqueeze(fam: &StftFamily, field: &ReassignmentField, out_freqs: &[f64], deposit: Deposit) -> Result<Synchrosqueezed> {
    let [vh, ..] = fam.arrays();
    if field.omega.dim() != vh.dim() {
        return Err(Error::GeometryMismatch("reassignment field and STFT differ in shape".into()));
    }
    if out_freqs.is_empty() || !out_freqs.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidGrid("output axis must be nonempty and strictly increasing".into()));
    }
    let axis = Axis1::new(out_freqs);
    let d_in = fam.bin_width();
    let n_out = out_freqs.len();
    let widths: Vec<f64> = (0..n_out).map(|k| axis.width(k)).collect();

    let rows: Vec<(Vec<Complex64>, SqueezeStats)> = (0..vh.nrows())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::new(0.0, 0.0); n_out];
            let mut st = SqueezeStats::default();
            for k in 0..vh.ncols() {
                let v = vh[[i, k]];
                let mass = v * d_in;
                if !field.valid[[i, k]] {
                    st.below_threshold_mass += mass.norm();
                    continue;
                }
                st.valid_cells += 1;
                st.valid_mass += mass.norm();
                let Some(p) = axis.position(field.omega[[i, k]]) else {
                    st.out_of_band_cells += 1;
                    st.out_of_band_mass += mass.norm();
                    continue;
                };
                match deposit {
                    Deposit::Nearest => {
                        let j = (p.round() as usize).min(n_out - 1);
                        row[j] += mass;
                    }
                    Deposit::Linear => {
                        let lo = p.floor().max(0.0) as usize;
                        let frac = (p - lo as f64).clamp(0.0, 1.0);
                        if lo + 1 < n_out {
                            row[lo] += mass * (1.0 - frac);
                            row[lo + 1] += mass * frac;
                        } else {
                            row[lo.min(n_out - 1)] += mass;
                        }
                    }
                }
            }
            for (r, w) in row.iter_mut().zip(&widths) {
                *r /= *w;
            }
            (row, st)
        })
        .collect();

    let mut values = Array2::zeros((vh.nrows(), n_out));
    let mut stats = SqueezeStats::default();
    for (i, (row, st)) in rows.into_iter().enumerate() {
        values.row_mut(i).iter_mut().zip(row).for_each(|(o, v)| *o = v);
        stats = stats.merge(st);
    }
    let grid = TimeFrequencyGrid::new(fam.times_s().to_vec(), out_freqs.to_vec(), GridValues::Complex(values))?
        .with_boundary(fam.boundary().to_vec())?;
    Ok(Synchrosqueezed { grid, stats })
}

/// STFT-based synchrosqueezing with the first window of `window`, squeezed
/// onto the STFT frequency axis.
pub fn sst(signal: &Signal, window: &WindowFamily, cfg: &SstConfig, lattice: Lattice) -> Result<Synchrosqueezed> {
    cfg.validate()?;
    let fam = stft_family(signal, window, lattice)?;
    let field = reassign(&fam, cfg);
    let out = fam.freqs_hz().to_vec();
    synchrosqueeze(&fam, &field, &out, cfg.deposit)
}

/// Traditional multi-taper SST: complex average of the SSTs with each
/// window of the family.
pub fn multitaper_sst(signal: &Signal, family: &WindowFamily, cfg: &SstConfig, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    let j = family.count();
    let mut acc: Option<(TimeFrequencyGrid, Array2<Complex64>)> = None;
    for idx in 0..j {
        let s = sst(signal, &family.single(idx)?, cfg, lattice)?;
        let a = s.grid.complex().expect("sst output is complex").clone();
        match &mut acc {
            None => acc = Some((s.grid, a)),
            Some((_, sum)) => *sum += &a,
        }
    }
    let (grid, sum) = acc.expect("family has at least one window");
    let mean = if j == 1 { sum } else { sum / j as f64 };
    TimeFrequencyGrid::new(grid.times_s().to_vec(), grid.freqs_hz().to_vec(), GridValues::Complex(mean))?
        .with_boundary(grid.boundary().to_vec())
}

/// How the N random-window SSTs are combined before squaring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConceftAveraging {
    /// `C = (1/N) Σ |S_n|`; output `C²`. Insensitive to the random global
    /// phase of each sphere sample.
    Modulus,
    /// `C = (1/N) Σ S_n`; output `|C|²`.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceftConfig {
    pub realizations: usize,
    pub master_seed: u64,
    pub averaging: ConceftAveraging,
    pub sst: SstConfig,
}

impl ConceftConfig {
    pub fn new(realizations: usize, master_seed: u64) -> Self {
        ConceftConfig { realizations, master_seed, averaging: ConceftAveraging::Modulus, sst: SstConfig::default() }
    }
}

/// The sphere samples ConceFT draws: sample `n` uses `derive_seed(master, n)`.
pub fn conceft_samples(dim: usize, realizations: usize, master_seed: u64) -> Result<Vec<SphereSample>> {
    (0..realizations as u64).map(|n| sample_sphere(dim, derive_seed(master_seed, n))).collect()
}

/// ConceFT power grid from an explicit list of sphere samples.
pub fn conceft_with_samples(
    signal: &Signal,
    family: &WindowFamily,
    samples: &[SphereSample],
    averaging: ConceftAveraging,
    cfg: &SstConfig,
    lattice: Lattice,
) -> Result<TimeFrequencyGrid> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("ConceFT needs at least one realization".into()));
    }
    let mut shape: Option<TimeFrequencyGrid> = None;
    let mut acc_mod: Option<Array2<f64>> = None;
    let mut acc_cplx: Option<Array2<Complex64>> = None;
    // Sequential over realizations: the reduction order is the sample index.
    for r in samples {
        let h = combine(family, r)?;
        let s = sst(signal, &h, cfg, lattice)?;
        let a = s.grid.complex().expect("sst output is complex");
        match averaging {
            ConceftAveraging::Modulus => {
                let m = a.mapv(|z| z.norm());
                match &mut acc_mod {
                    None => acc_mod = Some(m),
                    Some(sum) => *sum += &m,
                }
            }
            ConceftAveraging::Complex => match &mut acc_cplx {
                None => acc_cplx = Some(a.clone()),
                Some(sum) => *sum += a,
            },
        }
        if shape.is_none() {
            shape = Some(s.grid);
        }
    }
    let n = samples.len() as f64;
    let power = match averaging {
        ConceftAveraging::Modulus => acc_mod.expect("nonempty").mapv(|v| (v / n) * (v / n)),
        ConceftAveraging::Complex => acc_cplx.expect("nonempty").mapv(|z| (z / n).norm_sqr()),
    };
    let g = shape.expect("nonempty");
    TimeFrequencyGrid::new(g.times_s().to_vec(), g.freqs_hz().to_vec(), GridValues::Power(power))?
        .with_boundary(g.boundary().to_vec())
}

/// ConceFT: average of SSTs over `N` random unit-norm complex combinations
/// of the family's windows, returned as a power grid.
pub fn conceft(signal: &Signal, family: &WindowFamily, cfg: &ConceftConfig, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    let samples = conceft_samples(family.count(), cfg.realizations, cfg.master_seed)?;
    conceft_with_samples(signal, family, &samples, cfg.averaging, &cfg.sst, lattice)
}

/// Traditional multi-taper spectrogram `(1/J) Σ_j |V^(h_j)|²`.
pub fn multitaper_spectrogram(signal: &Signal, family: &WindowFamily, lattice: Lattice) -> Result<TimeFrequencyGrid> {
    let stfts: Vec<Array2<Complex64>> = (0..family.count())
        .map(|j| crate::linear::stft(signal, &family.single(j)?, lattice).map(|g| g.complex().cloned().expect("complex")))
        .collect::<Result<_>>()?;
    let j = stfts.len() as f64;
    let power = stfts.iter().fold(Array2::<f64>::zeros(stfts[0].dim()), |acc, v| acc + v.mapv(|z| z.norm_sqr())) / j;
    power_grid(signal, family, lattice, power)
}

/// Spectrogram averaged over random sphere-combined windows,
/// `(1/N) Σ_n |V^(h_(n))|²`, each STFT computed with its own combined window.
pub fn random_window_spectrogram(
    signal: &Signal,
    family: &WindowFamily,
    realizations: usize,
    master_seed: u64,
    lattice: Lattice,
) -> Result<TimeFrequencyGrid> {
    let samples = conceft_samples(family.count(), realizations, master_seed)?;
    let windows: Vec<WindowFamily> = samples.iter().map(|r| combine(family, r)).collect::<Result<_>>()?;
    let partials: Vec<Array2<f64>> = windows
        .par_chunks(64)
        .map(|chunk| {
            let refs: Vec<&[Complex64]> = chunk.iter().map(|w| w.windows()[0].as_slice()).collect();
            let v = stft_raw(signal, &refs, lattice);
            v.iter().fold(Array2::<f64>::zeros(v[0].dim()), |acc, a| acc + a.mapv(|z| z.norm_sqr()))
        })
        .collect();
    let total = partials.into_iter().reduce(|a, b| a + b).expect("nonempty") / realizations as f64;
    power_grid(signal, family, lattice, total)
}

fn power_grid(signal: &Signal, family: &WindowFamily, lattice: Lattice, power: Array2<f64>) -> Result<TimeFrequencyGrid> {
    let centers = lattice.frame_centers(signal.len());
    TimeFrequencyGrid::new(
        lattice.times_s(signal),
        lattice.freqs_hz(signal.sample_rate_hz(), signal.is_real()),
        GridValues::Power(power),
    )?
    .with_boundary(crate::linear::boundary_mask(&centers, family.half_len(), signal.len()))
}

/// Per-slice complex mass `Σ_k S(t,ν_k)·Δν_k` of a squeezed grid.
pub fn slice_mass(grid: &TimeFrequencyGrid) -> Vec<Complex64> {
    let axis = Axis1::new(grid.freqs_hz());
    let widths: Vec<f64> = (0..grid.freqs_hz().len()).map(|k| axis.width(k)).collect();
    grid.complex()
        .map(|a| {
            a.axis_iter(Axis(0))
                .map(|row| row.iter().zip(&widths).map(|(z, w)| z * w).sum())
                .collect()
        })
        .unwrap_or_default()
}
