//! Three-component synthetic test signal with Brownian-perturbed amplitudes
//! and phases, and its ideal time-frequency representation (iTFR).
//!
//! Component 1 and 2 phases are written with time in milliseconds and phase
//! in cycles, so `IF(Hz) = 1000·dφ/dt_ms`; component 3 is a fixed 3141 Hz tone.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linear::{boundary_mask, Lattice};
use crate::rng::{derive_seed, SeededRng};
use crate::signal::{GridValues, Signal, TimeFrequencyGrid};

pub const SAMPLE_RATE_HZ: f64 = 32_000.0;
pub const RECORD_MS: f64 = 32.0;
/// Raised-cosine onset/offset applied inside every component support.
pub const EDGE_MS: f64 = 0.5;
/// Seed offset used when a realization has to be redrawn.
const REDRAW_OFFSET: u64 = 1 << 32;

/// Realization of `F_{a,b,c}(t) = a + S_c{W}(t) / (b·max S_c{W})` on `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnvelope {
    pub a: f64,
    pub b: f64,
    pub c_ms: f64,
    pub l_ms: f64,
    pub fs_hz: f64,
    pub values: Vec<f64>,
    /// Seed that produced `values` (differs from the requested seed after a redraw).
    pub seed: u64,
}

/// Gaussian-kernel local linear regression of `y` sampled every `dt`, with
/// bandwidth `c` in the same unit as `dt`.
pub fn local_linear_smooth(y: &[f64], dt: f64, c: f64) -> Vec<f64> {
    let n = y.len();
    let reach = ((6.0 * c / dt).ceil() as usize).max(1);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n - 1);
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (j, &yj) in y.iter().enumerate().take(hi + 1).skip(lo) {
                let u = (j as f64 - i as f64) * dt;
                let w = (-u * u / (2.0 * c * c)).exp();
                s0 += w;
                s1 += w * u;
                s2 += w * u * u;
                t0 += w * yj;
                t1 += w * u * yj;
            }
            let det = s0 * s2 - s1 * s1;
            if det.abs() <= 1e-14 * s0 * s2 {
                t0 / s0
            } else {
                (s2 * t0 - s1 * t1) / det
            }
        })
        .collect()
}

pub fn brownian_envelope(a: f64, b: f64, c_ms: f64, l_ms: f64, fs_hz: f64, seed: u64) -> Result<BrownianEnvelope> {
    if a < 0.0 || !(b > 0.0) || !(c_ms > 0.0) || !(l_ms > 0.0) || !(fs_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid envelope parameters a={a}, b={b}, c={c_ms}, L={l_ms}, fs={fs_hz}")));
    }
    let dt_ms = 1000.0 / fs_hz;
    let n = (l_ms / dt_ms).round() as usize + 1;
    for k in 0.. {
        let s = seed.wrapping_add(REDRAW_OFFSET.wrapping_mul(k));
        let mut rng = SeededRng::new(s);
        let mut w = Vec::with_capacity(n);
        let mut acc = 0.0;
        w.push(0.0);
        for _ in 1..n {
            acc += dt_ms.sqrt() * rng.normal();
            w.push(acc);
        }
        let sm = local_linear_smooth(&w, dt_ms, c_ms);
        let max = sm.iter().cloned().fold(f64::MIN, f64::max);
        if max > 0.0 {
            let values = sm.iter().map(|v| a + v / (b * max)).collect();
            return Ok(BrownianEnvelope { a, b, c_ms, l_ms, fs_hz, values, seed: s });
        }
    }
    unreachable!()
}

/// One oscillatory component on the full record; every sequence is zero
/// outside `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    /// Envelope `A_l(t)` before edge tapering.
    pub envelope: Vec<f64>,
    /// Raised-cosine edge taper, 1 in the interior of the support.
    pub taper: Vec<f64>,
    pub phase_cycles: Vec<f64>,
    pub if_hz: Vec<f64>,
    /// Sample index range `[start, end)`.
    pub support: (usize, usize),
    pub support_ms: (f64, f64),
}

impl ComponentSpec {
    pub fn amplitude(&self, n: usize) -> f64 {
        self.envelope[n] * self.taper[n]
    }

    pub fn is_active(&self, n: usize) -> bool {
        n >= self.support.0 && n < self.support.1
    }

    pub fn samples(&self) -> Vec<Complex64> {
        (0..self.envelope.len())
            .map(|n| {
                if self.is_active(n) {
                    Complex64::from_polar(self.amplitude(n), 2.0 * PI * self.phase_cycles[n])
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImtConfig {
    /// Minimum pairwise IF separation among simultaneously active components.
    pub min_separation_hz: f64,
    pub max_redraws: u64,
}

impl Default for ImtConfig {
    fn default() -> Self {
        ImtConfig { min_separation_hz: 500.0, max_redraws: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub signal: Signal,
    pub components: Vec<ComponentSpec>,
    pub seed: u64,
    /// Seed of the accepted realization.
    pub effective_seed: u64,
    pub min_separation_hz: f64,
}

fn record_len() -> usize {
    (RECORD_MS * SAMPLE_RATE_HZ / 1000.0).round() as usize
}

fn support_indices(start_ms: f64, end_ms: f64) -> (usize, usize) {
    let k = SAMPLE_RATE_HZ / 1000.0;
    ((start_ms * k).round() as usize, (end_ms * k).round() as usize + 1)
}

fn taper(n: usize, support: (usize, usize)) -> Vec<f64> {
    let edge = EDGE_MS * SAMPLE_RATE_HZ / 1000.0;
    (0..n)
        .map(|i| {
            if i < support.0 || i >= support.1 {
                return 0.0;
            }
            let from_edge = ((i - support.0).min(support.1 - 1 - i)) as f64;
            if from_edge >= edge {
                1.0
            } else {
                0.5 * (1.0 - (PI * from_edge / edge).cos())
            }
        })
        .collect()
}

/// Places a support-length sequence onto the record.
fn embed(n: usize, support: (usize, usize), values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    out[support.0..support.1].copy_from_slice(&values[..support.1 - support.0]);
    out
}

fn derivative_hz(cycles: &[f64], support: (usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; cycles.len()];
    let (s, e) = support;
    for i in s..e {
        let d = if i == s {
            cycles[i + 1] - cycles[i]
        } else if i + 1 == e {
            cycles[i] - cycles[i - 1]
        } else {
            0.5 * (cycles[i + 1] - cycles[i - 1])
        };
        out[i] = d * SAMPLE_RATE_HZ;
    }
    out
}

fn component(
    support_ms: (f64, f64),
    envelope: BrownianEnvelope,
    phase: impl Fn(f64, usize) -> f64,
) -> ComponentSpec {
    let n = record_len();
    let support = support_indices(support_ms.0, support_ms.1);
    let env = embed(n, support, &envelope.values);
    let mut phase_cycles = vec![0.0; n];
    for (j, p) in phase_cycles.iter_mut().enumerate().take(support.1).skip(support.0) {
        *p = phase(j as f64 * 1000.0 / SAMPLE_RATE_HZ, j - support.0);
    }
    let if_hz = derivative_hz(&phase_cycles, support);
    ComponentSpec { envelope: env, taper: taper(n, support), phase_cycles, if_hz, support, support_ms }
}

fn draw(seed: u64) -> Result<Vec<ComponentSpec>> {
    let fs = SAMPLE_RATE_HZ;
    let s = |i| derive_seed(seed, i);
    let a1 = brownian_envelope(1.0, 2.0, 0.2, 19.0, fs, s(0))?;
    let a2 = brownian_envelope(0.5, 4.0, 0.1, 23.0, fs, s(1))?;
    let a3 = brownian_envelope(1.0 / 3.0, 6.0, 0.1, 7.0, fs, s(2))?;
    let f1 = brownian_envelope(1.0, 6.0, 0.3, 19.0, fs, s(3))?;
    let f2 = brownian_envelope(0.0, 5.0, 0.4, 23.0, fs, s(4))?;
    let c1 = component((1.0, 20.0), a1, |t, j| (120.0 / 19.0) * t.ln() + (13.0 / 19.0) * (t - 1.0) + f1.values[j]);
    let c2 = component((2.0, 25.0), a2, |t, j| 5.0 * t + 0.1 * (PI * t).cos() + f2.values[j]);
    let c3 = component((3.0, 10.0), a3, |t, _| 3141.0 * t / 1000.0);
    Ok(vec![c1, c2, c3])
}

/// Smallest IF gap between simultaneously active components.
pub fn min_pairwise_separation(components: &[ComponentSpec]) -> f64 {
    let n = components.first().map_or(0, |c| c.if_hz.len());
    let mut best = f64::INFINITY;
    for i in 0..n {
        for (a, ca) in components.iter().enumerate() {
            for cb in &components[a + 1..] {
                if ca.is_active(i) && cb.is_active(i) {
                    best = best.min((ca.if_hz[i] - cb.if_hz[i]).abs());
                }
            }
        }
    }
    best
}

/// The three-component signal: a descending `1/t` chirp on [1, 20] ms, a
/// wobbling 5 kHz component on [2, 25] ms and a 3141 Hz tone on [3, 10] ms,
/// 32 ms at 32 kHz, emitted as the real part of the sum.
pub fn three_component_signal(seed: u64) -> Result<GroundTruth> {
    three_component_signal_with(seed, &ImtConfig::default())
}

pub fn three_component_signal_with(seed: u64, cfg: &ImtConfig) -> Result<GroundTruth> {
    for k in 0..=cfg.max_redraws {
        let s = seed.wrapping_add(REDRAW_OFFSET.wrapping_mul(k));
        let components = draw(s)?;
        let sep = min_pairwise_separation(&components);
        let ok = components.iter().all(|c| (c.support.0..c.support.1).all(|i| c.if_hz[i] > 0.0 && c.envelope[i] > 0.0));
        if ok && sep >= cfg.min_separation_hz {
            let n = record_len();
            let sum: Vec<f64> = (0..n)
                .map(|i| components.iter().map(|c| c.samples()[i].re).sum())
                .collect();
            let signal = Signal::from_real(&sum, SAMPLE_RATE_HZ, 0.0)?;
            return Ok(GroundTruth { signal, components, seed, effective_seed: s, min_separation_hz: sep });
        }
    }
    Err(Error::InvalidParameter(format!(
        "no realization with IF separation ≥ {} Hz in {} draws from seed {seed}",
        cfg.min_separation_hz,
        cfg.max_redraws + 1
    )))
}

/// Weight deposited in the iTFR for each active component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ItfrWeight {
    #[default]
    Amplitude,
    SquaredAmplitude,
}

/// Per frame, each active component deposits its amplitude in the bin nearest
/// its IF. Axes match a real-signal STFT on `lattice`.
pub fn ideal_tfr(components: &[ComponentSpec], fs_hz: f64, lattice: Lattice, weight: ItfrWeight) -> Result<TimeFrequencyGrid> {
    let n = components.first().map_or(0, |c| c.envelope.len());
    let centers = lattice.frame_centers(n);
    let n_bins = lattice.n_bins(true);
    let df = lattice.bin_width(fs_hz);
    let mut values = Array2::zeros((centers.len(), n_bins));
    for (i, &c) in centers.iter().enumerate() {
        for comp in components.iter().filter(|comp| comp.is_active(c)) {
            let k = (comp.if_hz[c] / df).round();
            if !(0.0..n_bins as f64).contains(&k) {
                return Err(Error::OutsideLattice(format!("IF {:.1} Hz outside the lattice", comp.if_hz[c])));
            }
            let a = comp.amplitude(c);
            values[[i, k as usize]] += match weight {
                ItfrWeight::Amplitude => a,
                ItfrWeight::SquaredAmplitude => a * a,
            };
        }
    }
    let times = centers.iter().map(|&c| c as f64 / fs_hz).collect();
    TimeFrequencyGrid::new(times, lattice.freqs_hz(fs_hz, true), GridValues::Power(values))?
        .with_boundary(boundary_mask(&centers, 0, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_max_law_and_determinism() {
        for (a, b, c) in [(1.0, 2.0, 0.2), (0.5, 4.0, 0.1), (0.0, 5.0, 0.4)] {
            for seed in 0..10 {
                let e = brownian_envelope(a, b, c, 19.0, SAMPLE_RATE_HZ, seed).unwrap();
                let max = e.values.iter().cloned().fold(f64::MIN, f64::max);
                assert!((max - (a + 1.0 / b)).abs() < 1e-9);
                assert_eq!(e, brownian_envelope(a, b, c, 19.0, SAMPLE_RATE_HZ, seed).unwrap());
            }
        }
    }

    #[test]
    fn envelope_family_stays_near_level() {
        let e = brownian_envelope(1.0, 2.0, 0.2, 19.0, SAMPLE_RATE_HZ, 3).unwrap();
        assert_eq!(e.values.len(), 609);
        let max = e.values.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1.5).abs() < 1e-12);
        assert!((e.values[0] - 1.0).abs() < 0.2);
    }

    #[test]
    fn envelope_is_smooth() {
        let e = brownian_envelope(1.0, 2.0, 0.2, 19.0, SAMPLE_RATE_HZ, 8).unwrap();
        let d2: Vec<f64> = e.values.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect();
        let d1: Vec<f64> = e.values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let mean_d1 = d1.iter().sum::<f64>() / d1.len() as f64;
        assert!(d2.iter().all(|&d| d <= 10.0 * mean_d1));
    }

    #[test]
    fn wide_smoother_flattens_second_differences() {
        let narrow = brownian_envelope(1.0, 2.0, 0.2, 19.0, SAMPLE_RATE_HZ, 4).unwrap();
        let wide = brownian_envelope(1.0, 2.0, 500.0, 19.0, SAMPLE_RATE_HZ, 4).unwrap();
        let var_d2 = |v: &[f64]| {
            let d: Vec<f64> = v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
            d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64
        };
        assert!(var_d2(&wide.values) < 1e-6 * var_d2(&narrow.values));
    }

    #[test]
    fn local_linear_reproduces_lines() {
        let y: Vec<f64> = (0..100).map(|i| 2.0 + 0.5 * i as f64).collect();
        for (a, b) in local_linear_smooth(&y, 1.0, 3.0).iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn components_follow_their_laws() {
        let g = three_component_signal(1).unwrap();
        let c3 = &g.components[2];
        for i in c3.support.0..c3.support.1 {
            assert!((c3.if_hz[i] - 3141.0).abs() < 1e-6);
        }
        let c1 = &g.components[0];
        let near = |ms: f64| (ms * SAMPLE_RATE_HZ / 1000.0).round() as usize;
        // IF of the deterministic part: 1000·((120/19)/t + 13/19) Hz
        assert!((c1.if_hz[near(1.0) + 1] / 7000.0 - 1.0).abs() < 0.05);
        // the remainder of the phase is F_{1,6,0.3}, whose maximum is 1 + 1/6
        let resid = (c1.support.0..c1.support.1)
            .map(|i| {
                let t = i as f64 * 1000.0 / SAMPLE_RATE_HZ;
                c1.phase_cycles[i] - (120.0 / 19.0) * t.ln() - (13.0 / 19.0) * (t - 1.0)
            })
            .fold(f64::MIN, f64::max);
        assert!((resid - 7.0 / 6.0).abs() < 1e-9);
        assert!(c1.if_hz[near(20.0) - 1] < c1.if_hz[near(1.0) + 1]);
        let c2 = &g.components[1];
        let mid: f64 = (c2.support.0..c2.support.1).map(|i| c2.if_hz[i]).sum::<f64>() / (c2.support.1 - c2.support.0) as f64;
        assert!((mid - 5000.0).abs() < 300.0);
    }

    #[test]
    fn signal_is_real_part_of_components_and_deterministic() {
        let g = three_component_signal(9).unwrap();
        assert_eq!(g.signal.len(), 1024);
        for (i, z) in g.signal.samples().iter().enumerate() {
            let s: f64 = g.components.iter().map(|c| c.samples()[i].re).sum();
            assert!((z.re - s).abs() < 1e-12);
        }
        assert_eq!(g, three_component_signal(9).unwrap());
        assert!(g.min_separation_hz >= ImtConfig::default().min_separation_hz);
    }

    #[test]
    fn itfr_support_arithmetic() {
        let g = three_component_signal(2).unwrap();
        let lat = Lattice { hop: 1, n_fft: 1024 };
        let r = ideal_tfr(&g.components, SAMPLE_RATE_HZ, lat, ItfrWeight::Amplitude).unwrap();
        let a = r.real().unwrap();
        let row = |ms: f64| a.row((ms * SAMPLE_RATE_HZ / 1000.0) as usize).iter().filter(|&&v| v > 0.0).count();
        assert_eq!(row(6.0), 3);
        assert_eq!(row(30.0), 0);
        assert_eq!(row(22.0), 1);
    }

    #[test]
    fn itfr_of_constant_tone_is_unit_mass() {
        let n = record_len();
        let support = (0, n);
        let f0 = 2000.0;
        let comp = ComponentSpec {
            envelope: vec![1.0; n],
            taper: vec![1.0; n],
            phase_cycles: (0..n).map(|i| f0 * i as f64 / SAMPLE_RATE_HZ).collect(),
            if_hz: vec![f0; n],
            support,
            support_ms: (0.0, RECORD_MS),
        };
        let lat = Lattice { hop: 8, n_fft: 1024 };
        let r = ideal_tfr(&[comp.clone()], SAMPLE_RATE_HZ, lat, ItfrWeight::Amplitude).unwrap();
        let k0 = (f0 / lat.bin_width(SAMPLE_RATE_HZ)).round() as usize;
        for row in r.real().unwrap().rows() {
            assert_eq!(row[k0], 1.0);
            assert_eq!(row.sum(), 1.0);
        }
        let mut high = comp;
        high.if_hz = vec![20_000.0; n];
        assert!(matches!(ideal_tfr(&[high], SAMPLE_RATE_HZ, lat, ItfrWeight::Amplitude), Err(Error::OutsideLattice(_))));
    }
}
