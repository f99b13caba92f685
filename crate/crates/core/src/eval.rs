//! Per-slice normalization, 1-D optimal transport distance (OTD) against an
//! ideal TFR, and the multi-method noise benchmark.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::bilinear::{cwd, spwv, CohenConfig};
use crate::error::{Error, Result};
use crate::imt::{ideal_tfr, three_component_signal_with, GroundTruth, ImtConfig, ItfrWeight, SAMPLE_RATE_HZ};
use crate::linear::{scalogram_on, Lattice, MorletWavelet};
use crate::rng::derive_seed;
use crate::signal::{add_noise, Signal, TimeFrequencyGrid};
use crate::sst::{conceft, sst, ConceftConfig, SstConfig, SstOrder};
use crate::windows::{default_length, gaussian_window, hermite_windows};

/// One time slice as a probability measure on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMeasure {
    pub freqs_hz: Vec<f64>,
    pub mass: Vec<f64>,
    pub empty: bool,
}

/// Divides by the total; slices whose total is below 1e-300 are flagged
/// empty. Negative entries are treated as zero.
pub fn normalize_slice(values: &[f64], freqs_hz: &[f64]) -> SliceMeasure {
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if !(sum >= 1e-300) {
        return SliceMeasure { freqs_hz: freqs_hz.to_vec(), mass: vec![0.0; values.len()], empty: true };
    }
    SliceMeasure { freqs_hz: freqs_hz.to_vec(), mass: clipped.iter().map(|v| v / sum).collect(), empty: false }
}

/// `∫ |F_μ − F_ν| dν` with step cumulative distributions on the shared grid,
/// in the grid's frequency unit.
pub fn otd(mu: &SliceMeasure, nu: &SliceMeasure) -> Result<f64> {
    if mu.freqs_hz != nu.freqs_hz || mu.mass.len() != mu.freqs_hz.len() || nu.mass.len() != nu.freqs_hz.len() {
        return Err(Error::GeometryMismatch("OTD needs both measures on the same frequency grid".into()));
    }
    if mu.empty || nu.empty {
        return Err(Error::InvalidParameter("OTD of an empty measure".into()));
    }
    Ok(otd_unchecked(&mu.mass, &nu.mass, &mu.freqs_hz))
}

fn otd_unchecked(a: &[f64], b: &[f64], freqs: &[f64]) -> f64 {
    let (mut fa, mut fb, mut d) = (0.0, 0.0, 0.0);
    for k in 0..freqs.len().saturating_sub(1) {
        fa += a[k];
        fb += b[k];
        d += (fa - fb).abs() * (freqs[k + 1] - freqs[k]);
    }
    d
}

/// Which time slices enter the average.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SlicePolicy {
    #[default]
    All,
    /// Skip frames flagged as boundary-affected in either grid.
    Interior,
    /// Frames with time in `[t0, t1]` seconds.
    Range(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtdSummary {
    /// Mean OTD in Hz over the scored slices.
    pub mean: f64,
    pub per_slice: Vec<Option<f64>>,
    pub scored: usize,
    /// Slices inside the policy where either measure was empty.
    pub skipped: usize,
    /// Fraction of absolute mass removed by clipping negative values.
    pub clipped_fraction: f64,
}

/// Conservative rebinning of one slice: the value of each source bin times
/// its cell width is spread over destination cells by overlap, then divided
/// by the destination cell width.
pub fn rebin(values: &[f64], src_hz: &[f64], dst_hz: &[f64]) -> Result<Vec<f64>> {
    if values.len() != src_hz.len() || src_hz.len() < 2 || dst_hz.len() < 2 {
        return Err(Error::GeometryMismatch("rebin needs matching values and at least two bins per axis".into()));
    }
    let edges = |f: &[f64]| -> Vec<f64> {
        let n = f.len();
        let mut e = Vec::with_capacity(n + 1);
        e.push(f[0] - 0.5 * (f[1] - f[0]));
        for k in 0..n - 1 {
            e.push(0.5 * (f[k] + f[k + 1]));
        }
        e.push(f[n - 1] + 0.5 * (f[n - 1] - f[n - 2]));
        e
    };
    let se = edges(src_hz);
    let de = edges(dst_hz);
    let mut out = vec![0.0; dst_hz.len()];
    let mut j = 0;
    for (i, &v) in values.iter().enumerate() {
        let (lo, hi) = (se[i], se[i + 1]);
        let mass = v * (hi - lo);
        while j > 0 && de[j] > lo {
            j -= 1;
        }
        let mut k = j;
        while k < out.len() && de[k] < hi {
            let ov = hi.min(de[k + 1]) - lo.max(de[k]);
            if ov > 0.0 {
                out[k] += mass * ov / (hi - lo);
            }
            k += 1;
        }
        j = k.saturating_sub(1);
    }
    for (o, w) in out.iter_mut().zip(de.windows(2)) {
        *o /= w[1] - w[0];
    }
    Ok(out)
}

/// Mean per-slice OTD between a TFR and the ideal TFR. Both are viewed as
/// power; a TFR on a different frequency axis is rebinned onto the truth's.
pub fn mean_otd(tfr: &TimeFrequencyGrid, truth: &TimeFrequencyGrid, policy: SlicePolicy) -> Result<OtdSummary> {
    if tfr.times_s().len() != truth.times_s().len()
        || tfr.times_s().iter().zip(truth.times_s()).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::GeometryMismatch("TFR and truth have different time axes".into()));
    }
    let freqs = truth.freqs_hz();
    let same_freqs = tfr.freqs_hz() == freqs;
    let p = tfr.power_view();
    let q = truth.power_view();
    let neg: f64 = p.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let tot: f64 = p.iter().map(|v| v.abs()).sum();
    let clipped_fraction = if tot > 0.0 { neg / tot } else { 0.0 };

    let per_slice: Vec<Option<f64>> = (0..p.nrows())
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let t = truth.times_s()[i];
            let keep = match policy {
                SlicePolicy::All => true,
                SlicePolicy::Interior => !tfr.boundary()[i] && !truth.boundary()[i],
                SlicePolicy::Range(t0, t1) => t >= t0 && t <= t1,
            };
            if !keep {
                return Ok(None);
            }
            let row = p.row(i).to_vec();
            let row = if same_freqs { row } else { rebin(&row, tfr.freqs_hz(), freqs)? };
            let mu = normalize_slice(&row, freqs);
            let nu = normalize_slice(&q.row(i).to_vec(), freqs);
            if mu.empty || nu.empty {
                return Ok(None);
            }
            Ok(Some(otd_unchecked(&mu.mass, &nu.mass, freqs)))
        })
        .collect::<Result<_>>()?;

    let in_policy = (0..p.nrows())
        .filter(|&i| match policy {
            SlicePolicy::All => true,
            SlicePolicy::Interior => !tfr.boundary()[i] && !truth.boundary()[i],
            SlicePolicy::Range(t0, t1) => (t0..=t1).contains(&truth.times_s()[i]),
        })
        .count();
    let scored: Vec<f64> = per_slice.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(OtdSummary {
        mean: scored.iter().sum::<f64>() / scored.len() as f64,
        scored: scored.len(),
        skipped: in_policy - scored.len(),
        per_slice,
        clipped_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Scalogram,
    Spwv,
    Cwd,
    Sst1,
    Sst2,
    Conceft,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Scalogram, Method::Spwv, Method::Cwd, Method::Sst1, Method::Sst2, Method::Conceft];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Scalogram => "scalogram",
            Method::Spwv => "SPWV",
            Method::Cwd => "CWD",
            Method::Sst1 => "1st-SST",
            Method::Sst2 => "2nd-SST",
            Method::Conceft => "ConceFT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "scalogram" | "cwt" => Ok(Method::Scalogram),
            "spwv" => Ok(Method::Spwv),
            "cwd" => Ok(Method::Cwd),
            "sst1" | "1st-sst" => Ok(Method::Sst1),
            "sst2" | "2nd-sst" | "sst" => Ok(Method::Sst2),
            "conceft" => Ok(Method::Conceft),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    /// `f64::INFINITY` means the noiseless signal.
    pub snr_db: Vec<f64>,
    pub n_realizations: usize,
    pub master_seed: u64,
    pub signal_seed: u64,
    pub imt: ImtConfig,
    pub window_sigma_s: f64,
    /// Window length in samples, shared by the STFT methods and the
    /// bilinear time-smoothing window.
    pub window_len: usize,
    pub lattice: Lattice,
    pub conceft_windows: usize,
    pub conceft_realizations: usize,
    pub conceft_order: SstOrder,
    pub gamma_rel: f64,
    pub itfr_weight: ItfrWeight,
    pub slice_policy: SlicePolicy,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let sigma = 5e-3 / 12.0;
        let len = default_length(sigma, SAMPLE_RATE_HZ, 4.0);
        BenchmarkConfig {
            methods: Method::ALL.to_vec(),
            snr_db: vec![100.0, 10.0, 5.0, 2.0, 0.0],
            n_realizations: 30,
            master_seed: 1,
            signal_seed: 1,
            imt: ImtConfig::default(),
            window_sigma_s: sigma,
            window_len: len,
            lattice: Lattice { hop: 4, n_fft: 1024 },
            conceft_windows: 2,
            conceft_realizations: 30,
            conceft_order: SstOrder::First,
            gamma_rel: SstConfig::default().gamma_rel,
            itfr_weight: ItfrWeight::Amplitude,
            slice_policy: SlicePolicy::All,
        }
    }
}

/// Scores of every (SNR, realization, method) in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub n_realizations: usize,
    /// `scores[s][r][m]`, mean OTD in kHz.
    pub scores: Vec<Vec<Vec<f64>>>,
    /// `mean_otd[s][m]`, kHz.
    pub mean_otd: Array2<f64>,
    pub std_otd: Array2<f64>,
    /// Noise seed of each (SNR, realization).
    pub noise_seeds: Vec<Vec<u64>>,
    pub conceft_seeds: Vec<Vec<u64>>,
    pub truth_seed: u64,
    pub truth_effective_seed: u64,
    pub config: BenchmarkConfig,
}

/// Noise seed for SNR index `s`, realization `r`.
pub fn noise_seed(master: u64, s: usize, r: usize) -> u64 {
    derive_seed(derive_seed(master, s as u64), r as u64)
}

/// Sphere-sample master seed for the ConceFT run on a given noise draw.
pub fn conceft_seed(noise_seed: u64) -> u64 {
    derive_seed(noise_seed, 1)
}

/// Everything the benchmark needs per method, built once per report.
struct Analyzers {
    gauss: crate::windows::WindowFamily,
    hermite: crate::windows::WindowFamily,
    cohen: CohenConfig,
    sst1: SstConfig,
    sst2: SstConfig,
    conceft_sst: SstConfig,
}

impl Analyzers {
    fn new(cfg: &BenchmarkConfig) -> Result<Self> {
        let fs = SAMPLE_RATE_HZ;
        let base = SstConfig { gamma_rel: cfg.gamma_rel, ..SstConfig::default() };
        Ok(Analyzers {
            gauss: gaussian_window(cfg.window_sigma_s, cfg.window_len, fs)?,
            hermite: hermite_windows(cfg.conceft_windows, cfg.window_sigma_s, cfg.window_len, fs)?,
            cohen: CohenConfig::for_time_window(cfg.window_len | 1),
            sst1: SstConfig { order: SstOrder::First, ..base },
            sst2: SstConfig { order: SstOrder::Second, ..base },
            conceft_sst: SstConfig { order: cfg.conceft_order, ..base },
        })
    }
}

/// The TFR a method produces for `signal` on the benchmark lattice.
fn analyze(method: Method, signal: &Signal, an: &Analyzers, cfg: &BenchmarkConfig, sphere_seed: u64) -> Result<TimeFrequencyGrid> {
    let lat = cfg.lattice;
    match method {
        Method::Scalogram => {
            let freqs = lat.freqs_hz(signal.sample_rate_hz(), true);
            scalogram_on(signal, &freqs, lat.hop, MorletWavelet::default())
        }
        Method::Spwv => spwv(signal, &an.cohen, lat),
        Method::Cwd => cwd(signal, &an.cohen, lat),
        Method::Sst1 => Ok(sst(signal, &an.gauss, &an.sst1, lat)?.grid),
        Method::Sst2 => Ok(sst(signal, &an.gauss, &an.sst2, lat)?.grid),
        Method::Conceft => {
            let c = ConceftConfig { sst: an.conceft_sst, ..ConceftConfig::new(cfg.conceft_realizations, sphere_seed) };
            conceft(signal, &an.hermite, &c, lat)
        }
    }
}

/// Ground truth signal and its iTFR on the benchmark lattice.
pub fn benchmark_truth(cfg: &BenchmarkConfig) -> Result<(GroundTruth, TimeFrequencyGrid)> {
    let g = three_component_signal_with(cfg.signal_seed, &cfg.imt)?;
    let itfr = ideal_tfr(&g.components, SAMPLE_RATE_HZ, cfg.lattice, cfg.itfr_weight)?;
    Ok((g, itfr))
}

/// Scores every method on every noisy realization of one ground-truth
/// signal. Deterministic in the config.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.methods.is_empty() || cfg.snr_db.is_empty() || cfg.n_realizations == 0 {
        return Err(Error::InvalidParameter("benchmark needs methods, SNRs and at least one realization".into()));
    }
    let (truth, itfr) = benchmark_truth(cfg)?;
    let an = Analyzers::new(cfg)?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.snr_db.len()).flat_map(|s| (0..cfg.n_realizations).map(move |r| (s, r))).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(s, r)| -> Result<Vec<f64>> {
            let ns = noise_seed(cfg.master_seed, s, r);
            let (noisy, _) = add_noise(&truth.signal, cfg.snr_db[s], ns)?;
            cfg.methods
                .iter()
                .map(|&m| {
                    let tfr = analyze(m, &noisy, &an, cfg, conceft_seed(ns))?;
                    Ok(mean_otd(&tfr, &itfr, cfg.slice_policy)?.mean / 1000.0)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let (ns, nm, nr) = (cfg.snr_db.len(), cfg.methods.len(), cfg.n_realizations);
    let mut scores = vec![vec![vec![0.0; nm]; nr]; ns];
    for (&(s, r), row) in jobs.iter().zip(results) {
        scores[s][r] = row;
    }
    let mut mean = Array2::zeros((ns, nm));
    let mut std = Array2::zeros((ns, nm));
    for s in 0..ns {
        for m in 0..nm {
            let v: Vec<f64> = (0..nr).map(|r| scores[s][r][m]).collect();
            let mu = v.iter().sum::<f64>() / nr as f64;
            let var = if nr > 1 { v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nr - 1) as f64 } else { 0.0 };
            mean[[s, m]] = mu;
            std[[s, m]] = var.sqrt();
        }
    }
    let noise_seeds: Vec<Vec<u64>> = (0..ns).map(|s| (0..nr).map(|r| noise_seed(cfg.master_seed, s, r)).collect()).collect();
    let conceft_seeds = noise_seeds.iter().map(|v| v.iter().map(|&x| conceft_seed(x)).collect()).collect();
    Ok(BenchmarkReport {
        methods: cfg.methods.clone(),
        snr_db: cfg.snr_db.clone(),
        n_realizations: nr,
        scores,
        mean_otd: mean,
        std_otd: std,
        noise_seeds,
        conceft_seeds,
        truth_seed: truth.seed,
        truth_effective_seed: truth.effective_seed,
        config: cfg.clone(),
    })
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "clean".to_string()
    } else {
        format!("{snr} dB")
    }
}

impl BenchmarkReport {
    pub fn method_index(&self, m: Method) -> Option<usize> {
        self.methods.iter().position(|&x| x == m)
    }

    pub fn snr_index(&self, snr: f64) -> Option<usize> {
        self.snr_db.iter().position(|&x| x == snr)
    }

    pub fn mean(&self, snr: f64, m: Method) -> Option<f64> {
        Some(self.mean_otd[[self.snr_index(snr)?, self.method_index(m)?]])
    }

    pub fn std(&self, snr: f64, m: Method) -> Option<f64> {
        Some(self.std_otd[[self.snr_index(snr)?, self.method_index(m)?]])
    }

    /// Rows = SNR, columns = methods, cells = `mean (std)` in kHz.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("SNR");
        for m in &self.methods {
            out.push(',');
            out.push_str(m.name());
        }
        out.push('\n');
        for (s, &snr) in self.snr_db.iter().enumerate() {
            out.push_str(&snr_label(snr));
            for m in 0..self.methods.len() {
                out.push_str(&format!(",{:.2} ({:.2})", self.mean_otd[[s, m]], self.std_otd[[s, m]]));
            }
            out.push('\n');
        }
        out
    }

    /// One line per (SNR, realization, method).
    pub fn long_csv(&self) -> String {
        let mut out = String::from("snr_db,realization,noise_seed,method,otd_khz\n");
        for (s, &snr) in self.snr_db.iter().enumerate() {
            for r in 0..self.n_realizations {
                for (m, method) in self.methods.iter().enumerate() {
                    out.push_str(&format!(
                        "{snr},{r},{},{},{:.17e}\n",
                        self.noise_seeds[s][r],
                        method.name(),
                        self.scores[s][r][m]
                    ));
                }
            }
        }
        out
    }

    /// Key-value manifest sufficient to replay the run.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let c = &self.config;
        let join = |v: Vec<String>| v.join(",");
        vec![
            ("methods".into(), join(c.methods.iter().map(|m| m.name().to_string()).collect())),
            ("snr_db".into(), join(c.snr_db.iter().map(|x| x.to_string()).collect())),
            ("n_realizations".into(), c.n_realizations.to_string()),
            ("master_seed".into(), c.master_seed.to_string()),
            ("signal_seed".into(), c.signal_seed.to_string()),
            ("signal_effective_seed".into(), self.truth_effective_seed.to_string()),
            ("imt_min_separation_hz".into(), c.imt.min_separation_hz.to_string()),
            ("imt_max_redraws".into(), c.imt.max_redraws.to_string()),
            ("window_sigma_s".into(), c.window_sigma_s.to_string()),
            ("window_len".into(), c.window_len.to_string()),
            ("hop".into(), c.lattice.hop.to_string()),
            ("n_fft".into(), c.lattice.n_fft.to_string()),
            ("conceft_J".into(), c.conceft_windows.to_string()),
            ("conceft_N".into(), c.conceft_realizations.to_string()),
            ("conceft_order".into(), format!("{:?}", c.conceft_order)),
            ("gamma_rel".into(), c.gamma_rel.to_string()),
            ("itfr_weight".into(), format!("{:?}", c.itfr_weight)),
            ("slice_policy".into(), format!("{:?}", c.slice_policy)),
            ("scalogram_wavelet".into(), format!("morlet omega0={}", MorletWavelet::default().omega0)),
            (
                "noise_seeds".into(),
                join(self.noise_seeds.iter().flatten().map(|x| x.to_string()).collect()),
            ),
            (
                "conceft_seeds".into(),
                join(self.conceft_seeds.iter().flatten().map(|x| x.to_string()).collect()),
            ),
        ]
    }
}
