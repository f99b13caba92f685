//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails that is not listed in
//! `KNOWN_FAILURES` (see the README for those).

use std::f64::consts::PI;
use std::time::Instant;

use conceft::eval::{normalize_slice, otd, run_benchmark, BenchmarkConfig, Method, SliceMeasure};
use conceft::imt::three_component_signal;
use conceft::linear::{stft_family, Lattice};
use conceft::oae::*;
use conceft::rng::SeededRng;
use conceft::signal::{add_noise, Signal};
use conceft::sst::*;
use conceft::windows::*;
use num_complex::Complex64;

const FS: f64 = 32_000.0;
const SIGMA: f64 = 5e-3 / 12.0;

/// Criteria expected to fail; each is explained in the README.
const KNOWN_FAILURES: &[u32] = &[10];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn rel_l2_c(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    row.enumerate().fold((0, f64::MIN), |b, (k, v)| if v > b.1 { (k, v) } else { b }).0
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Eighth-order centered first difference at interior points.
fn fd8(x: &[f64], dt: f64) -> Vec<Option<f64>> {
    const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    (0..x.len())
        .map(|i| {
            (i >= 4 && i + 4 < x.len())
                .then(|| (1..=4).map(|m| C[m - 1] * (x[i + m] - x[i - m])).sum::<f64>() / dt)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut worst_ortho: f64 = 0.0;
    for j in 1..=6 {
        let f = hermite_windows(j, SIGMA, default_length(SIGMA, FS, 8.0), FS).unwrap();
        for a in 0..j {
            for b in 0..j {
                let e = if a == b { 1.0 } else { 0.0 };
                worst_ortho = worst_ortho.max((f.inner(a, b) - e).norm());
            }
        }
    }
    // Derivatives on an 8x oversampled grid of the same analytic windows.
    let fs = 8.0 * FS;
    let f = hermite_windows(6, SIGMA, default_length(SIGMA, fs, 8.0), fs).unwrap();
    let mut worst_d: f64 = 0.0;
    for j in 0..6 {
        let pairs = [(&f.windows()[j], &f.d_windows()[j]), (&f.d_windows()[j], &f.dd_windows()[j])];
        for (x, dx) in pairs {
            let re: Vec<f64> = x.iter().map(|z| z.re).collect();
            let fd = fd8(&re, 1.0 / fs);
            let (a, b): (Vec<f64>, Vec<f64>) =
                fd.iter().zip(dx.iter()).filter_map(|(f, d)| f.map(|f| (d.re, f))).unzip();
            worst_d = worst_d.max(rel_l2(&a, &b));
        }
    }
    outcome(
        worst_ortho < 1e-8 && worst_d < 1e-6,
        format!("max |<h_a,h_b>-δ| = {worst_ortho:.2e} (≤1e-8), max derivative rel L2 = {worst_d:.2e} (≤1e-6)"),
    )
}

fn window() -> WindowFamily {
    gaussian_window(SIGMA, default_length(SIGMA, FS, 8.0), FS).unwrap()
}

/// Median and max absolute ridge error (bins) of a Gaussian-enveloped linear chirp.
fn chirp_ridge_errors(rate: f64, cfg: &SstConfig) -> (f64, f64) {
    let w = window();
    let lat = Lattice::for_window(w.len()).with_hop(4);
    let n = 1024;
    let tc = n as f64 / FS / 2.0;
    let (f0, env) = (8000.0, 6e-3);
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / FS - tc;
            (-(t * t) / (2.0 * env * env)).exp() * (2.0 * PI * (f0 * t + 0.5 * rate * t * t)).cos()
        })
        .collect();
    let s = sst(&Signal::from_real(&x, FS, 0.0).unwrap(), &w, cfg, lat).unwrap();
    let p = s.grid.power_view();
    let mut errs = Vec::new();
    for (i, &t) in s.grid.times_s().iter().enumerate() {
        let tt = t - tc;
        let f = f0 + rate * tt;
        if s.grid.boundary()[i] || tt.abs() > 2.0 * env || !(500.0..15_500.0).contains(&f) {
            continue;
        }
        let k = argmax(p.row(i).iter().copied());
        errs.push((s.grid.freqs_hz()[k] - f).abs() / lat.bin_width(FS));
    }
    let max = errs.iter().cloned().fold(0.0, f64::max);
    (median(errs), max)
}

fn criterion_2() -> Outcome {
    let w = window();
    let lat = Lattice::for_window(w.len()).with_hop(4);
    let f0 = 3000.0;
    let x: Vec<f64> = (0..1024).map(|i| (2.0 * PI * f0 * i as f64 / FS).cos()).collect();
    let tone = Signal::from_real(&x, FS, 0.0).unwrap();
    let mut worst_tone: f64 = 1.0;
    for cfg in [SstConfig::first_order(), SstConfig::default()] {
        let s = sst(&tone, &w, &cfg, lat).unwrap();
        let p = s.grid.power_view();
        let k0 = (f0 / lat.bin_width(FS)).round() as usize;
        for i in (0..p.nrows()).filter(|&i| !s.grid.boundary()[i]) {
            let total: f64 = p.row(i).sum();
            let near: f64 = (k0 - 1..=k0 + 1).map(|k| p[[i, k]]).sum();
            worst_tone = worst_tone.min(near / total);
        }
    }
    let (_, slow_max) = chirp_ridge_errors(4e5, &SstConfig::default());
    let (fast_2, _) = chirp_ridge_errors(4e6, &SstConfig::default());
    let (fast_1, _) = chirp_ridge_errors(4e6, &SstConfig::first_order());
    outcome(
        worst_tone >= 0.99 && slow_max <= 1.0 && fast_2 < fast_1,
        format!(
            "tone mass within ±1 bin ≥ {worst_tone:.4} (≥0.99); 2nd-order ridge at 4e5 Hz/s max {slow_max:.2} bins (≤1); \
             at 4e6 Hz/s median 2nd {fast_2:.2} vs 1st {fast_1:.2} bins"
        ),
    )
}

fn criterion_3() -> Outcome {
    let w = window();
    let lat = Lattice::for_window(w.len()).with_hop(2);
    let chirp: Vec<f64> = (0..1200)
        .map(|i| {
            let t = i as f64 / FS;
            (2.0 * PI * (1500.0 * t + 4e4 * t * t)).cos() + 0.3 * (2.0 * PI * 5000.0 * t).sin()
        })
        .collect();
    let chirp = Signal::from_real(&chirp, FS, 0.0).unwrap();
    let imt = three_component_signal(3).unwrap().signal;
    let (noisy, _) = add_noise(&imt, 0.0, 11).unwrap();
    let mut rng = SeededRng::new(5);
    let cnoise = Signal::new(
        (0..1024).map(|_| Complex64::new(rng.normal(), rng.normal())).collect(),
        FS,
        0.0,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    let mut oob_in_band: f64 = 0.0;
    for (name, sig) in [("chirp", &chirp), ("imt", &imt), ("imt0dB", &noisy), ("complex noise", &cnoise)] {
        for order in [SstOrder::First, SstOrder::Second] {
            for deposit in [Deposit::Nearest, Deposit::Linear] {
                let cfg = SstConfig { order, deposit, ..SstConfig::default() };
                let fam = stft_family(sig, &w, lat).unwrap();
                let field = reassign(&fam, &cfg);
                let out = synchrosqueeze(&fam, &field, fam.freqs_hz(), deposit).unwrap();
                let masses = slice_mass(&out.grid);
                let vh = fam.v_h.complex().unwrap();
                let (f0, d, nb) = (fam.freqs_hz()[0], fam.bin_width(), fam.freqs_hz().len() as f64);
                for (i, m) in masses.iter().enumerate() {
                    let expect: Complex64 = (0..vh.ncols())
                        .filter(|&k| {
                            let p = (field.omega[[i, k]] - f0) / d;
                            field.valid[[i, k]] && p >= -0.5 && p < nb - 0.5
                        })
                        .map(|k| vh[[i, k]] * d)
                        .sum();
                    let scale = vh.row(i).iter().map(|z| z.norm() * d).sum::<f64>().max(1e-300);
                    worst = worst.max((m - expect).norm() / scale);
                }
                // broadband noise legitimately reassigns outside the axis
                if name == "chirp" || name == "imt" {
                    oob_in_band = oob_in_band.max(out.stats.out_of_band_fraction());
                }
            }
        }
    }
    outcome(
        worst <= 1e-10 && oob_in_band < 0.01,
        format!("max per-slice mass error {worst:.2e} (≤1e-10, relative to Σ|V|Δν); max out-of-band fraction on the noiseless in-band signals {oob_in_band:.2e} (<1%)"),
    )
}

fn criterion_4() -> Outcome {
    let fam = hermite_windows(2, SIGMA, default_length(SIGMA, FS, 8.0), FS).unwrap();
    let lat = Lattice::for_window(fam.len()).with_hop(8);
    let (sig, _) = add_noise(&three_component_signal(4).unwrap().signal, 5.0, 21).unwrap();
    let rw = random_window_spectrogram(&sig, &fam, 2000, 77, lat).unwrap();
    let mt = multitaper_spectrogram(&sig, &fam, lat).unwrap();
    let a: Vec<f64> = rw.real().unwrap().iter().copied().collect();
    let b: Vec<f64> = mt.real().unwrap().iter().copied().collect();
    let c = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / b.iter().map(|y| y * y).sum::<f64>();
    let scaled: Vec<f64> = b.iter().map(|y| c * y).collect();
    let e = rel_l2(&scaled, &a);
    outcome(e < 0.02 && c > 0.0, format!("J=2, N=2000: fitted scalar {c:.4}, relative L2 {e:.4} (<0.02)"))
}

fn criterion_5() -> Outcome {
    let map = CochlearMap::standard();
    let omegas = band_omegas(DEFAULT_N_FFT, DEFAULT_FS_HZ, DEFAULT_BAND_HZ);
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let p = white_irregularity(0.05, DEFAULT_DX_M, DEFAULT_X_MAX_M, 100 + seed).unwrap();
        let a = reflectance(&p, &map, &omegas).unwrap();
        let b = reflectance_wavenumber(&p, &map, &omegas).unwrap();
        worst = worst.max(rel_l2_c(&a.values, &b.values));
    }
    let p = correlated_irregularity(0.05, 0.2e-3, DEFAULT_DX_M, DEFAULT_X_MAX_M, 9).unwrap();
    let a = reflectance(&p, &map, &omegas).unwrap();
    let b = reflectance_wavenumber(&p, &map, &omegas).unwrap();
    worst = worst.max(rel_l2_c(&a.values, &b.values));
    outcome(worst < 1e-6, format!("direct vs wavenumber form, 6 profiles over 0.2-16 kHz: max relative L2 {worst:.2e} (<1e-6)"))
}

fn criterion_6() -> Outcome {
    let map = CochlearMap::standard();
    let omegas = band_omegas(DEFAULT_N_FFT, DEFAULT_FS_HZ, DEFAULT_BAND_HZ);
    let freqs = [1000.0, 2000.0, 4000.0];
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for s in 0..1000 {
        let p = white_irregularity(0.05, DEFAULT_DX_M, DEFAULT_X_MAX_M, 1000 + s).unwrap();
        let spec = reflectance(&p, &map, &omegas).unwrap();
        for (i, f) in freqs.iter().enumerate() {
            if let Some(d) = phase_gradient_delay(&spec, 2.0 * PI * f) {
                sums[i] += d;
                counts[i] += 1;
            }
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, f) in freqs.iter().enumerate() {
        let m = sums[i] / counts[i] as f64;
        let e = expected_group_delay(2.0 * PI * f, &map).unwrap();
        let rel = m / e - 1.0;
        pass &= rel.abs() < 0.05 && counts[i] >= 200;
        parts.push(format!("{} kHz {:.3} vs {:.3} ms ({:+.1}%, n={})", f / 1000.0, m * 1e3, e * 1e3, 100.0 * rel, counts[i]));
    }
    outcome(pass, format!("{} (within 5%)", parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let map = CochlearMap::standard();
    let w = window();
    let lat = Lattice::for_window(w.len()).with_hop(4);
    let mut pooled = Vec::new();
    let mut per_seed_ok = 0;
    let n_seeds = 20;
    for s in 0..n_seeds {
        let p = white_irregularity(0.05, DEFAULT_DX_M, DEFAULT_X_MAX_M, 7000 + s).unwrap();
        let (_, r) = synthesize_teoae(&p, &map).unwrap();
        let sig = Signal::from_real(&r.real_part()[..1024], FS, 0.0).unwrap();
        let out = sst(&sig, &w, &SstConfig::default(), lat).unwrap();
        let pw = out.grid.power_view();
        let mut ratios = Vec::new();
        for (i, &t) in out.grid.times_s().iter().enumerate() {
            if !(3e-3..=8e-3).contains(&t) {
                continue;
            }
            let k = argmax(pw.row(i).iter().copied());
            ratios.push(out.grid.freqs_hz()[k] / expected_if(t, &map).unwrap());
        }
        pooled.extend_from_slice(&ratios);
        if (median(ratios) - 1.0).abs() <= 0.1 {
            per_seed_ok += 1;
        }
    }
    let m = median(pooled);
    outcome(
        (m - 1.0).abs() <= 0.1,
        format!("median ridge/(11.0/t) over {n_seeds} seeds × t∈[3,8] ms = {m:.3} (within ±10%); per-seed medians within ±10%: {per_seed_ok}/{n_seeds}"),
    )
}

fn criterion_8() -> Outcome {
    let m57 = CochlearMap::standard().with_l_over_lambda(5.7).unwrap();
    let mut wins = 0;
    for s in 0..50 {
        let p = white_irregularity(0.05, DEFAULT_DX_M, DEFAULT_X_MAX_M, 5000 + s).unwrap();
        let e05 = two_tone_burst_experiment(&m57, &p, 0.5).unwrap().rel_err_l2;
        let e2 = two_tone_burst_experiment(&m57, &p, 2.0).unwrap().rel_err_l2;
        if e2 < e05 {
            wins += 1;
        }
    }
    let tau = expected_group_delay(2.0 * PI * 4000.0, &m57).unwrap();
    outcome(
        wins >= 45 && (tau - 2.85e-3).abs() < 1e-12,
        format!("error(Δx/Λ=2) < error(Δx/Λ=0.5) in {wins}/50 seeds (≥45); 4 kHz delay {:.6} ms (2.85)", tau * 1e3),
    )
}

fn random_measure(rng: &mut SeededRng, freqs: &[f64]) -> SliceMeasure {
    let v: Vec<f64> = freqs.iter().map(|_| rng.normal().abs().powi(3)).collect();
    normalize_slice(&v, freqs)
}

fn criterion_9() -> Outcome {
    let freqs: Vec<f64> = (0..257).map(|k| k as f64 * 31.25).collect();
    let mut rng = SeededRng::new(2024);
    let mut dirac_err: f64 = 0.0;
    let mut ident: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut tri: f64 = 0.0;
    let mut nonneg = true;
    for _ in 0..1000 {
        let a = (rng.normal().abs() * 80.0) as usize % freqs.len();
        let b = (rng.normal().abs() * 80.0) as usize % freqs.len();
        let delta = |k: usize| {
            let mut v = vec![0.0; freqs.len()];
            v[k] = 1.0;
            normalize_slice(&v, &freqs)
        };
        dirac_err = dirac_err.max((otd(&delta(a), &delta(b)).unwrap() - (freqs[a] - freqs[b]).abs()).abs());
        let mu = random_measure(&mut rng, &freqs);
        let nu = random_measure(&mut rng, &freqs);
        let xi = random_measure(&mut rng, &freqs);
        let d_mn = otd(&mu, &nu).unwrap();
        ident = ident.max(otd(&mu, &mu).unwrap());
        sym = sym.max((d_mn - otd(&nu, &mu).unwrap()).abs());
        tri = tri.max(d_mn - otd(&mu, &xi).unwrap() - otd(&xi, &nu).unwrap());
        nonneg &= d_mn >= 0.0;
    }
    outcome(
        dirac_err <= 1e-9 && ident <= 1e-9 && sym <= 1e-9 && tri <= 1e-9 && nonneg,
        format!(
            "1000 pairs: Dirac error {dirac_err:.1e}, identity {ident:.1e}, symmetry {sym:.1e}, triangle excess {:.1e} (all ≤1e-9)",
            tri.max(0.0)
        ),
    )
}

fn criterion_10() -> Outcome {
    let cfg = BenchmarkConfig::default();
    let report = run_benchmark(&cfg).unwrap();
    println!("    Table (mean OTD in kHz, std in parentheses; {} realizations):", cfg.n_realizations);
    for line in report.table_csv().lines() {
        println!("    {line}");
    }
    let mut a_ok = true;
    let mut b_ok = true;
    let mut improvements = Vec::new();
    for snr in [10.0, 5.0, 2.0, 0.0] {
        let m = |x| report.mean(snr, x).unwrap();
        let best = [Method::Scalogram, Method::Spwv, Method::Cwd].iter().map(|&x| m(x)).fold(f64::MAX, f64::min);
        a_ok &= m(Method::Conceft) <= m(Method::Sst1) && m(Method::Sst1) <= best;
        let imp = 1.0 - m(Method::Conceft) / best;
        b_ok &= (0.05..=0.30).contains(&imp);
        improvements.push(format!("{snr} dB {:.1}%", 100.0 * imp));
    }
    let (s1, cf) = (report.mean(100.0, Method::Sst1).unwrap(), report.mean(100.0, Method::Conceft).unwrap());
    let c_ok = s1 < cf;
    outcome(
        a_ok && b_ok && c_ok,
        format!(
            "(a) ConceFT ≤ 1st-SST ≤ baselines: {}; (b) improvement over best baseline {} in [5,30]%: {}; \
             (c) 100 dB 1st-SST {s1:.3} < ConceFT {cf:.3}: {}",
            yes(a_ok),
            improvements.join(", "),
            yes(b_ok),
            yes(c_ok)
        ),
    )
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "window suite", criterion_1),
        (2, "tone/chirp oracles", criterion_2),
        (3, "mass conservation", criterion_3),
        (4, "spectrogram collapse", criterion_4),
        (5, "coherent-reflection oracle agreement", criterion_5),
        (6, "mean group delay", criterion_6),
        (7, "EIF ridge", criterion_7),
        (8, "two-tone-burst approximation", criterion_8),
        (9, "OTD metric suite", criterion_9),
        (10, "benchmark orderings", criterion_10),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {id:>2} {name} ({:.1} s): {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
        if o.pass && KNOWN_FAILURES.contains(&id) {
            println!("    note: criterion {id} is listed as a known failure but passed");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

