use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use conceft::bilinear::{cwd, spwv, wigner_ville, CohenConfig};
use conceft::eval::{run_benchmark, BenchmarkConfig, Method};
use conceft::imt::{ideal_tfr, three_component_signal_with, ImtConfig, ItfrWeight, SAMPLE_RATE_HZ};
use conceft::io::{read_manifest, read_signal_csv, write_columns_csv, write_grid_csv, write_manifest, write_pgm, write_signal_csv};
use conceft::linear::{scalogram_on, stft, Lattice, MorletWavelet};
use conceft::oae::{
    correlated_irregularity, synthesize_teoae, white_irregularity, CochlearMap, DEFAULT_DX_M, DEFAULT_FS_HZ,
    DEFAULT_N_FFT, DEFAULT_X_MAX_M,
};
use conceft::signal::{add_noise, add_noise_sigma, TimeFrequencyGrid};
use conceft::sst::{conceft, multitaper_sst, sst, ConceftConfig, SstConfig, SstOrder};
use conceft::windows::{default_length, gaussian_window, hermite_windows};

const GENERATOR: &str = concat!("conceft ", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug)]
#[command(name = "conceft", version, about = "ConceFT time-frequency analysis and OAE synthesis")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "CONCEFT_OUT_DIR", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a coherent-reflection TEOAE waveform.
    SynthOae(SynthOaeArgs),
    /// Generate the three-component test signal and its ideal TFR.
    SynthImt(SynthImtArgs),
    /// Compute a time-frequency representation of a signal CSV.
    Analyze(AnalyzeArgs),
    /// Score methods against the ideal TFR over noise realizations.
    Benchmark(BenchmarkArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SynthOaeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    sigma_eps: f64,
    /// Correlation length D in mm; 0 gives white irregularity.
    #[arg(long, default_value_t = 0.0)]
    corr_len_mm: f64,
    #[arg(long, default_value_t = 5.5)]
    l_over_lambda: f64,
    /// Δx/Λ, the width of the excitation envelope.
    #[arg(long, default_value_t = 0.5)]
    delta_x_ratio: f64,
    /// Add white noise at this SNR (dB).
    #[arg(long, conflicts_with = "noise_sigma")]
    noise_snr: Option<f64>,
    /// Add white noise with this per-sample standard deviation.
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Keep the complex r(t) instead of its real part.
    #[arg(long)]
    complex: bool,
    #[arg(long, default_value = "oae")]
    prefix: String,
}

#[derive(Args, Debug)]
struct SynthImtArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500.0)]
    min_separation_hz: f64,
    #[arg(long, default_value_t = 4)]
    hop: usize,
    #[arg(long, default_value_t = 1024)]
    n_fft: usize,
    #[arg(long)]
    squared_weight: bool,
    #[arg(long, default_value = "imt")]
    prefix: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AnalyzeMethod {
    Stft,
    Scalogram,
    Wv,
    Spwv,
    Cwd,
    Sst1,
    Sst2,
    Mt,
    Conceft,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Order {
    First,
    Second,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: AnalyzeMethod,
    /// Gaussian window σ in ms.
    #[arg(long, default_value_t = 5.0 / 12.0)]
    sigma_ms: f64,
    /// Window half-width in units of σ.
    #[arg(long, default_value_t = 8.0)]
    half_width: f64,
    #[arg(long = "J", default_value_t = 2)]
    j: usize,
    #[arg(long = "N", default_value_t = 30)]
    n: usize,
    /// Synchrosqueezing order inside mt and conceft.
    #[arg(long, value_enum, default_value = "second")]
    order: Order,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    gamma_rel: f64,
    #[arg(long, default_value_t = 4)]
    hop: usize,
    /// FFT size; defaults to the next power of two ≥ 4× the window length.
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,10,5,2,0")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    signal_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "scalogram,spwv,cwd,sst1,sst2,conceft")]
    methods: Vec<Method>,
    #[arg(long = "conceft-N", default_value_t = 30)]
    conceft_n: usize,
    #[arg(long, default_value_t = 4)]
    hop: usize,
    #[arg(long, default_value = "benchmark")]
    prefix: String,
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Manifest header shared by all commands: generator and the argument vector.
fn manifest_head(command: &str, argv: &[String]) -> Vec<(String, String)> {
    let mut m = vec![kv("generator", GENERATOR), kv("command", command), kv("argc", argv.len())];
    for (i, a) in argv.iter().enumerate() {
        m.push(kv(&format!("arg.{i}"), a));
    }
    m
}

fn synth_oae(out: &Path, a: &SynthOaeArgs, head: Vec<(String, String)>) -> Result<String> {
    let map = CochlearMap::standard().with_l_over_lambda(a.l_over_lambda)?.with_delta_x_over_lambda(a.delta_x_ratio)?;
    let profile = if a.corr_len_mm > 0.0 {
        correlated_irregularity(a.sigma_eps, a.corr_len_mm * 1e-3, DEFAULT_DX_M, DEFAULT_X_MAX_M, a.seed)?
    } else {
        white_irregularity(a.sigma_eps, DEFAULT_DX_M, DEFAULT_X_MAX_M, a.seed)?
    };
    let (_, r) = synthesize_teoae(&profile, &map)?;
    let mut r = if a.complex { r } else { r.to_real() };
    let mut noise = String::from("none");
    if let Some(snr) = a.noise_snr {
        let (noisy, rec) = add_noise(&r, snr, a.noise_seed)?;
        r = noisy;
        noise = format!("snr_db={snr} sigma={}", rec.sigma);
    } else if let Some(sigma) = a.noise_sigma {
        r = add_noise_sigma(&r, sigma, a.noise_seed)?.0;
        noise = format!("sigma={sigma}");
    }
    let sig_path = out.join(format!("{}_r.csv", a.prefix));
    let eps_path = out.join(format!("{}_irregularity.csv", a.prefix));
    let man_path = out.join(format!("{}_manifest.txt", a.prefix));
    let meta = vec![kv("irregularity_seed", a.seed), kv("noise_seed", a.noise_seed), kv("noise", &noise)];
    write_signal_csv(&sig_path, &r, &meta)?;
    let x: Vec<f64> = (0..profile.len()).map(|i| profile.x_m(i)).collect();
    write_columns_csv(&eps_path, &["x_m", "eps"], &[&x, &profile.eps])?;
    let mut m = head;
    m.extend([
        kv("l_m", map.l_m),
        kv("lambda_m", map.lambda_m),
        kv("delta_x_m", map.delta_x_m),
        kv("omega0_rad_s", map.omega0_rad_s),
        kv("dx_m", DEFAULT_DX_M),
        kv("x_max_m", DEFAULT_X_MAX_M),
        kv("sigma_eps", a.sigma_eps),
        kv("corr_len_m", profile.corr_len_m),
        kv("seed", a.seed),
        kv("n_fft", DEFAULT_N_FFT),
        kv("sample_rate_hz", DEFAULT_FS_HZ),
        kv("complex", a.complex),
        kv("noise", noise),
        kv("noise_seed", a.noise_seed),
    ]);
    write_manifest(&man_path, &m)?;
    Ok(format!("wrote {}, {}, {}", sig_path.display(), eps_path.display(), man_path.display()))
}

fn synth_imt(out: &Path, a: &SynthImtArgs, head: Vec<(String, String)>) -> Result<String> {
    let cfg = ImtConfig { min_separation_hz: a.min_separation_hz, ..ImtConfig::default() };
    let g = three_component_signal_with(a.seed, &cfg)?;
    let weight = if a.squared_weight { ItfrWeight::SquaredAmplitude } else { ItfrWeight::Amplitude };
    let lattice = Lattice { hop: a.hop, n_fft: a.n_fft };
    let itfr = ideal_tfr(&g.components, SAMPLE_RATE_HZ, lattice, weight)?;
    let p = |s: &str| out.join(format!("{}_{s}", a.prefix));
    write_signal_csv(&p("signal.csv"), &g.signal, &[kv("seed", a.seed), kv("effective_seed", g.effective_seed)])?;
    let t: Vec<f64> = (0..g.signal.len()).map(|i| g.signal.time_of(i)).collect();
    let mut cols: Vec<&[f64]> = vec![&t];
    let amps: Vec<Vec<f64>> = g.components.iter().map(|c| (0..t.len()).map(|n| c.amplitude(n)).collect()).collect();
    let mut header = vec!["time_s".to_string()];
    for (i, c) in g.components.iter().enumerate() {
        cols.push(&c.if_hz);
        cols.push(&amps[i]);
        header.push(format!("if{}_hz", i + 1));
        header.push(format!("am{}", i + 1));
    }
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_columns_csv(&p("components.csv"), &header, &cols)?;
    write_grid_csv(&p("itfr.csv"), &itfr)?;
    write_pgm(&p("itfr.pgm"), &itfr)?;
    let mut m = head;
    m.extend([
        kv("seed", a.seed),
        kv("effective_seed", g.effective_seed),
        kv("min_separation_hz", a.min_separation_hz),
        kv("realized_min_separation_hz", g.min_separation_hz),
        kv("edge_taper_ms", conceft::imt::EDGE_MS),
        kv("hop", a.hop),
        kv("n_fft", a.n_fft),
        kv("itfr_weight", format!("{weight:?}")),
    ]);
    write_manifest(&p("manifest.txt"), &m)?;
    Ok(format!("wrote {} files under {} (effective seed {})", 5, out.display(), g.effective_seed))
}

fn analyze(out: &Path, a: &AnalyzeArgs, head: Vec<(String, String)>) -> Result<String> {
    let signal = read_signal_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let fs = signal.sample_rate_hz();
    let sigma = a.sigma_ms * 1e-3;
    let len = default_length(sigma, fs, a.half_width);
    let lattice = Lattice { hop: a.hop, n_fft: a.n_fft.unwrap_or((4 * len).next_power_of_two()) };
    let order = match a.order {
        Order::First => SstOrder::First,
        Order::Second => SstOrder::Second,
    };
    let sst_cfg = |o| SstConfig { order: o, gamma_rel: a.gamma_rel, ..SstConfig::default() };
    let gauss = || gaussian_window(sigma, len, fs);
    let grid: TimeFrequencyGrid = match a.method {
        AnalyzeMethod::Stft => stft(&signal, &gauss()?, lattice)?,
        AnalyzeMethod::Scalogram => {
            scalogram_on(&signal, &lattice.freqs_hz(fs, signal.is_real()), lattice.hop, MorletWavelet::default())?
        }
        AnalyzeMethod::Wv => wigner_ville(&signal, lattice)?,
        AnalyzeMethod::Spwv => spwv(&signal, &CohenConfig::for_time_window(len), lattice)?,
        AnalyzeMethod::Cwd => cwd(&signal, &CohenConfig::for_time_window(len), lattice)?,
        AnalyzeMethod::Sst1 => sst(&signal, &gauss()?, &sst_cfg(SstOrder::First), lattice)?.grid,
        AnalyzeMethod::Sst2 => sst(&signal, &gauss()?, &sst_cfg(SstOrder::Second), lattice)?.grid,
        AnalyzeMethod::Mt => multitaper_sst(&signal, &hermite_windows(a.j, sigma, len, fs)?, &sst_cfg(order), lattice)?,
        AnalyzeMethod::Conceft => {
            let cfg = ConceftConfig { sst: sst_cfg(order), ..ConceftConfig::new(a.n, a.seed) };
            conceft(&signal, &hermite_windows(a.j, sigma, len, fs)?, &cfg, lattice)?
        }
    };
    let name = format!("{:?}", a.method).to_lowercase();
    let prefix = a.prefix.clone().unwrap_or_else(|| name.clone());
    let p = |s: &str| out.join(format!("{prefix}_{s}"));
    write_grid_csv(&p("grid.csv"), &grid)?;
    write_pgm(&p("heatmap.pgm"), &grid)?;
    let mut m = head;
    m.extend([
        kv("input", a.input.display()),
        kv("method", &name),
        kv("window_sigma_s", sigma),
        kv("window_len", len),
        kv("J", a.j),
        kv("N", a.n),
        kv("order", format!("{:?}", a.order)),
        kv("seed", a.seed),
        kv("gamma_rel", a.gamma_rel),
        kv("hop", lattice.hop),
        kv("n_fft", lattice.n_fft),
        kv("grid_kind", format!("{:?}", grid.kind())),
        kv("heatmap_floor_db", conceft::io::PGM_FLOOR_DB),
    ]);
    write_manifest(&p("manifest.txt"), &m)?;
    let (nt, nf) = grid.dim();
    Ok(format!("{name}: {nt}x{nf} grid written to {}", p("grid.csv").display()))
}

fn benchmark(out: &Path, a: &BenchmarkArgs, head: Vec<(String, String)>) -> Result<String> {
    let cfg = BenchmarkConfig {
        methods: a.methods.clone(),
        snr_db: a.snr.clone(),
        n_realizations: a.n,
        master_seed: a.seed,
        signal_seed: a.signal_seed,
        conceft_realizations: a.conceft_n,
        lattice: Lattice { hop: a.hop, n_fft: 1024 },
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&cfg)?;
    let p = |s: &str| out.join(format!("{}_{s}", a.prefix));
    std::fs::write(p("table.csv"), report.table_csv())?;
    std::fs::write(p("scores.csv"), report.long_csv())?;
    let mut m = head;
    m.push(kv("generator_signal", "three-component IMT"));
    m.extend(report.manifest());
    write_manifest(&p("manifest.txt"), &m)?;
    Ok(format!(
        "benchmark: {} SNRs x {} methods x {} realizations, table at {}",
        report.snr_db.len(),
        report.methods.len(),
        report.n_realizations,
        p("table.csv").display()
    ))
}

/// Reconstructs the argument vector stored by `manifest_head`.
fn replay_args(manifest: &Path) -> Result<Vec<String>> {
    let m = read_manifest(manifest)?;
    let get = |k: &str| m.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
    let argc: usize = get("argc").context("manifest has no argc entry")?.parse()?;
    (0..argc).map(|i| get(&format!("arg.{i}")).with_context(|| format!("manifest lacks arg.{i}"))).collect()
}

fn run(cli: Cli, argv: Vec<String>) -> Result<String> {
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let head = |name: &str| manifest_head(name, &argv);
    match &cli.command {
        Command::SynthOae(a) => synth_oae(&cli.out, a, head("synth-oae")),
        Command::SynthImt(a) => synth_imt(&cli.out, a, head("synth-imt")),
        Command::Analyze(a) => analyze(&cli.out, a, head("analyze")),
        Command::Benchmark(a) => benchmark(&cli.out, a, head("benchmark")),
        Command::Replay { manifest } => {
            let mut args = replay_args(manifest)?;
            if matches!(args.get(1).map(String::as_str), Some("replay")) {
                bail!("refusing to replay a replay manifest");
            }
            // the output directory of the replay wins over the recorded one
            args.retain(|a| !a.starts_with("--out="));
            args.push(format!("--out={}", cli.out.display()));
            let inner = Cli::try_parse_from(&args)?;
            run(inner, args)
        }
    }
}

/// Canonical argument vector with `--out` made explicit, so that manifests
/// replay to the same directory unless overridden.
fn canonical_argv(cli: &Cli) -> Vec<String> {
    let mut argv: Vec<String> = std::env::args().collect();
    if let Some(first) = argv.first_mut() {
        *first = "conceft".to_string();
    }
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if !a.starts_with("--out=") {
            out.push(a);
        }
    }
    out.push(format!("--out={}", cli.out.display()));
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                let _ = e.print();
            } else {
                // help and version go to stdout
                print!("{e}");
            }
            return ExitCode::from(code);
        }
    };
    let argv = canonical_argv(&cli);
    match run(cli, argv) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

