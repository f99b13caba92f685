//! Plain-text file formats: signal CSV with a key-value sidecar, long-form
//! grid CSV, 8-bit PGM heatmaps, window CSV and key-value manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{Signal, TimeFrequencyGrid};
use crate::windows::WindowFamily;

/// Heatmap dynamic range below the grid maximum.
pub const PGM_FLOOR_DB: f64 = -80.0;

/// Sidecar path for a signal CSV: `<path>.meta`.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, v) in entries {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidParameter(format!("manifest entry `{k}` is not representable")));
        }
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `key=value` lines; blank lines and lines starting with `#` are ignored.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse(format!("{}:{}: expected key=value", path.display(), i + 1)))
        })
        .collect()
}

fn lookup<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Writes `time_s,real,imag` rows and a sidecar holding the sample rate,
/// time origin, realness and any `extra` entries (e.g. seed provenance).
pub fn write_signal_csv(path: &Path, signal: &Signal, extra: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time_s,real,imag")?;
    for (i, z) in signal.samples().iter().enumerate() {
        writeln!(w, "{},{},{}", signal.time_of(i), z.re, z.im)?;
    }
    w.flush()?;
    let mut meta = vec![
        ("sample_rate_hz".to_string(), signal.sample_rate_hz().to_string()),
        ("t0_s".to_string(), signal.t0_s().to_string()),
        ("real".to_string(), signal.is_real().to_string()),
        ("len".to_string(), signal.len().to_string()),
    ];
    meta.extend(extra.iter().cloned());
    write_manifest(&meta_path(path), &meta)
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{}:{line}: not a number: `{s}`", path.display())))
}

/// Reads a signal CSV. Sample rate and origin come from the sidecar when
/// present, otherwise from the time column; without a sidecar a signal is
/// real when every imaginary part is zero.
pub fn read_signal_csv(path: &Path) -> Result<Signal> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "time_s,real,imag" => {}
        _ => return Err(Error::Parse(format!("{}: expected header time_s,real,imag", path.display()))),
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!("{}:{}: expected 3 columns", path.display(), i + 1)));
        }
        times.push(parse_f64(cols[0], path, i + 1)?);
        samples.push(Complex64::new(parse_f64(cols[1], path, i + 1)?, parse_f64(cols[2], path, i + 1)?));
    }
    if samples.is_empty() {
        return Err(Error::InvalidSignal(format!("{}: no samples", path.display())));
    }
    let meta_file = meta_path(path);
    let meta = if meta_file.exists() { read_manifest(&meta_file)? } else { Vec::new() };
    let num = |key: &str| -> Result<Option<f64>> {
        lookup(&meta, key)
            .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("sidecar `{key}` is not a number"))))
            .transpose()
    };
    let fs_hz = match num("sample_rate_hz")? {
        Some(v) => v,
        None if times.len() >= 2 => 1.0 / ((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64),
        None => return Err(Error::Parse(format!("{}: sample rate unknown (no sidecar, one sample)", path.display()))),
    };
    let t0 = num("t0_s")?.unwrap_or(times[0]);
    let real = match lookup(&meta, "real") {
        Some(v) => v.trim() == "true",
        None => samples.iter().all(|z| z.im == 0.0),
    };
    if real {
        let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
        Signal::from_real(&re, fs_hz, t0)
    } else {
        Signal::new(samples, fs_hz, t0)
    }
}

/// Long-form `time_s,freq_hz,value`; complex grids are written as `|V|²`.
pub fn write_grid_csv(path: &Path, grid: &TimeFrequencyGrid) -> Result<()> {
    let p = grid.power_view();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time_s,freq_hz,value")?;
    for (i, t) in grid.times_s().iter().enumerate() {
        for (k, f) in grid.freqs_hz().iter().enumerate() {
            writeln!(w, "{t},{f},{}", p[[i, k]])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// 8-bit heatmap bytes: one row per frequency (highest first), one column
/// per frame, `10 log10(v / max)` mapped linearly from the floor to 0 dB.
/// An all-zero grid yields an all-black image.
pub fn pgm_bytes(grid: &TimeFrequencyGrid) -> Vec<u8> {
    let p = grid.power_view();
    let (nt, nf) = p.dim();
    let max = p.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{nt} {nf}\n255\n").into_bytes();
    for k in (0..nf).rev() {
        for i in 0..nt {
            let v = p[[i, k]];
            let level = if max > 0.0 && v > 0.0 {
                let db = (10.0 * (v / max).log10()).max(PGM_FLOOR_DB);
                (255.0 * (1.0 - db / PGM_FLOOR_DB)).round()
            } else {
                0.0
            };
            out.push(level as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, grid: &TimeFrequencyGrid) -> Result<()> {
    fs::write(path, pgm_bytes(grid))?;
    Ok(())
}

/// `time_s,window,h_re,h_im,dh_re,dh_im` for every window of the family.
pub fn write_window_csv(path: &Path, family: &WindowFamily) -> Result<()> {
    let t = family.times_s();
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time_s,window,h_re,h_im,dh_re,dh_im")?;
    for j in 0..family.count() {
        let s = family.set(j);
        for (n, &tn) in t.iter().enumerate() {
            writeln!(w, "{tn},{j},{},{},{},{}", s.h[n].re, s.h[n].im, s.dh[n].re, s.dh[n].im)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Two-column CSV with a header, e.g. an irregularity profile or an IF track.
pub fn write_columns_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() || columns.windows(2).any(|c| c[0].len() != c[1].len()) {
        return Err(Error::InvalidParameter("column CSV needs one header per column and equal lengths".into()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| c[i].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
