//! Analysis window families.
//!
//! A [`WindowFamily`] carries, for each window `h`, the four companions the
//! reassignment rules need: the derivative `Dh`, the second derivative `DDh`,
//! the time-weighted window `Th = t h`, and `TDh`, the derivative of `Th`
//! (`h + t Dh`). All companions are evaluated analytically on the sample grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFamily {
    length: usize,
    sample_rate_hz: f64,
    sigma_s: f64,
    windows: Vec<Vec<Complex64>>,
    d_windows: Vec<Vec<Complex64>>,
    dd_windows: Vec<Vec<Complex64>>,
    t_windows: Vec<Vec<Complex64>>,
    td_windows: Vec<Vec<Complex64>>,
}

/// One window with its companions, borrowed from a family.
#[derive(Debug, Clone, Copy)]
pub struct WindowSet<'a> {
    pub h: &'a [Complex64],
    pub dh: &'a [Complex64],
    pub ddh: &'a [Complex64],
    pub th: &'a [Complex64],
    pub tdh: &'a [Complex64],
}

impl WindowFamily {
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn half_len(&self) -> usize {
        (self.length - 1) / 2
    }

    /// Number of windows `J`.
    pub fn count(&self) -> usize {
        self.windows.len()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    /// Centered time axis in seconds.
    pub fn times_s(&self) -> Vec<f64> {
        let half = self.half_len() as isize;
        (-half..=half).map(|k| k as f64 / self.sample_rate_hz).collect()
    }

    pub fn windows(&self) -> &[Vec<Complex64>] {
        &self.windows
    }
    pub fn d_windows(&self) -> &[Vec<Complex64>] {
        &self.d_windows
    }
    pub fn dd_windows(&self) -> &[Vec<Complex64>] {
        &self.dd_windows
    }
    pub fn t_windows(&self) -> &[Vec<Complex64>] {
        &self.t_windows
    }
    pub fn td_windows(&self) -> &[Vec<Complex64>] {
        &self.td_windows
    }

    pub fn set(&self, j: usize) -> WindowSet<'_> {
        WindowSet {
            h: &self.windows[j],
            dh: &self.d_windows[j],
            ddh: &self.dd_windows[j],
            th: &self.t_windows[j],
            tdh: &self.td_windows[j],
        }
    }

    /// Restricts the family to its `j`-th window.
    pub fn single(&self, j: usize) -> Result<WindowFamily> {
        if j >= self.count() {
            return Err(Error::InvalidParameter(format!("window index {j} out of range")));
        }
        Ok(WindowFamily {
            windows: vec![self.windows[j].clone()],
            d_windows: vec![self.d_windows[j].clone()],
            dd_windows: vec![self.dd_windows[j].clone()],
            t_windows: vec![self.t_windows[j].clone()],
            td_windows: vec![self.td_windows[j].clone()],
            ..self.clone()
        })
    }

    /// Discrete inner product `sum a conj(b) dt` between windows `i` and `j`.
    pub fn inner(&self, i: usize, j: usize) -> Complex64 {
        let dt = 1.0 / self.sample_rate_hz;
        self.windows[i].iter().zip(&self.windows[j]).map(|(a, b)| a * b.conj()).sum::<Complex64>() * dt
    }

    pub fn l2_norm(&self, j: usize) -> f64 {
        self.inner(j, j).re.sqrt()
    }
}

/// Odd length covering `±half_width_sigmas · σ`.
pub fn default_length(sigma_s: f64, sample_rate_hz: f64, half_width_sigmas: f64) -> usize {
    let half = (half_width_sigmas * sigma_s * sample_rate_hz).ceil() as usize;
    2 * half + 1
}

fn check_geometry(sigma_s: f64, length: usize, fs: f64) -> Result<()> {
    if !(sigma_s > 0.0 && sigma_s.is_finite()) {
        return Err(Error::InvalidParameter(format!("window sigma must be positive, got {sigma_s}")));
    }
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidParameter(format!("sample rate must be positive, got {fs}")));
    }
    if length % 2 == 0 || length == 0 {
        return Err(Error::InvalidParameter(format!("window length must be odd, got {length}")));
    }
    let half_s = ((length - 1) / 2) as f64 / fs;
    if half_s < 4.0 * sigma_s {
        return Err(Error::WindowTruncation(format!(
            "{length} samples cover ±{:.3} ms, need ±4σ = ±{:.3} ms",
            half_s * 1e3,
            4e3 * sigma_s
        )));
    }
    Ok(())
}

fn real_vec(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Gaussian window `(2πσ)^(-1/2) exp(-t²/2σ²)`, L²-normalized on the sample grid.
pub fn gaussian_window(sigma_s: f64, length: usize, sample_rate_hz: f64) -> Result<WindowFamily> {
    hermite_windows(1, sigma_s, length, sample_rate_hz)
}

/// Normalized Hermite functions `ψ_n(x)` for `n < count` and their first two
/// x-derivatives, via the three-term recurrence.
fn hermite_functions(x: f64, count: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut psi = Vec::with_capacity(count + 1);
    psi.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if count >= 1 {
        psi.push(std::f64::consts::SQRT_2 * x * psi[0]);
    }
    for n in 1..count {
        let next = (2.0 / (n as f64 + 1.0)).sqrt() * x * psi[n]
            - (n as f64 / (n as f64 + 1.0)).sqrt() * psi[n - 1];
        psi.push(next);
    }
    let d: Vec<f64> = (0..count)
        .map(|n| {
            let lower = if n > 0 { (n as f64 / 2.0).sqrt() * psi[n - 1] } else { 0.0 };
            lower - ((n as f64 + 1.0) / 2.0).sqrt() * psi[n + 1]
        })
        .collect();
    let dd: Vec<f64> = (0..count).map(|n| (x * x - 2.0 * n as f64 - 1.0) * psi[n]).collect();
    psi.truncate(count);
    (psi, d, dd)
}

/// First `count` Hermite windows sharing dilation `σ`, orthonormalized on the
/// sample grid (Gram-Schmidt in index order). Window 1 is the Gaussian.
pub fn hermite_windows(count: usize, sigma_s: f64, length: usize, sample_rate_hz: f64) -> Result<WindowFamily> {
    if !(1..=6).contains(&count) {
        return Err(Error::InvalidParameter(format!("Hermite family size must be 1..=6, got {count}")));
    }
    check_geometry(sigma_s, length, sample_rate_hz)?;
    let fs = sample_rate_hz;
    let dt = 1.0 / fs;
    let half = ((length - 1) / 2) as isize;
    let times: Vec<f64> = (-half..=half).map(|k| k as f64 / fs).collect();

    // raw[n][k], with t-derivatives
    let mut raw = vec![vec![0.0; length]; count];
    let mut raw_d = vec![vec![0.0; length]; count];
    let mut raw_dd = vec![vec![0.0; length]; count];
    for (k, &t) in times.iter().enumerate() {
        let (p, d, dd) = hermite_functions(t / sigma_s, count);
        for n in 0..count {
            raw[n][k] = p[n];
            raw_d[n][k] = d[n] / sigma_s;
            raw_dd[n][k] = dd[n] / (sigma_s * sigma_s);
        }
    }

    // Gram-Schmidt, tracking the lower-triangular map from raw to orthonormal.
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dt;
    let mut coef: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(count);
    for n in 0..count {
        let mut v = raw[n].clone();
        let mut c = vec![0.0; count];
        c[n] = 1.0;
        // two passes
        for _ in 0..2 {
            for m in 0..ortho.len() {
                let proj = dot(&v, &ortho[m]);
                for (vk, ok) in v.iter_mut().zip(&ortho[m]) {
                    *vk -= proj * ok;
                }
                for (ci, cm) in c.iter_mut().zip(&coef[m]) {
                    *ci -= proj * cm;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        c.iter_mut().for_each(|x| *x /= norm);
        ortho.push(v);
        coef.push(c);
    }

    let apply = |src: &[Vec<f64>], c: &[f64]| -> Vec<f64> {
        (0..length).map(|k| c.iter().zip(src).map(|(cm, s)| cm * s[k]).sum()).collect()
    };
    let mut fam = WindowFamily {
        length,
        sample_rate_hz: fs,
        sigma_s,
        windows: Vec::new(),
        d_windows: Vec::new(),
        dd_windows: Vec::new(),
        t_windows: Vec::new(),
        td_windows: Vec::new(),
    };
    for n in 0..count {
        let h = &ortho[n];
        let dh = apply(&raw_d, &coef[n]);
        let ddh = apply(&raw_dd, &coef[n]);
        let th: Vec<f64> = times.iter().zip(h).map(|(t, v)| t * v).collect();
        let tdh: Vec<f64> = (0..length).map(|k| h[k] + times[k] * dh[k]).collect();
        fam.windows.push(real_vec(h));
        fam.d_windows.push(real_vec(&dh));
        fam.dd_windows.push(real_vec(&ddh));
        fam.t_windows.push(real_vec(&th));
        fam.td_windows.push(real_vec(&tdh));
    }
    Ok(fam)
}

/// A point on the unit sphere of `C^J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSample {
    pub coefficients: Vec<Complex64>,
    pub seed: u64,
}

impl SphereSample {
    /// The `j`-th standard basis vector.
    pub fn unit(dim: usize, j: usize) -> SphereSample {
        let mut coefficients = vec![Complex64::new(0.0, 0.0); dim];
        coefficients[j] = Complex64::new(1.0, 0.0);
        SphereSample { coefficients, seed: 0 }
    }

    pub fn norm(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Uniform sample on the unit sphere in `C^J` from `2J` standard normals.
pub fn sample_sphere(dim: usize, seed: u64) -> Result<SphereSample> {
    if dim == 0 {
        return Err(Error::InvalidParameter("sphere dimension must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    loop {
        let coefficients: Vec<Complex64> = (0..dim).map(|_| Complex64::new(rng.normal(), rng.normal())).collect();
        let norm = coefficients.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return Ok(SphereSample { coefficients: coefficients.into_iter().map(|z| z / norm).collect(), seed });
        }
    }
}

/// `h = Σ_j conj(r_j) h_j`, applied alike to every companion.
pub fn combine(family: &WindowFamily, r: &SphereSample) -> Result<WindowFamily> {
    if r.coefficients.len() != family.count() {
        return Err(Error::InvalidParameter(format!(
            "sphere sample has dimension {}, family has {} windows",
            r.coefficients.len(),
            family.count()
        )));
    }
    let mix = |src: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); family.length];
        for (rj, w) in r.coefficients.iter().zip(src) {
            let c = rj.conj();
            for (o, v) in out.iter_mut().zip(w) {
                *o += c * v;
            }
        }
        vec![out]
    };
    Ok(WindowFamily {
        length: family.length,
        sample_rate_hz: family.sample_rate_hz,
        sigma_s: family.sigma_s,
        windows: mix(&family.windows),
        d_windows: mix(&family.d_windows),
        dd_windows: mix(&family.dd_windows),
        t_windows: mix(&family.t_windows),
        td_windows: mix(&family.td_windows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 32_000.0;
    const SIGMA: f64 = 5e-3 / 12.0;

    fn fam(j: usize) -> WindowFamily {
        hermite_windows(j, SIGMA, default_length(SIGMA, FS, 8.0), FS).unwrap()
    }

    #[test]
    fn truncation_and_parity_errors() {
        assert!(matches!(gaussian_window(SIGMA, 21, FS), Err(Error::WindowTruncation(_))));
        assert!(gaussian_window(SIGMA, 200, FS).is_err());
        assert!(hermite_windows(0, SIGMA, 215, FS).is_err());
        assert!(hermite_windows(7, SIGMA, 215, FS).is_err());
    }

    #[test]
    fn gaussian_is_normalized_and_first_hermite() {
        let g = gaussian_window(SIGMA, 215, FS).unwrap();
        assert!((g.l2_norm(0) - 1.0).abs() < 1e-12);
        let h = fam(3);
        for (a, b) in g.windows()[0].iter().zip(&h.windows()[0]) {
            assert!((a - b).norm() < 1e-12);
        }
        // proportional to the closed-form Gaussian
        let t = g.times_s();
        let raw: Vec<f64> = t.iter().map(|t| (-t * t / (2.0 * SIGMA * SIGMA)).exp()).collect();
        let k = g.windows()[0][107].re / raw[107];
        for (w, r) in g.windows()[0].iter().zip(&raw) {
            assert!((w.re - k * r).abs() < 1e-12 * k);
        }
    }

    #[test]
    fn family_is_orthonormal() {
        for j in 1..=6 {
            let f = fam(j);
            for a in 0..j {
                for b in 0..j {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((f.inner(a, b) - expect).norm() < 1e-8, "J={j} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn parity_alternates() {
        let f = fam(6);
        let n = f.len();
        for j in 0..6 {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            for k in 0..n {
                let a = f.windows()[j][k].re;
                let b = f.windows()[j][n - 1 - k].re;
                assert!((a - sign * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn time_weighted_companions_are_exact() {
        let f = fam(3);
        let t = f.times_s();
        for j in 0..3 {
            for k in 0..f.len() {
                assert_eq!(f.t_windows()[j][k], f.windows()[j][k] * t[k]);
                let td = f.windows()[j][k] + f.d_windows()[j][k] * t[k];
                assert!((f.td_windows()[j][k] - td).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_samples_are_unit() {
        let a = sample_sphere(3, 0).unwrap();
        let b = sample_sphere(3, 1).unwrap();
        assert_ne!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
        assert!((sample_sphere(1, 5).unwrap().coefficients[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(sample_sphere(2, 11).unwrap(), sample_sphere(2, 11).unwrap());
        assert!(sample_sphere(0, 1).is_err());
    }

    #[test]
    fn sphere_mean_is_centered() {
        let n = 100_000;
        let mut acc = [Complex64::new(0.0, 0.0); 2];
        for s in 0..n {
            let r = sample_sphere(2, s as u64).unwrap();
            acc[0] += r.coefficients[0];
            acc[1] += r.coefficients[1];
        }
        for a in acc {
            let m = a / n as f64;
            assert!(m.re.abs() < 0.02 && m.im.abs() < 0.02);
        }
    }

    #[test]
    fn combine_unit_vectors_and_norm() {
        let f = fam(3);
        let c1 = combine(&f, &SphereSample::unit(3, 0)).unwrap();
        assert_eq!(c1, f.single(0).unwrap());
        let c2 = combine(&f, &SphereSample::unit(3, 1)).unwrap();
        assert_eq!(c2.windows()[0], f.windows()[1]);
        for seed in 0..20 {
            let r = sample_sphere(3, seed).unwrap();
            let c = combine(&f, &r).unwrap();
            assert!((c.l2_norm(0) - 1.0).abs() < 1e-10);
        }
        assert!(combine(&f, &SphereSample::unit(2, 0)).is_err());
    }
}
