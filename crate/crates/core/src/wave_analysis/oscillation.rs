use super::{mean_profile, AnalysisError};
use crate::grid_field::{w_transform, ScalarField2D};
use serde::{Deserialize, Serialize};

/// Least-squares fit `log y = log C + k log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub constant: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// RMS of the log residuals.
    pub log_rms: f64,
}

/// `|w_n(x)|`, `n = 1..`, of `w = m²/(m+1) p^{(m+1)/m}` on one x-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierLine {
    pub x: f64,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    /// Distance from the chosen origin.
    pub x: Vec<f64>,
    /// `O(x) = max_y p − min_y p`.
    pub o: Vec<f64>,
    pub mean: Vec<f64>,
    pub fit: Option<PowerFit>,
    pub fourier: Vec<FourierLine>,
}

impl OscillationProfile {
    /// Largest `|O(x_{i+1}) − O(x_i)| / h`.
    pub fn lipschitz(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.o.windows(2))
            .map(|(x, o)| ((o[1] - o[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn fit_power(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Result<PowerFit, AnalysisError> {
    if !(lo > 0.0) || hi / lo < 10.0 {
        return Err(AnalysisError::WindowTooShort {
            lo,
            hi,
            decades: if lo > 0.0 { (hi / lo).log10() } else { 0.0 },
        });
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x >= lo && x <= hi && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(AnalysisError::TooFewPoints { lo, hi, points: pts.len() });
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let k = sxy / sxx;
    let b = my - k * mx;
    let rms = (pts.iter().map(|(x, y)| (y - b - k * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(PowerFit {
        exponent: k,
        constant: b.exp(),
        window: (lo, hi),
        points: pts.len(),
        log_rms: rms,
    })
}

/// `O(x)` along the field with `x` measured from `origin`; fits the decay
/// exponent on `window` and records Fourier amplitudes (modes `1..=modes`)
/// on the lines nearest to `fourier_at`.
pub fn oscillation_profile(
    p: &ScalarField2D,
    m: f64,
    origin: f64,
    window: Option<(f64, f64)>,
    fourier_at: &[f64],
    modes: usize,
) -> Result<OscillationProfile, AnalysisError> {
    let g = *p.grid();
    let x: Vec<f64> = (0..g.nx).map(|i| g.x(i) - origin).collect();
    let o: Vec<f64> = (0..g.nx)
        .map(|i| {
            let line = p.line(i);
            line.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - line.iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let fit = match window {
        Some((lo, hi)) => Some(fit_power(&x, &o, lo, hi)?),
        None => None,
    };
    let w = w_transform(p, m)?;
    let fourier = fourier_at
        .iter()
        .map(|&xq| {
            let i = ((xq + origin + g.half_length) / g.hx()).round().clamp(0.0, (g.nx - 1) as f64) as usize;
            FourierLine {
                x: x[i],
                amplitudes: (1..=modes).map(|n| mode_amplitude(w.line(i), n)).collect(),
            }
        })
        .collect();
    Ok(OscillationProfile {
        mean: mean_profile(p),
        x,
        o,
        fit,
        fourier,
    })
}

/// `|(1/N) Σ_j w_j e^{−2πi n j/N}|`.
fn mode_amplitude(line: &[f64], n: usize) -> f64 {
    let len = line.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (j, &v) in line.iter().enumerate() {
        let a = 2.0 * std::f64::consts::PI * (n * j) as f64 / len;
        re += v * a.cos();
        im -= v * a.sin();
    }
    (re * re + im * im).sqrt() / len
}

/// `max O(x)/√⟨p⟩(x)` over `range` (distances from the profile's origin).
pub fn oscillation_mass_constant(profile: &OscillationProfile, range: (f64, f64)) -> f64 {
    profile
        .x
        .iter()
        .zip(&profile.o)
        .zip(&profile.mean)
        .filter(|((&x, _), _)| x >= range.0 && x <= range.1)
        .map(|((_, &o), &mean)| o / mean.sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierBound {
    /// One `C` for all modes and lines: `max n² x^{1−1/m} |w_n(x)|`.
    pub constant: f64,
    /// Log-log decay slope of `|w_n|` across the lines, per mode; `None`
    /// when the mode vanishes identically.
    pub exponents: Vec<Option<f64>>,
    /// `1/m − 1`.
    pub predicted: f64,
    /// Worst `n² x^{1−1/m}|w_n|` on the farther half of the lines over the
    /// nearer half (≈ 1 when the rate is sharp).
    pub far_ratio: f64,
}

fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn fourier_bound(lines: &[FourierLine], m: f64) -> Result<FourierBound, AnalysisError> {
    let mut sorted: Vec<&FourierLine> = lines.iter().filter(|l| l.x > 0.0).collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    if sorted.len() < 2 {
        return Err(AnalysisError::Invalid("Fourier bound needs at least two lines at x > 0".into()));
    }
    let modes = sorted.iter().map(|l| l.amplitudes.len()).min().unwrap_or(0);
    // amplitudes below this are rounding noise of the transform
    let noise = 1e-13 * sorted.iter().flat_map(|l| l.amplitudes.iter()).fold(1.0f64, |a, b| a.max(*b));
    let scaled = |l: &FourierLine| {
        l.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64).powi(2) * l.x.powf(1.0 - 1.0 / m))
            .fold(0.0, f64::max)
    };
    let constant = sorted.iter().map(|l| scaled(l)).fold(0.0, f64::max);
    let exponents = (0..modes)
        .map(|n| {
            let pts: Vec<(f64, f64)> = sorted.iter().map(|l| (l.x, l.amplitudes[n])).filter(|p| p.1 > noise).collect();
            if pts.len() < sorted.len() { None } else { log_slope(&pts) }
        })
        .collect();
    let half = sorted.len() / 2;
    let near = sorted[..half].iter().map(|l| scaled(l)).fold(0.0, f64::max);
    let far = sorted[half..].iter().map(|l| scaled(l)).fold(0.0, f64::max);
    Ok(FourierBound {
        constant,
        exponents,
        predicted: 1.0 / m - 1.0,
        far_ratio: if near > 0.0 { far / near } else { 0.0 },
    })
}

/// Decay fit of an already sampled `O(x)` on `window`.
pub fn fit_oscillation(profile: &OscillationProfile, window: (f64, f64)) -> Result<PowerFit, AnalysisError> {
    fit_power(&profile.x, &profile.o, window.0, window.1)
}
