//! Periodic shear flow `α(y)` and the wave parameters built on top of it.
//!
//! The flow is a finite trigonometric polynomial without a constant mode, so
//! it is mean-zero and 1-periodic by construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("flow amplitude {kind}[{index}] = {value} is not finite")]
    NonFinite {
        kind: &'static str,
        index: usize,
        value: f64,
    },
    #[error("wave speed c = {c} does not exceed c* = {c_star} (+ margin {margin}); traveling waves need c > -min α")]
    SpeedTooLow { c: f64, c_star: f64, margin: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

/// Sampling options for locating the extrema of `α`.
#[derive(Debug, Clone, Copy)]
pub struct ExtremaOptions {
    pub samples: usize,
    pub tolerance: f64,
}

impl Default for ExtremaOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            tolerance: 1e-10,
        }
    }
}

/// Mean-zero periodic shear flow `α(y) = Σ a_k cos(2πky) + b_k sin(2πky)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    fourier_cos: Vec<f64>,
    fourier_sin: Vec<f64>,
    min_alpha: f64,
    max_alpha: f64,
    max_abs_dy: f64,
}

impl FlowProfile {
    /// Builds a flow and caches its extrema with the default scan.
    pub fn new(cos_amps: &[f64], sin_amps: &[f64]) -> Result<Self, FlowError> {
        Self::with_options(cos_amps, sin_amps, ExtremaOptions::default())
    }

    pub fn with_options(
        cos_amps: &[f64],
        sin_amps: &[f64],
        opts: ExtremaOptions,
    ) -> Result<Self, FlowError> {
        for (kind, amps) in [("cos", cos_amps), ("sin", sin_amps)] {
            if let Some((index, &value)) = amps.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(FlowError::NonFinite { kind, index, value });
            }
        }
        let mut flow = Self {
            fourier_cos: cos_amps.to_vec(),
            fourier_sin: sin_amps.to_vec(),
            min_alpha: 0.0,
            max_alpha: 0.0,
            max_abs_dy: 0.0,
        };
        if !flow.is_zero() {
            flow.locate_extrema(opts);
        }
        Ok(flow)
    }

    /// The zero flow `α ≡ 0`.
    pub fn zero() -> Self {
        Self {
            fourier_cos: Vec::new(),
            fourier_sin: Vec::new(),
            min_alpha: 0.0,
            max_alpha: 0.0,
            max_abs_dy: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.fourier_cos.iter().chain(&self.fourier_sin).all(|&a| a == 0.0)
    }

    pub fn cos_amplitudes(&self) -> &[f64] {
        &self.fourier_cos
    }

    pub fn sin_amplitudes(&self) -> &[f64] {
        &self.fourier_sin
    }

    pub fn min_alpha(&self) -> f64 {
        self.min_alpha
    }

    pub fn max_alpha(&self) -> f64 {
        self.max_alpha
    }

    /// Upper bound on `|α'|`.
    pub fn max_abs_dy(&self) -> f64 {
        self.max_abs_dy
    }

    /// `s·α` for `s ≥ 0`; extrema scale without rescanning.
    pub fn scaled(&self, s: f64) -> Self {
        assert!(s >= 0.0 && s.is_finite(), "flow scale must be finite and non-negative");
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            fourier_cos: self.fourier_cos.iter().map(|a| a * s).collect(),
            fourier_sin: self.fourier_sin.iter().map(|b| b * s).collect(),
            min_alpha: self.min_alpha * s,
            max_alpha: self.max_alpha * s,
            max_abs_dy: self.max_abs_dy * s,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let y = y.rem_euclid(1.0);
        let mut acc = 0.0;
        for (k, a) in self.fourier_cos.iter().enumerate() {
            acc += a * (TWO_PI * (k + 1) as f64 * y).cos();
        }
        for (k, b) in self.fourier_sin.iter().enumerate() {
            acc += b * (TWO_PI * (k + 1) as f64 * y).sin();
        }
        acc
    }

    pub fn derivative(&self, y: f64) -> f64 {
        let y = y.rem_euclid(1.0);
        let mut acc = 0.0;
        for (k, a) in self.fourier_cos.iter().enumerate() {
            let w = TWO_PI * (k + 1) as f64;
            acc -= a * w * (w * y).sin();
        }
        for (k, b) in self.fourier_sin.iter().enumerate() {
            let w = TWO_PI * (k + 1) as f64;
            acc += b * w * (w * y).cos();
        }
        acc
    }

    fn locate_extrema(&mut self, opts: ExtremaOptions) {
        let n = opts.samples.max(16);
        let h = 1.0 / n as f64;
        let (mut imin, mut imax) = (0usize, 0usize);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut dmax: f64 = 0.0;
        for i in 0..n {
            let y = i as f64 * h;
            let v = self.eval(y);
            if v < vmin {
                vmin = v;
                imin = i;
            }
            if v > vmax {
                vmax = v;
                imax = i;
            }
            // sparse derivative scan is enough for a bound; refined below
            if i % 64 == 0 {
                dmax = dmax.max(self.derivative(y).abs());
            }
        }
        let lo = golden_section(|y| self.eval(y), (imin as f64 - 1.0) * h, (imin as f64 + 1.0) * h);
        let hi = golden_section(|y| -self.eval(y), (imax as f64 - 1.0) * h, (imax as f64 + 1.0) * h);
        let vmin = vmin.min(self.eval(lo));
        let vmax = vmax.max(self.eval(hi));
        // min rounded down, max rounded up
        self.min_alpha = vmin - opts.tolerance;
        self.max_alpha = vmax + opts.tolerance;
        // |α''| ≤ Σ (2πk)²|amp| bounds the error of the sparse derivative scan
        let curv: f64 = [&self.fourier_cos, &self.fourier_sin]
            .iter()
            .flat_map(|amps| amps.iter().enumerate())
            .map(|(k, a)| a.abs() * (TWO_PI * (k + 1) as f64).powi(2))
            .sum();
        self.max_abs_dy = dmax + curv * 64.0 * h;
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `c* = −min α`, `c0 = c + min α`, `c1 = c + max α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedBounds {
    pub c_star: f64,
    pub c0: f64,
    pub c1: f64,
}

pub fn speed_bounds(flow: &FlowProfile, c: f64) -> SpeedBounds {
    SpeedBounds {
        c_star: -flow.min_alpha(),
        c0: c + flow.min_alpha(),
        c1: c + flow.max_alpha(),
    }
}

/// Physical and regularization parameters of one truncated problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    /// Conductivity exponent, `m > 0`, `m ≠ 1`.
    pub m: f64,
    /// Wave speed.
    pub c: f64,
    /// Regularization level (left limit of the δ-solution).
    pub delta: f64,
    /// Half-length `L` of the truncated cylinder.
    pub half_length: f64,
    /// Pinning mass `K`.
    pub pin_mass: f64,
    pub bounds: SpeedBounds,
}

impl WaveParams {
    pub fn new(
        m: f64,
        c: f64,
        delta: f64,
        half_length: f64,
        pin_mass: f64,
        flow: &FlowProfile,
    ) -> Result<Self, FlowError> {
        check_exponent(m)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(FlowError::InvalidParameter {
                name: "c",
                value: c,
                reason: "wave speed must be positive",
            });
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(FlowError::InvalidParameter {
                name: "delta",
                value: delta,
                reason: "regularization must be non-negative",
            });
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(FlowError::InvalidParameter {
                name: "L",
                value: half_length,
                reason: "half-length must be positive",
            });
        }
        if !(pin_mass > 0.0 && pin_mass.is_finite()) {
            return Err(FlowError::InvalidParameter {
                name: "K",
                value: pin_mass,
                reason: "pinning mass must be positive",
            });
        }
        Ok(Self {
            m,
            c,
            delta,
            half_length,
            pin_mass,
            bounds: speed_bounds(flow, c),
        })
    }

    pub fn c0(&self) -> f64 {
        self.bounds.c0
    }

    pub fn c1(&self) -> f64 {
        self.bounds.c1
    }

    pub fn c_star(&self) -> f64 {
        self.bounds.c_star
    }
}

pub fn check_exponent(m: f64) -> Result<(), FlowError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(FlowError::InvalidParameter {
            name: "m",
            value: m,
            reason: "conductivity exponent must be positive",
        });
    }
    if (m - 1.0).abs() < 1e-12 {
        return Err(FlowError::InvalidParameter {
            name: "m",
            value: m,
            reason: "m = 1 is excluded: pressure is then proportional to temperature and the pressure formulation degenerates",
        });
    }
    Ok(())
}

/// Accepts iff `c > c* + margin` strictly.
pub fn validate_speed(params: &WaveParams, margin: f64) -> Result<(), FlowError> {
    let c_star = params.c_star();
    if params.c > c_star + margin {
        Ok(())
    } else {
        Err(FlowError::SpeedTooLow {
            c: params.c,
            c_star,
            margin,
        })
    }
}
