//! Foundational value types: sampled waveforms, excitations, circuit
//! descriptions, harmonics and noise transfer pairs.
//!
//! Everything is a plain immutable value in SI base units (V, A, S, F,
//! rad/s). Signals are real-valued; analytic signals exist only transiently
//! inside the demodulator.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniformly sampled real waveform.
///
/// Sample n sits at `start_time + n / sample_rate`; no per-sample timestamps
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    /// Hz, > 0.
    pub sample_rate: f64,
    /// Seconds.
    pub start_time: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !sample_rate.is_finite() || sample_rate <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sample_rate must be finite and > 0, got {sample_rate}"
            )));
        }
        Ok(Self { samples, sample_rate, start_time })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample spacing in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Time of sample `n`.
    pub fn time_at(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Copy with `frac` of the samples dropped from each end. Used before
    /// computing metrics on records with filter edge transients.
    pub fn trimmed(&self, frac: f64) -> TimeSeries {
        let cut = ((self.len() as f64) * frac).floor() as usize;
        let end = self.len().saturating_sub(cut);
        let samples = if cut >= end { Vec::new() } else { self.samples[cut..end].to_vec() };
        TimeSeries {
            samples,
            sample_rate: self.sample_rate,
            start_time: self.start_time + cut as f64 / self.sample_rate,
        }
    }

    /// Sub-series keeping every `factor`-th sample starting at index 0.
    pub fn decimated(&self, factor: usize) -> Result<TimeSeries> {
        if factor == 0 {
            return Err(Error::InvalidParameter("decimation factor must be >= 1".into()));
        }
        Ok(TimeSeries {
            samples: self.samples.iter().step_by(factor).copied().collect(),
            sample_rate: self.sample_rate / factor as f64,
            start_time: self.start_time,
        })
    }
}

/// Single-tone drive: `v(t) = amplitude * cos(omega0 * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excitation {
    /// Volts, >= 0.
    pub amplitude: f64,
    /// rad/s, > 0.
    pub omega0: f64,
}

impl Excitation {
    pub fn new(amplitude: f64, omega0: f64) -> Result<Self> {
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "excitation amplitude must be finite and >= 0, got {amplitude}"
            )));
        }
        if !omega0.is_finite() || omega0 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "omega0 must be finite and > 0, got {omega0}"
            )));
        }
        Ok(Self { amplitude, omega0 })
    }

    /// Carrier frequency in Hz.
    pub fn f0(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }
}

/// The five analyzed circuit families plus the purely algebraic stage.
///
/// `Memoryless` covers both the generic `x_o = alpha1 x + alpha2 x^2` stage
/// and the conductance case via `alpha1 = g1`, `alpha2 = g2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircuitSpec {
    Memoryless { alpha1: f64, alpha2: f64 },
    /// Linear capacitor in parallel with a purely 2nd-order conductance;
    /// output current `i = C0 dv/dt + g2 v^2`.
    LinCapNonlinG { c0: f64, g2: f64 },
    /// Linear conductance in parallel with a purely 2nd-order capacitance;
    /// output current `i = g1 v + C1 v dv/dt`.
    LinGNonlinCap { g1: f64, c1: f64 },
    /// Series R into C0 parallel with g2 v^2; state equation
    /// `v_o = v_i - R C0 dv_o/dt - g2 R v_o^2`.
    RcNonlinG { r: f64, c0: f64, g2: f64 },
    /// Series R into C(v) = C0 + C1 v; state equation
    /// `v_o = v_i - R C0 dv_o/dt - R C1 v_o dv_o/dt`.
    RcNonlinC { r: f64, c0: f64, c1: f64 },
    /// Both nonlinearities together.
    RcNonlinGC { r: f64, c0: f64, g2: f64, c1: f64 },
}

impl CircuitSpec {
    /// Rejects parameter sets outside the documented domain.
    pub fn validate(&self) -> Result<()> {
        let all_finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match *self {
            CircuitSpec::Memoryless { alpha1, alpha2 } => {
                if !all_finite(&[alpha1, alpha2]) {
                    return Err(Error::InvalidParameter("memoryless coefficients must be finite".into()));
                }
            }
            CircuitSpec::LinCapNonlinG { c0, g2 } => {
                if !all_finite(&[c0, g2]) || c0 < 0.0 {
                    return Err(Error::InvalidParameter("C0 must be finite and >= 0".into()));
                }
            }
            CircuitSpec::LinGNonlinCap { g1, c1 } => {
                if !all_finite(&[g1, c1]) || g1 <= 0.0 {
                    return Err(Error::InvalidParameter("g1 must be finite and > 0".into()));
                }
            }
            CircuitSpec::RcNonlinG { r, c0, g2 } => {
                if !all_finite(&[r, c0, g2]) || r <= 0.0 || c0 < 0.0 {
                    return Err(Error::InvalidParameter("require finite R > 0 and C0 >= 0".into()));
                }
            }
            CircuitSpec::RcNonlinC { r, c0, c1 } => {
                if !all_finite(&[r, c0, c1]) || r <= 0.0 || c0 < 0.0 {
                    return Err(Error::InvalidParameter("require finite R > 0 and C0 >= 0".into()));
                }
            }
            CircuitSpec::RcNonlinGC { r, c0, g2, c1 } => {
                if !all_finite(&[r, c0, g2, c1]) || r <= 0.0 || c0 < 0.0 {
                    return Err(Error::InvalidParameter("require finite R > 0 and C0 >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Linear transfer H(jw) = 1 / (1 + j R C0 w) of the series-RC families.
    /// `None` for the idealized single elements and the memoryless stage.
    pub fn linear_tf(&self, omega: f64) -> Option<Complex64> {
        match *self {
            CircuitSpec::RcNonlinG { r, c0, .. }
            | CircuitSpec::RcNonlinC { r, c0, .. }
            | CircuitSpec::RcNonlinGC { r, c0, .. } => {
                Some(Complex64::new(1.0, 0.0) / Complex64::new(1.0, r * c0 * omega))
            }
            _ => None,
        }
    }

    /// First-harmonic output amplitude `|H(jw0)| V1` of the RC families.
    pub fn fundamental_amplitude(&self, exc: &Excitation) -> Option<f64> {
        self.linear_tf(exc.omega0).map(|h| h.norm() * exc.amplitude)
    }
}

/// One spectral line of a periodic steady-state response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub order: u32,
    /// Volts (or amps for current outputs), >= 0.
    pub amplitude: f64,
    /// Radians in (-pi, pi].
    pub phase: f64,
}

/// AM / PM transfer pair, per unit input noise (1/V against a voltage noise,
/// 1/A against a current noise). Closed-form producers return purely real
/// values; measured ones may carry a small imaginary part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTransfer {
    pub h_am: Complex64,
    pub h_pm: Complex64,
}

impl NoiseTransfer {
    pub fn real(h_am: f64, h_pm: f64) -> Self {
        Self { h_am: Complex64::new(h_am, 0.0), h_pm: Complex64::new(h_pm, 0.0) }
    }
}

/// Sample a cosine tone. Requires at least 10 samples per cycle.
pub fn synth_tone(exc: &Excitation, sample_rate: f64, duration: f64) -> Result<TimeSeries> {
    let f0 = exc.f0();
    let min_rate = 10.0 * f0;
    if sample_rate <= min_rate {
        return Err(Error::SamplingRate { required: min_rate, actual: sample_rate });
    }
    if duration <= 0.0 || duration.is_nan() {
        return Err(Error::InvalidParameter(format!("duration must be > 0, got {duration}")));
    }
    let n = (duration * sample_rate).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter("duration shorter than one sample".into()));
    }
    let dt = 1.0 / sample_rate;
    let samples = (0..n).map(|i| exc.amplitude * (exc.omega0 * i as f64 * dt).cos()).collect();
    TimeSeries::new(samples, sample_rate, 0.0)
}

/// Wrap an angle into (-pi, pi]; the -pi boundary maps to +pi.
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut p = phi % two_pi;
    if p <= -PI {
        p += two_pi;
    } else if p > PI {
        p -= two_pi;
    }
    p
}
