//! Time-domain integration of the governing nonlinear state equations, used
//! as the independent check on the closed-form transfer functions.
//!
//! State equations (v is the output voltage, vi the driven input):
//!
//! * nonlinear conductance:  dv/dt = (vi - v - g2 R v^2) / (R C0)
//! * nonlinear capacitance:  dv/dt = (vi - v) / (R (C0 + C1 v))
//! * both:                   dv/dt = (vi - v - g2 R v^2) / (R (C0 + C1 v))
//! * bipolar stage (v = v_BE, output i_C = (g_m1 + g_m2 v) v):
//!   dv/dt = (vi - (R_B+R_E) i_nB - k v - gb2 v^2) / ((R_B+R_E)(C_pi0 + C_pi1 v))
//!   with k = 1 + g_pi1 (R_B+R_E) + g_m1 R_E and
//!   gb2 = g_pi2 (R_B+R_E) + g_m2 R_E.
//!
//! The memoryless stage and the two idealized single elements have algebraic
//! outputs and are evaluated directly (input derivatives by 2nd-order
//! differences).
//!
//! The default integrator is trapezoidal with a damped Newton solve of the
//! scalar implicit update; RK4 is available as a cross-check. The
//! incremental capacitance is guarded at 5% of C0 and the output at 10 V1,
//! since beyond either the second-order model has no meaning.

use num_complex::Complex64;

use crate::analytic::bipolar_equivalent_spec;
use crate::bjt::{ExtractedCoeffs, TerminalResistances};
use crate::error::{Error, Result};
use crate::filter::lowpass_filtfilt;
use crate::iq::{lockin_decompose, sideband_split, to_am_pm};
use crate::noise::{generate, NoiseModel, Seed, ToneProbe};
use crate::signal::{wrap_phase, CircuitSpec, Excitation, Harmonic, NoiseTransfer, TimeSeries};
use crate::spectral::{welch_psd, PsdEstimate, Window};

/// Time stepper choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Trapezoidal,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Hz; at least 50 samples per carrier cycle.
    pub sample_rate: f64,
    /// Total simulated span, s.
    pub duration: f64,
    pub integrator: Integrator,
    /// Leading span discarded before any measurement, s.
    pub transient_skip: f64,
    /// Newton iteration cap per trapezoidal step.
    pub max_step_nonlin_iter: usize,
    /// Convergence tolerance on the per-step update.
    pub tol: f64,
}

/// What to integrate: a circuit family or a bipolar stage in coefficient form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimTarget {
    Circuit(CircuitSpec),
    Bjt(BjtEquivalent),
}

/// Bipolar stage described by extracted coefficients and terminal
/// resistances; the injected "noise" is the base noise current i_nB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BjtEquivalent {
    pub coeffs: ExtractedCoeffs,
    pub resistors: TerminalResistances,
}

impl From<CircuitSpec> for SimTarget {
    fn from(spec: CircuitSpec) -> Self {
        SimTarget::Circuit(spec)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvergenceStats {
    pub steps: usize,
    pub newton_iterations: u64,
    pub max_newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Post-transient output record: v_o for the RC circuits, i_o for the
    /// algebraic elements, i_C for the bipolar stage.
    pub output: TimeSeries,
    /// Measured dc, fundamental and 2nd harmonic over the trailing integer
    /// number of carrier periods.
    pub harmonics: Vec<Harmonic>,
    pub stats: ConvergenceStats,
    pub config: SimConfig,
    /// Internal state when it differs from the output (bipolar v_BE trace).
    pub state: Option<TimeSeries>,
}

/// PSD triple from a stochastic run.
#[derive(Debug, Clone)]
pub struct NoiseRunPsd {
    pub s_an: PsdEstimate,
    pub s_phin: PsdEstimate,
    pub s_in: PsdEstimate,
    pub carrier_amp: f64,
}

const MIN_SAMPLES_PER_CYCLE: f64 = 50.0;
/// Lock-in lowpass cutoff as a fraction of the carrier frequency.
const LOCKIN_CUTOFF_FRACTION: f64 = 1.0 / 20.0;
/// Injection band limit for stochastic runs, fraction of the carrier.
const INJECTION_CUTOFF_FRACTION: f64 = 1.0 / 50.0;

impl SimConfig {
    /// Sensible defaults: 100 samples per carrier cycle, transient of
    /// 20 max(R C0, one period), and a given post-transient measurement
    /// window in seconds (rounded up to whole samples).
    pub fn recommended(target: &SimTarget, exc: &Excitation, window: f64) -> SimConfig {
        let f0 = exc.f0();
        let fs = 100.0 * f0;
        let tau = target_time_constant(target).max(2.0 * std::f64::consts::PI / exc.omega0);
        let transient = 20.0 * tau;
        let n_skip = (transient * fs).ceil();
        let n_window = (window * fs).round().max(1.0);
        SimConfig {
            sample_rate: fs,
            duration: (n_skip + n_window) / fs,
            integrator: Integrator::Trapezoidal,
            transient_skip: n_skip / fs,
            max_step_nonlin_iter: 25,
            tol: 1e-12,
        }
    }

    /// Defaults sized for a two-tone run: the window spans `periods` whole
    /// cycles of the probe offset `omega_m`.
    pub fn recommended_two_tone(
        target: &SimTarget,
        exc: &Excitation,
        omega_m: f64,
        periods: usize,
    ) -> SimConfig {
        let window = periods as f64 * 2.0 * std::f64::consts::PI / omega_m;
        SimConfig::recommended(target, exc, window)
    }

    fn validate(&self, target: &SimTarget, exc: &Excitation) -> Result<()> {
        let f0 = exc.f0();
        let min_rate = MIN_SAMPLES_PER_CYCLE * f0;
        if self.sample_rate < min_rate {
            return Err(Error::SamplingRate { required: min_rate, actual: self.sample_rate });
        }
        if self.tol <= 0.0 || self.tol.is_nan() {
            return Err(Error::InvalidParameter("tol must be > 0".into()));
        }
        if self.max_step_nonlin_iter == 0 {
            return Err(Error::InvalidParameter("max_step_nonlin_iter must be >= 1".into()));
        }
        let tau = target_time_constant(target).max(1.0 / exc.omega0);
        if self.transient_skip < 10.0 * tau {
            return Err(Error::InvalidParameter(format!(
                "transient_skip {} s below 10 max(R C0, 1/omega0) = {} s",
                self.transient_skip,
                10.0 * tau
            )));
        }
        if self.duration <= self.transient_skip {
            return Err(Error::InvalidParameter("duration must exceed transient_skip".into()));
        }
        Ok(())
    }
}

fn target_time_constant(target: &SimTarget) -> f64 {
    match target {
        SimTarget::Circuit(spec) => match *spec {
            CircuitSpec::RcNonlinG { r, c0, .. }
            | CircuitSpec::RcNonlinC { r, c0, .. }
            | CircuitSpec::RcNonlinGC { r, c0, .. } => r * c0,
            _ => 0.0,
        },
        SimTarget::Bjt(b) => {
            let r_sum = b.resistors.r_b + b.resistors.r_e;
            let k = 1.0 + b.coeffs.g_pi1 * r_sum + b.coeffs.g_m1 * b.resistors.r_e;
            r_sum / k * b.coeffs.c_pi0
        }
    }
}

/// Right-hand side of the scalar state equation, `dv/dt = f(drive, v)`.
#[derive(Debug, Clone, Copy)]
enum Rhs {
    RcG { rc0: f64, g2r: f64 },
    RcC { r: f64, c0: f64, c1: f64, g2r: f64 },
    Bjt { k: f64, rbe: f64, g2bar: f64, c0: f64, c1: f64 },
}

impl Rhs {
    fn eval(&self, drive: f64, v: f64, t: f64) -> Result<f64> {
        match *self {
            Rhs::RcG { rc0, g2r } => Ok((drive - v - g2r * v * v) / rc0),
            Rhs::RcC { r, c0, c1, g2r } => {
                let c_eff = c0 + c1 * v;
                if c_eff < 0.05 * c0 {
                    return Err(Error::GuardViolation { time: t, value: c_eff, limit: 0.05 * c0 });
                }
                Ok((drive - v - g2r * v * v) / (r * c_eff))
            }
            Rhs::Bjt { k, rbe, g2bar, c0, c1 } => {
                let c_eff = c0 + c1 * v;
                if c_eff < 0.05 * c0 {
                    return Err(Error::GuardViolation { time: t, value: c_eff, limit: 0.05 * c0 });
                }
                Ok((drive - k * v - g2bar * v * v) / (rbe * c_eff))
            }
        }
    }

    fn dfdv(&self, drive: f64, v: f64) -> f64 {
        match *self {
            Rhs::RcG { rc0, g2r } => (-1.0 - 2.0 * g2r * v) / rc0,
            Rhs::RcC { r, c0, c1, g2r } => {
                let c_eff = c0 + c1 * v;
                let f = (drive - v - g2r * v * v) / (r * c_eff);
                (-1.0 - 2.0 * g2r * v) / (r * c_eff) - f * c1 / c_eff
            }
            Rhs::Bjt { k, rbe, g2bar, c0, c1 } => {
                let c_eff = c0 + c1 * v;
                let f = (drive - k * v - g2bar * v * v) / (rbe * c_eff);
                (-k - 2.0 * g2bar * v) / (rbe * c_eff) - f * c1 / c_eff
            }
        }
    }
}

/// Integrate `dv/dt = f(drive, v)` over the drive record. Returns the state
/// trace at the sample instants.
fn integrate(
    rhs: &Rhs,
    drive: &[f64],
    dt: f64,
    guard: f64,
    cfg: &SimConfig,
    stats: &mut ConvergenceStats,
) -> Result<Vec<f64>> {
    let n = drive.len();
    let mut v = vec![0.0f64; n];
    match cfg.integrator {
        Integrator::Trapezoidal => {
            for i in 0..n - 1 {
                let t1 = (i + 1) as f64 * dt;
                let f0 = rhs.eval(drive[i], v[i], i as f64 * dt)?;
                let mut u = v[i] + dt * f0; // explicit predictor
                let mut converged = false;
                let mut resid = f64::INFINITY;
                for it in 0..cfg.max_step_nonlin_iter {
                    let f1 = rhs.eval(drive[i + 1], u, t1)?;
                    let big_f = u - v[i] - 0.5 * dt * (f0 + f1);
                    let slope = 1.0 - 0.5 * dt * rhs.dfdv(drive[i + 1], u);
                    let mut du = -big_f / slope;
                    if !du.is_finite() {
                        du = -big_f; // damped fallback when the slope degenerates
                    }
                    u += du;
                    resid = du.abs();
                    stats.newton_iterations += 1;
                    if it + 1 > stats.max_newton_iterations {
                        stats.max_newton_iterations = it + 1;
                    }
                    if resid <= cfg.tol * (1.0 + u.abs()) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::StepSolverDiverged { time: t1, residual: resid });
                }
                if u.abs() > guard {
                    return Err(Error::GuardViolation { time: t1, value: u, limit: guard });
                }
                v[i + 1] = u;
            }
        }
        Integrator::Rk4 => {
            for i in 0..n - 1 {
                let t = i as f64 * dt;
                let d0 = drive[i];
                let d1 = drive[i + 1];
                let dm = 0.5 * (d0 + d1);
                let k1 = rhs.eval(d0, v[i], t)?;
                let k2 = rhs.eval(dm, v[i] + 0.5 * dt * k1, t + 0.5 * dt)?;
                let k3 = rhs.eval(dm, v[i] + 0.5 * dt * k2, t + 0.5 * dt)?;
                let k4 = rhs.eval(d1, v[i] + dt * k3, t + dt)?;
                let u = v[i] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if u.abs() > guard {
                    return Err(Error::GuardViolation { time: t + dt, value: u, limit: guard });
                }
                v[i + 1] = u;
            }
            stats.newton_iterations = 0;
        }
    }
    stats.steps = n - 1;
    Ok(v)
}

/// 2nd-order finite-difference derivative of a uniformly sampled record.
fn derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt);
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
    }
    d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * dt);
    d
}

/// Complex amplitude of harmonic k over the trailing integer-period window.
fn measure_harmonics(out: &TimeSeries, omega0: f64) -> Vec<Harmonic> {
    let f0 = omega0 / (2.0 * std::f64::consts::PI);
    let span = out.len() as f64 / out.sample_rate;
    let periods = crate::iq::floor_eps(span * f0).max(1.0);
    let n_win = (((periods / f0) * out.sample_rate).round() as usize).min(out.len());
    let off = out.len() - n_win;
    let dt = out.dt();
    let mut harmonics = Vec::with_capacity(3);
    for k in 0..=2u32 {
        if k == 0 {
            let mean =
                out.samples[off..].iter().sum::<f64>() / n_win as f64;
            harmonics.push(Harmonic {
                order: 0,
                amplitude: mean.abs(),
                phase: if mean >= 0.0 { 0.0 } else { std::f64::consts::PI },
            });
        } else {
            let w = k as f64 * omega0;
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in out.samples[off..].iter().enumerate() {
                let t = out.start_time + (off + i) as f64 * dt;
                let (s, c) = (w * t).sin_cos();
                acc += Complex64::new(v * c, -v * s);
            }
            acc *= 2.0 / n_win as f64;
            harmonics.push(Harmonic {
                order: k,
                amplitude: acc.norm(),
                phase: wrap_phase(acc.arg()),
            });
        }
    }
    harmonics
}

/// Simulate with an explicit injected-noise record (one value per sample;
/// pass `None` for a noise-free run). The record length must cover the
/// whole duration.
pub fn simulate_with_injected(
    target: &SimTarget,
    exc: &Excitation,
    injected: Option<&[f64]>,
    cfg: &SimConfig,
) -> Result<SimResult> {
    if let SimTarget::Circuit(spec) = target {
        spec.validate()?;
    }
    cfg.validate(target, exc)?;
    let fs = cfg.sample_rate;
    let dt = 1.0 / fs;
    let n_total = (cfg.duration * fs).round() as usize;
    if n_total < 4 {
        return Err(Error::InvalidParameter("duration shorter than 4 samples".into()));
    }
    if let Some(w) = injected {
        if w.len() < n_total {
            return Err(Error::InvalidParameter(format!(
                "injected record has {} samples, need {n_total}",
                w.len()
            )));
        }
    }
    let noise_at = |i: usize| injected.map_or(0.0, |w| w[i]);
    let exc_at = |i: usize| exc.amplitude * (exc.omega0 * i as f64 * dt).cos();

    let guard = if exc.amplitude > 0.0 { 10.0 * exc.amplitude } else { f64::INFINITY };
    let mut stats = ConvergenceStats::default();

    // (output trace, optional distinct state trace)
    let (y, state): (Vec<f64>, Option<Vec<f64>>) = match target {
        SimTarget::Circuit(spec) => match *spec {
            CircuitSpec::Memoryless { alpha1, alpha2 } => {
                let y = (0..n_total)
                    .map(|i| {
                        let v = exc_at(i) + noise_at(i);
                        alpha1 * v + alpha2 * v * v
                    })
                    .collect();
                (y, None)
            }
            CircuitSpec::LinCapNonlinG { c0, g2 } => {
                let v: Vec<f64> = (0..n_total).map(|i| exc_at(i) + noise_at(i)).collect();
                let dv = derivative(&v, dt);
                let y = v.iter().zip(&dv).map(|(v, dv)| c0 * dv + g2 * v * v).collect();
                (y, None)
            }
            CircuitSpec::LinGNonlinCap { g1, c1 } => {
                let v: Vec<f64> = (0..n_total).map(|i| exc_at(i) + noise_at(i)).collect();
                let dv = derivative(&v, dt);
                let y = v.iter().zip(&dv).map(|(v, dv)| g1 * v + c1 * v * dv).collect();
                (y, None)
            }
            CircuitSpec::RcNonlinG { r, c0, g2 } => {
                if c0 <= 0.0 {
                    return Err(Error::DegenerateElement("RC dynamics need C0 > 0".into()));
                }
                let drive: Vec<f64> = (0..n_total).map(|i| exc_at(i) + noise_at(i)).collect();
                let rhs = Rhs::RcG { rc0: r * c0, g2r: g2 * r };
                (integrate(&rhs, &drive, dt, guard, cfg, &mut stats)?, None)
            }
            CircuitSpec::RcNonlinC { r, c0, c1 } => {
                if c0 <= 0.0 {
                    return Err(Error::DegenerateElement("RC dynamics need C0 > 0".into()));
                }
                let drive: Vec<f64> = (0..n_total).map(|i| exc_at(i) + noise_at(i)).collect();
                let rhs = Rhs::RcC { r, c0, c1, g2r: 0.0 };
                (integrate(&rhs, &drive, dt, guard, cfg, &mut stats)?, None)
            }
            CircuitSpec::RcNonlinGC { r, c0, g2, c1 } => {
                if c0 <= 0.0 {
                    return Err(Error::DegenerateElement("RC dynamics need C0 > 0".into()));
                }
                let drive: Vec<f64> = (0..n_total).map(|i| exc_at(i) + noise_at(i)).collect();
                let rhs = Rhs::RcC { r, c0, c1, g2r: g2 * r };
                (integrate(&rhs, &drive, dt, guard, cfg, &mut stats)?, None)
            }
        },
        SimTarget::Bjt(b) => {
            let (_, k) = bipolar_equivalent_spec(&b.coeffs, &b.resistors)?;
            let rbe = b.resistors.r_b + b.resistors.r_e;
            if b.coeffs.c_pi0 <= 0.0 {
                return Err(Error::DegenerateElement("bipolar dynamics need c_pi0 > 0".into()));
            }
            let g2bar = b.coeffs.g_pi2 * rbe + b.coeffs.g_m2 * b.resistors.r_e;
            // Injected record is the base noise current i_nB.
            let drive: Vec<f64> = (0..n_total).map(|i| exc_at(i) - rbe * noise_at(i)).collect();
            let rhs = Rhs::Bjt { k, rbe, g2bar, c0: b.coeffs.c_pi0, c1: b.coeffs.c_pi1 };
            let vbe = integrate(&rhs, &drive, dt, guard, cfg, &mut stats)?;
            let ic = vbe
                .iter()
                .map(|&v| (b.coeffs.g_m1 + b.coeffs.g_m2 * v) * v)
                .collect();
            (ic, Some(vbe))
        }
    };

    let n_skip = (cfg.transient_skip * fs).round() as usize;
    if n_skip + 2 >= n_total {
        return Err(Error::InvalidParameter("nothing left after transient skip".into()));
    }
    let start_time = n_skip as f64 * dt;
    let output = TimeSeries::new(y[n_skip..].to_vec(), fs, start_time)?;
    if output.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::GuardViolation { time: start_time, value: f64::NAN, limit: guard });
    }
    let harmonics = measure_harmonics(&output, exc.omega0);
    let state = state
        .map(|s| TimeSeries::new(s[n_skip..].to_vec(), fs, start_time))
        .transpose()?;
    Ok(SimResult { output, harmonics, stats, config: *cfg, state })
}

/// Simulate with noise drawn from a model (or none).
pub fn simulate(
    target: &SimTarget,
    exc: &Excitation,
    noise: Option<&NoiseModel>,
    seed: Seed,
    cfg: &SimConfig,
) -> Result<SimResult> {
    match noise {
        None => simulate_with_injected(target, exc, None, cfg),
        Some(model) => {
            let n_total = (cfg.duration * cfg.sample_rate).round() as usize;
            let record = generate(model, seed, cfg.sample_rate, n_total.max(2))?;
            simulate_with_injected(target, exc, Some(&record.samples), cfg)
        }
    }
}

/// Measure (H_AM, H_PM) with a deterministic two-tone probe: simulate with a
/// probe tone as the injected noise, project the trailing integer-period
/// window onto carrier and sidebands, and divide by the probe amplitude.
pub fn two_tone_probe(
    target: &SimTarget,
    exc: &Excitation,
    probe: &ToneProbe,
    cfg: &SimConfig,
) -> Result<NoiseTransfer> {
    if probe.omega_m <= 0.0 || probe.omega_m.is_nan() || probe.omega_m > exc.omega0 / 20.0 {
        return Err(Error::InvalidParameter(format!(
            "probe offset {} rad/s outside (0, omega0/20]",
            probe.omega_m
        )));
    }
    let equivalent_input = match target {
        SimTarget::Circuit(_) => probe.amplitude.abs(),
        // Base current noise enters scaled by (R_B + R_E).
        SimTarget::Bjt(b) => probe.amplitude.abs() * (b.resistors.r_b + b.resistors.r_e),
    };
    if equivalent_input > exc.amplitude / 100.0 {
        return Err(Error::InvalidParameter(
            "probe must stay below 1% of the excitation amplitude".into(),
        ));
    }
    let result = simulate(
        target,
        exc,
        Some(&NoiseModel::SingleToneProbe(*probe)),
        Seed(0),
        cfg,
    )?;
    // Trailing window with whole probe periods (whole carrier periods follow
    // when the frequencies are commensurate).
    let f_m = probe.omega_m / (2.0 * std::f64::consts::PI);
    let out = &result.output;
    let span = out.len() as f64 / out.sample_rate;
    let periods = crate::iq::floor_eps(span * f_m);
    if periods < 1.0 {
        return Err(Error::UnresolvableTones(
            "window shorter than one probe period".into(),
        ));
    }
    let n_win = (((periods / f_m) * out.sample_rate).round() as usize).min(out.len());
    let off = out.len() - n_win;
    let window = TimeSeries::new(
        out.samples[off..].to_vec(),
        out.sample_rate,
        out.start_time + off as f64 * out.dt(),
    )?;
    let (am, pm) = sideband_split(&window, exc.omega0, probe.omega_m)?;
    Ok(NoiseTransfer { h_am: am / probe.amplitude, h_pm: pm / probe.amplitude })
}

/// Stochastic verification path: inject band-limited noise, demodulate, and
/// return Welch PSDs of a_n, phi_n and of the record actually injected, all
/// on one grid so `psd_ratio_check` can back out |H_AM|^2 and |H_PM|^2.
pub fn noise_run(
    target: &SimTarget,
    exc: &Excitation,
    noise: &NoiseModel,
    seed: Seed,
    cfg: &SimConfig,
) -> Result<NoiseRunPsd> {
    let f0 = exc.f0();
    match noise {
        NoiseModel::White { .. } => {}
        NoiseModel::Flicker { f_high, .. } => {
            if *f_high > f0 / 20.0 {
                return Err(Error::BandLimits(format!(
                    "flicker f_high {} Hz too close to the carrier {} Hz",
                    f_high, f0
                )));
            }
        }
        NoiseModel::SingleToneProbe(_) => {
            return Err(Error::InvalidParameter(
                "noise_run needs a stochastic model; use two_tone_probe for probes".into(),
            ))
        }
    }
    let fs = cfg.sample_rate;
    let n_total = (cfg.duration * fs).round() as usize;
    let raw = generate(noise, seed, fs, n_total.max(2))?;
    // Keep the injected process strictly baseband so nothing reaches the
    // carrier through the linear path.
    let anchor = (fs / f0).round().max(1.0) as usize;
    let injected = lowpass_filtfilt(&raw.samples, INJECTION_CUTOFF_FRACTION * f0, fs, anchor);
    let result = simulate_with_injected(target, exc, Some(&injected), cfg)?;

    let lp_cutoff = LOCKIN_CUTOFF_FRACTION * f0;
    let decim = (fs / f0).floor().max(1.0) as usize;
    let dec = lockin_decompose(&result.output, exc.omega0, lp_cutoff, decim)?;
    let ampm = to_am_pm(&dec)?;

    // The injected record goes through the same lowpass and decimation, so
    // in-band ratios cancel the filter response exactly.
    let n_skip = (cfg.transient_skip * fs).round() as usize;
    let tail = &injected[n_skip..n_skip + result.output.len()];
    let inj_filtered = lowpass_filtfilt(tail, lp_cutoff, fs, anchor);
    let inj_dec = TimeSeries::new(inj_filtered, fs, result.output.start_time)?.decimated(decim)?;

    let len = ampm.a_n.len();
    let seg = (len / 33).next_power_of_two() / 2;
    if seg < 16 {
        return Err(Error::SpectralConfig(format!(
            "decimated record too short for Welch averaging ({len} samples)"
        )));
    }
    let s_an = welch_psd(&ampm.a_n, seg, 0.5, Window::Hann)?;
    let s_phin = welch_psd(&ampm.phi_n, seg, 0.5, Window::Hann)?;
    let s_in = welch_psd(&inj_dec, seg, 0.5, Window::Hann)?;
    Ok(NoiseRunPsd { s_an, s_phin, s_in, carrier_amp: dec.carrier_amp })
}

/// Analysis band where the injected spectrum is flat-through: spans
/// [f0/400, f0/100], inside both the injection band and the lock-in
/// passband.
pub fn default_ratio_band(exc: &Excitation) -> (f64, f64) {
    let f0 = exc.f0();
    (f0 / 400.0, f0 / 100.0)
}
