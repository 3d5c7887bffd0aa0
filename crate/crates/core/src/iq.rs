//! Carrier-referenced noise decomposition.
//!
//! A noisy carrier is modeled as
//! `x(t) = X1 cos(w0 t + phi1) + n_I(t) cos(w0 t + phi1) + n_Q(t) sin(w0 t + phi1)`,
//! so the amplitude and phase processes are `a_n = n_I / X1` and
//! `phi_n = -n_Q / X1`. The lock-in path recovers n_I and n_Q with mixers
//! and a zero-phase lowpass; the sideband path projects onto the three
//! spectral lines of a two-tone experiment and returns complex AM/PM
//! amplitudes directly.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter::lowpass_filtfilt;
use crate::signal::{wrap_phase, TimeSeries};

/// Output of [`lockin_decompose`]: the three noise components on a shared
/// decimated grid, plus the carrier estimate they are referenced to.
#[derive(Debug, Clone)]
pub struct IqDecomposition {
    /// Lowpassed, dc-blocked baseband component of the record.
    pub baseband: TimeSeries,
    /// In-phase noise n_I(t), same grid as `quadrature`.
    pub inphase: TimeSeries,
    /// Quadrature noise n_Q(t).
    pub quadrature: TimeSeries,
    /// Carrier amplitude X1, > 0.
    pub carrier_amp: f64,
    /// Carrier phase phi1 in (-pi, pi].
    pub carrier_phase: f64,
    /// Lowpass cutoff used, Hz (zero-phase 4th-order Butterworth).
    pub lp_cutoff: f64,
}

/// AM/PM processes derived from an [`IqDecomposition`].
#[derive(Debug, Clone)]
pub struct AmPmProcesses {
    /// Fractional amplitude fluctuation, dimensionless.
    pub a_n: TimeSeries,
    /// Phase fluctuation, rad.
    pub phi_n: TimeSeries,
    /// False when max|a_n| or max|phi_n| exceeds 0.1 and the small-signal
    /// reading of the decomposition is doubtful.
    pub small_signal_ok: bool,
}

/// Hilbert transform via the ideal -j sign(w) frequency mask on an FFT of
/// the whole record. For X cos(w0 t + p) this returns X sin(w0 t + p).
/// Callers should trim ~5% from each edge before computing metrics; the
/// circular FFT makes the ends wrap.
pub fn hilbert_quadrature(x: &TimeSeries) -> Result<TimeSeries> {
    let n = x.len();
    if n < 64 {
        return Err(Error::SignalTooShort { required: 64, actual: n });
    }
    let mut buf: Vec<Complex64> = x.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    // Multiply by -j for positive frequencies, +j for negative, 0 at dc
    // (and Nyquist for even n, where the sign is ambiguous).
    buf[0] = Complex64::new(0.0, 0.0);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        if n.is_multiple_of(2) && k == half {
            *v = Complex64::new(0.0, 0.0);
        } else if k < half || (!n.is_multiple_of(2) && k == half) {
            *v *= Complex64::new(0.0, -1.0);
        } else {
            *v *= Complex64::new(0.0, 1.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let samples = buf.iter().map(|c| c.re * scale).collect();
    TimeSeries::new(samples, x.sample_rate, x.start_time)
}

/// Complex amplitude of the cos component at `omega`: for
/// `x ⊇ A cos(omega t + theta)` the projection returns `A exp(j theta)`,
/// using absolute sample times.
fn project(x: &TimeSeries, omega: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let dt = x.dt();
    for (i, &v) in x.samples.iter().enumerate() {
        let t = x.start_time + i as f64 * dt;
        let (s, c) = (omega * t).sin_cos();
        acc += Complex64::new(v * c, -v * s);
    }
    acc * (2.0 / x.len() as f64)
}

/// Floor that forgives the last-ulp shortfall of numbers meant to be whole.
pub(crate) fn floor_eps(x: f64) -> f64 {
    (x * (1.0 + 1e-12)).floor()
}

/// Largest prefix of `x` spanning an integer number of carrier periods.
fn integer_period_prefix(x: &TimeSeries, omega0: f64) -> Result<usize> {
    let f0 = omega0 / (2.0 * std::f64::consts::PI);
    let total = x.len() as f64 / x.sample_rate;
    let periods = floor_eps(total * f0);
    if periods < 1.0 {
        return Err(Error::SignalTooShort { required: (x.sample_rate / f0).ceil() as usize, actual: x.len() });
    }
    let n = ((periods / f0) * x.sample_rate).round() as usize;
    Ok(n.min(x.len()))
}

/// Lock-in decomposition of `x` around the carrier at `omega0`.
///
/// The carrier amplitude and phase are estimated from the data by projection
/// over an integer number of periods, then
/// `n_I = 2 LP[x cos(w0 t + phi1)] - X1`, `n_Q = 2 LP[x sin(w0 t + phi1)]`,
/// `baseband = LP[x]` minus its mean. All three are decimated by `decimate`.
pub fn lockin_decompose(
    x: &TimeSeries,
    omega0: f64,
    lp_cutoff: f64,
    decimate: usize,
) -> Result<IqDecomposition> {
    let f0 = omega0 / (2.0 * std::f64::consts::PI);
    if lp_cutoff >= f0 / 2.0 {
        return Err(Error::CutoffTooHigh { cutoff: lp_cutoff, limit: f0 / 2.0 });
    }
    if decimate == 0 {
        return Err(Error::InvalidParameter("decimation factor must be >= 1".into()));
    }
    let n_proj = integer_period_prefix(x, omega0)?;
    let head = TimeSeries::new(x.samples[..n_proj].to_vec(), x.sample_rate, x.start_time)?;
    let c = project(&head, omega0);
    let carrier_amp = c.norm();
    let carrier_phase = wrap_phase(c.arg());

    // Carrier must stand well above the projection noise floor.
    let dt = x.dt();
    let mut resid_sq = 0.0;
    for (i, &v) in head.samples.iter().enumerate() {
        let t = head.start_time + i as f64 * dt;
        let r = v - carrier_amp * (omega0 * t + carrier_phase).cos();
        resid_sq += r * r;
    }
    let sigma = (resid_sq / n_proj as f64).sqrt();
    let floor = sigma * (2.0 / n_proj as f64).sqrt();
    if carrier_amp <= 10.0 * floor {
        return Err(Error::NoCarrier { detected: carrier_amp, floor });
    }

    // Mix the carrier-removed residual instead of the raw record: identical
    // in the lowpass band (the reconstructed carrier only adds content at w0
    // and 2 w0), but the filter edge artifacts then scale with the small
    // residual rather than with X1.
    let fs = x.sample_rate;
    let mut resid = Vec::with_capacity(x.len());
    let mut mi = Vec::with_capacity(x.len());
    let mut mq = Vec::with_capacity(x.len());
    for (i, &v) in x.samples.iter().enumerate() {
        let t = x.start_time + i as f64 * dt;
        let (s, c) = (omega0 * t + carrier_phase).sin_cos();
        let r = v - carrier_amp * c;
        resid.push(r);
        mi.push(2.0 * r * c);
        mq.push(2.0 * r * s);
    }
    let anchor = (fs / f0).round().max(1.0) as usize; // one carrier period
    let ni = lowpass_filtfilt(&mi, lp_cutoff, fs, anchor);
    let nq = lowpass_filtfilt(&mq, lp_cutoff, fs, anchor);
    let mut bb = lowpass_filtfilt(&resid, lp_cutoff, fs, anchor);
    let bb_mean = bb.iter().sum::<f64>() / bb.len() as f64;
    for v in &mut bb {
        *v -= bb_mean;
    }

    let dec = |v: Vec<f64>| -> Result<TimeSeries> {
        TimeSeries::new(v, fs, x.start_time)?.decimated(decimate)
    };
    Ok(IqDecomposition {
        baseband: dec(bb)?,
        inphase: dec(ni)?,
        quadrature: dec(nq)?,
        carrier_amp,
        carrier_phase,
        lp_cutoff,
    })
}

/// `a_n = n_I / X1`, `phi_n = -n_Q / X1`.
pub fn to_am_pm(d: &IqDecomposition) -> Result<AmPmProcesses> {
    if d.carrier_amp <= 0.0 || d.carrier_amp.is_nan() {
        return Err(Error::InvalidParameter("carrier amplitude must be > 0".into()));
    }
    let x1 = d.carrier_amp;
    let a_n = TimeSeries::new(
        d.inphase.samples.iter().map(|v| v / x1).collect(),
        d.inphase.sample_rate,
        d.inphase.start_time,
    )?;
    let phi_n = TimeSeries::new(
        d.quadrature.samples.iter().map(|v| -v / x1).collect(),
        d.quadrature.sample_rate,
        d.quadrature.start_time,
    )?;
    let peak = |ts: &TimeSeries| ts.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let small_signal_ok = peak(&a_n) <= 0.1 && peak(&phi_n) <= 0.1;
    Ok(AmPmProcesses { a_n, phi_n, small_signal_ok })
}

/// Project a two-tone record onto the carrier and its two sidebands and
/// split them into AM and PM content.
///
/// With upper/lower sideband amplitudes `u`, `l` referenced to the carrier
/// phase, returns `am = (u + conj(l)) / X1` and `pm = (u - conj(l)) / (j X1)`,
/// so a pure AM tone of depth m gives `(m, 0)` and a pure narrowband PM tone
/// of deviation beta gives `(0 + O(beta^2), beta)`.
///
/// The record must span an integer number of periods of both `omega0` and
/// `omega_m` (and hence of `omega0 +/- omega_m`).
pub fn sideband_split(x: &TimeSeries, omega0: f64, omega_m: f64) -> Result<(Complex64, Complex64)> {
    if omega_m <= 0.0 || omega_m.is_nan() || omega_m >= omega0 {
        return Err(Error::InvalidParameter("need 0 < omega_m < omega0".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let span = x.len() as f64 / x.sample_rate;
    let cycles_m = span * omega_m / two_pi;
    let cycles_0 = span * omega0 / two_pi;
    let near_int = |c: f64| (c - c.round()).abs() < 1e-6 * c.max(1.0);
    if cycles_m.round() < 1.0 || !near_int(cycles_m) || !near_int(cycles_0) {
        return Err(Error::UnresolvableTones(format!(
            "window holds {cycles_m:.4} modulation and {cycles_0:.4} carrier cycles; both must be integers"
        )));
    }
    let carrier = project(x, omega0);
    let x1 = carrier.norm();
    if x1 <= 0.0 {
        return Err(Error::NoCarrier { detected: x1, floor: 0.0 });
    }
    let phase_ref = Complex64::from_polar(1.0, -carrier.arg());
    let u = project(x, omega0 + omega_m) * phase_ref;
    let l = project(x, omega0 - omega_m) * phase_ref;
    let am = (u + l.conj()) / x1;
    let pm = (u - l.conj()) / Complex64::new(0.0, x1);
    Ok((am, pm))
}
