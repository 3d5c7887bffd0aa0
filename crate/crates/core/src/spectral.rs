//! PSD and autocorrelation estimation.
//!
//! Welch's averaged periodogram with one-sided density normalization:
//!
//! `S[k] = sum_segments |FFT(w x_seg)[k]|^2 / (fs * sum(w^2) * K)`,
//! doubled for 0 < k < N/2. Equivalent noise bandwidth
//! `ENBW = fs * sum(w^2) / sum(w)^2`. The record mean is removed before
//! segmenting so dc offsets from even-order nonlinearity do not pollute
//! bin 0. Segment accumulation runs in a fixed order, so results are
//! deterministic.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Tapering window applied per segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Hamming,
    Rect,
}

impl Window {
    pub fn name(&self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Rect => "rect",
        }
    }

    fn coefficients(&self, n: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
                .collect(),
            Window::Hamming => (0..n)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "rect" => Ok(Window::Rect),
            other => Err(Error::SpectralConfig(format!("unknown window '{other}'"))),
        }
    }
}

/// One-sided PSD estimate on an ascending frequency grid.
#[derive(Debug, Clone)]
pub struct PsdEstimate {
    /// Hz, strictly ascending, starting at 0.
    pub freqs: Vec<f64>,
    /// units^2/Hz, >= 0.
    pub values: Vec<f64>,
    pub n_segments: usize,
    pub window_name: &'static str,
    /// Equivalent noise bandwidth of one bin, Hz.
    pub enbw: f64,
}

impl PsdEstimate {
    /// Bin spacing in Hz.
    pub fn df(&self) -> f64 {
        if self.freqs.len() > 1 { self.freqs[1] - self.freqs[0] } else { 0.0 }
    }

    /// Total power by rectangle rule, `sum(values) * df`.
    pub fn integrated_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.df()
    }

    /// Mean of `values` over bins with `f_lo <= f <= f_hi`.
    pub fn band_mean(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let vals: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(_, v)| *v)
            .collect();
        if vals.is_empty() {
            return Err(Error::EmptyBand(format!("no bins in [{f_lo}, {f_hi}] Hz")));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Biased-lag autocorrelation estimate.
#[derive(Debug, Clone)]
pub struct AutocorrEstimate {
    /// Seconds, ascending from 0.
    pub lags: Vec<f64>,
    /// units^2; `values[0]` is the sample variance.
    pub values: Vec<f64>,
}

/// Welch PSD of `x`. `segment_len` must be a power of two no longer than the
/// record; `overlap_frac` in [0, 0.9].
pub fn welch_psd(
    x: &TimeSeries,
    segment_len: usize,
    overlap_frac: f64,
    window: Window,
) -> Result<PsdEstimate> {
    if segment_len == 0 || !segment_len.is_power_of_two() {
        return Err(Error::SpectralConfig(format!(
            "segment length must be a power of two, got {segment_len}"
        )));
    }
    if segment_len > x.len() {
        return Err(Error::SpectralConfig(format!(
            "segment length {segment_len} exceeds record length {}",
            x.len()
        )));
    }
    if !(0.0..=0.9).contains(&overlap_frac) {
        return Err(Error::SpectralConfig(format!(
            "overlap fraction must be in [0, 0.9], got {overlap_frac}"
        )));
    }

    let n = segment_len;
    let fs = x.sample_rate;
    let w = window.coefficients(n);
    let w_sum: f64 = w.iter().sum();
    let w_sq_sum: f64 = w.iter().map(|v| v * v).sum();
    let enbw = fs * w_sq_sum / (w_sum * w_sum);

    let mean = x.mean();
    let step = ((n as f64) * (1.0 - overlap_frac)).round().max(1.0) as usize;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut acc = vec![0.0f64; n / 2 + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    while start + n <= x.len() {
        for i in 0..n {
            buf[i] = Complex64::new((x.samples[start + i] - mean) * w[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        n_segments += 1;
        start += step;
    }
    debug_assert!(n_segments >= 1);

    let scale = 1.0 / (fs * w_sq_sum * n_segments as f64);
    let values: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..=n / 2).map(|k| k as f64 * fs / n as f64).collect();

    Ok(PsdEstimate { freqs, values, n_segments, window_name: window.name(), enbw })
}

/// Biased (1/N) autocorrelation of the mean-removed record, lags 0..=max_lag.
pub fn autocorrelation(x: &TimeSeries, max_lag: usize) -> Result<AutocorrEstimate> {
    if max_lag >= x.len() / 2 {
        return Err(Error::SpectralConfig(format!(
            "max_lag {max_lag} must be below half the record length {}",
            x.len()
        )));
    }
    let n = x.len();
    let mean = x.mean();
    let y: Vec<f64> = x.samples.iter().map(|v| v - mean).collect();
    let values: Vec<f64> = (0..=max_lag)
        .map(|l| (0..n - l).map(|i| y[i] * y[i + l]).sum::<f64>() / n as f64)
        .collect();
    let lags = (0..=max_lag).map(|l| l as f64 / x.sample_rate).collect();
    Ok(AutocorrEstimate { lags, values })
}

/// Band-averaged |H|^2 estimate: geometric mean of `out/in` over bins with
/// `f_lo <= f <= f_hi`. Grids must share the frequency axis.
pub fn psd_ratio_check(out: &PsdEstimate, inp: &PsdEstimate, band: (f64, f64)) -> Result<f64> {
    if out.freqs.len() != inp.freqs.len()
        || out
            .freqs
            .iter()
            .zip(&inp.freqs)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
    {
        return Err(Error::SpectralConfig(
            "PSD grids incompatible; use the same sample rate and segment config".into(),
        ));
    }
    let (f_lo, f_hi) = band;
    let mut log_sum = 0.0f64;
    let mut count = 0usize;
    let mut saw_zero_out = false;
    for ((f, o), i) in out.freqs.iter().zip(&out.values).zip(&inp.values) {
        if *f < f_lo || *f > f_hi {
            continue;
        }
        if *i <= 0.0 {
            return Err(Error::EmptyBand(format!("zero input PSD at {f} Hz")));
        }
        if *o <= 0.0 {
            saw_zero_out = true;
        } else {
            log_sum += (o / i).ln();
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBand(format!("no bins in [{f_lo}, {f_hi}] Hz")));
    }
    if saw_zero_out {
        return Ok(0.0); // geometric mean with a zero factor
    }
    Ok((log_sum / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{generate, theoretical_psd, NoiseModel, Seed};
    use crate::signal::{synth_tone, Excitation};
    use std::f64::consts::PI;

    fn white(psd: f64, fs: f64, n: usize, seed: u64) -> TimeSeries {
        generate(&NoiseModel::White { psd_level: psd }, Seed(seed), fs, n).unwrap()
    }

    #[test]
    fn white_noise_estimate_is_flat_at_the_right_level() {
        let model = NoiseModel::White { psd_level: 4e-18 };
        let ts = white(4e-18, 1e10, 1 << 18, 11);
        let psd = welch_psd(&ts, 1024, 0.5, Window::Hann).unwrap();
        // Mid-band average vs reference, within 1 dB.
        let avg = psd.band_mean(1e9, 4e9).unwrap();
        let want = theoretical_psd(&model, 2e9).unwrap();
        let db = 10.0 * (avg / want).log10();
        assert!(db.abs() < 1.0, "white PSD off by {db:.2} dB");
    }

    #[test]
    fn tone_power_concentrates_in_peak() {
        let a = 0.3;
        let fs = 1e9;
        let exc = Excitation::new(a, 2.0 * PI * 5e7).unwrap();
        let ts = synth_tone(&exc, fs, 65536.0 / fs).unwrap();
        let psd = welch_psd(&ts, 4096, 0.5, Window::Hann).unwrap();
        let peak = psd
            .values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        let f_pk = psd.freqs[peak];
        let lo = f_pk - psd.enbw;
        let hi = f_pk + psd.enbw;
        let power: f64 = psd
            .freqs
            .iter()
            .zip(&psd.values)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, v)| v * psd.df())
            .sum();
        let want = a * a / 2.0;
        let rel = (power - want).abs() / want;
        assert!(rel < 0.02, "tone power off by {rel:.3}");
    }

    #[test]
    fn zero_signal_gives_zero_psd() {
        let ts = TimeSeries::new(vec![0.0; 4096], 1e6, 0.0).unwrap();
        let psd = welch_psd(&ts, 512, 0.5, Window::Hann).unwrap();
        assert!(psd.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn welch_config_errors() {
        let ts = TimeSeries::new(vec![0.0; 100], 1e6, 0.0).unwrap();
        assert!(welch_psd(&ts, 512, 0.5, Window::Hann).is_err()); // longer than record
        assert!(welch_psd(&ts, 48, 0.5, Window::Hann).is_err()); // not a power of two
        let ts2 = TimeSeries::new(vec![0.0; 4096], 1e6, 0.0).unwrap();
        assert!(welch_psd(&ts2, 512, 0.95, Window::Hann).is_err()); // overlap
    }

    #[test]
    fn parseval_within_5_percent_for_every_window() {
        let ts = white(1e-12, 1e9, 1 << 17, 5);
        let var: f64 = {
            let m = ts.mean();
            ts.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / ts.len() as f64
        };
        for window in [Window::Hann, Window::Hamming, Window::Rect] {
            let psd = welch_psd(&ts, 1024, 0.5, window).unwrap();
            let rel = (psd.integrated_power() - var).abs() / var;
            assert!(rel < 0.05, "{}: Parseval off by {rel:.3}", window.name());
        }
    }

    #[test]
    fn flat_psd_unbiased_with_many_segments() {
        let ts = white(2e-15, 1e8, 1 << 17, 21);
        let psd = welch_psd(&ts, 2048, 0.5, Window::Hann).unwrap();
        assert!(psd.n_segments >= 64, "only {} segments", psd.n_segments);
        let avg = psd.band_mean(5e6, 4e7).unwrap();
        let db = 10.0 * (avg / 2e-15).log10();
        assert!(db.abs() < 0.5, "bias {db:.2} dB");
    }

    #[test]
    fn autocorrelation_of_white_noise() {
        let fs = 1e9;
        let ts = white(1e-14, fs, 1 << 16, 9);
        let n = ts.len() as f64;
        let var: f64 = {
            let m = ts.mean();
            ts.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
        };
        let ac = autocorrelation(&ts, 64).unwrap();
        assert!((ac.values[0] - var).abs() / var < 1e-12);
        let bound = 5.0 * ac.values[0] / n.sqrt();
        for (l, v) in ac.values.iter().enumerate().skip(1) {
            assert!(v.abs() < bound, "lag {l}: {v:.3e} vs bound {bound:.3e}");
        }
    }

    #[test]
    fn autocorrelation_of_tone_is_cosine() {
        let a = 0.5;
        let f0 = 1e6;
        let fs = 64e6;
        let exc = Excitation::new(a, 2.0 * PI * f0).unwrap();
        let ts = synth_tone(&exc, fs, 2048e-6).unwrap(); // 2048 periods
        let ac = autocorrelation(&ts, 256).unwrap();
        for (l, (tau, v)) in ac.lags.iter().zip(&ac.values).enumerate() {
            let want = a * a / 2.0 * (2.0 * PI * f0 * tau).cos();
            assert!(
                (v - want).abs() < 5e-3 * a * a,
                "lag {l}: got {v:.4e}, want {want:.4e}"
            );
        }
    }

    #[test]
    fn autocorrelation_of_zero_signal() {
        let ts = TimeSeries::new(vec![0.0; 1024], 1e6, 0.0).unwrap();
        let ac = autocorrelation(&ts, 100).unwrap();
        assert!(ac.values.iter().all(|&v| v == 0.0));
        assert!(autocorrelation(&ts, 512).is_err());
    }

    #[test]
    fn ratio_check_trivial_cases() {
        let ts = white(1e-14, 1e9, 1 << 15, 31);
        let psd_in = welch_psd(&ts, 1024, 0.5, Window::Hann).unwrap();
        let mut psd_out = psd_in.clone();
        for v in &mut psd_out.values {
            *v *= 4.0;
        }
        let r = psd_ratio_check(&psd_out, &psd_in, (1e7, 4e8)).unwrap();
        assert!((r - 4.0).abs() < 1e-12);
        let unity = psd_ratio_check(&psd_in, &psd_in, (1e7, 4e8)).unwrap();
        assert!((unity - 1.0).abs() < 1e-12);
        assert!(psd_ratio_check(&psd_out, &psd_in, (1e12, 2e12)).is_err());
    }

    #[test]
    fn wiener_khinchin_consistency() {
        // FFT of the (Hann-windowed, symmetrized) autocorrelation matches the
        // Welch estimate mid-band within 2 dB on white noise.
        let fs = 1e9;
        let ts = white(1e-14, fs, 1 << 16, 17);
        let max_lag = 511;
        let ac = autocorrelation(&ts, max_lag).unwrap();
        // Two-sided even extension, length 2*max_lag+2 (power of two).
        let m = 2 * (max_lag + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for l in 0..=max_lag {
            let w = 0.5 * (1.0 + (PI * l as f64 / (max_lag + 1) as f64).cos());
            buf[l] = Complex64::new(ac.values[l] * w, 0.0);
            if l > 0 {
                buf[m - l] = Complex64::new(ac.values[l] * w, 0.0);
            }
        }
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(m).process(&mut buf);
        // One-sided density: 2 * dt * FFT, at f_k = k fs / m.
        let welch = welch_psd(&ts, 1024, 0.5, Window::Hann).unwrap();
        let mut checked = 0;
        for (k, b) in buf.iter().enumerate().take(m / 2).skip(1) {
            let f = k as f64 * fs / m as f64;
            if !(5e7..=4e8).contains(&f) {
                continue;
            }
            let s_wk = 2.0 * b.re / fs;
            let s_welch = welch.band_mean(f - 2.0 * welch.df(), f + 2.0 * welch.df()).unwrap();
            let db = 10.0 * (s_wk / s_welch).log10();
            assert!(db.abs() < 2.0, "at {f:.2e} Hz: {db:.2} dB");
            checked += 1;
        }
        assert!(checked > 10);
    }
}
