//! Additive AM/PM noise analysis for second-order-nonlinear circuits.
//!
//! A driven nonlinear circuit converts baseband noise at its input into
//! amplitude and phase fluctuations of the carrier at its output. This crate
//! computes the conversion gains twice, by independent routes, and checks
//! them against each other:
//!
//! * [`analytic`] holds the closed-form transfer functions H_AM and H_PM for
//!   memoryless stages, idealized single elements, the three nonlinear RC
//!   families, and a common-emitter bipolar stage via its equivalent RC
//!   circuit, plus the cascade composition rule and the offset-frequency
//!   resolved coupled solution.
//! * [`sim`] integrates the governing nonlinear ODEs in the time domain and
//!   measures the same transfer functions with a deterministic two-tone
//!   probe or with stochastic noise injection.
//! * [`iq`] extracts baseband, in-phase and quadrature noise components from
//!   a simulated waveform (lock-in demodulation, Hilbert transform, sideband
//!   projection) and maps them to the AM process `a_n = n_I / X1` and the PM
//!   process `phi_n = -n_Q / X1`.
//! * [`spectral`] estimates PSDs (Welch) and autocorrelations so that
//!   `S_an / S_in` and `S_phin / S_in` can be compared with |H_AM|^2 and
//!   |H_PM|^2.
//! * [`noise`] synthesizes seeded, bit-reproducible white and 1/f noise and
//!   the probe tone.
//! * [`bjt`] runs the curve-tracer pipeline: sweep a device model, de-embed
//!   terminal resistances, and extract the linear and second-order
//!   coefficients that feed the bipolar transfer functions.

pub mod analytic;
pub mod bjt;
pub mod error;
mod filter;
pub mod iq;
pub mod noise;
pub mod signal;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
