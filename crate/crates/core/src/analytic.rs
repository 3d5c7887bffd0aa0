//! Closed-form AM/PM noise transfer functions.
//!
//! Conventions: the output of a driven stage is decomposed as
//! `x = X1 cos(w0 t + phi1) + n_I cos(w0 t + phi1) + n_Q sin(w0 t + phi1)`,
//! and H_AM, H_PM map the baseband input noise to `a_n = n_I / X1` and
//! `phi_n = -n_Q / X1` per unit input noise. For every family here both
//! transfer functions are real and flat in offset frequency; the
//! offset-resolved 3x3 solution in [`coupled_tf`] quantifies how small the
//! neglected derivative and fold-back couplings are.
//!
//! Families and their transfer pairs (D = 1 + (R C0 w0)^2):
//!
//! * memoryless `x_o = a1 x + a2 x^2`:
//!   H_AM = 2 a2 / a1, H_PM = 0
//! * linear C0 with parallel g2 v^2:
//!   H_AM = 0, H_PM = -2 g2 / (C0 w0)
//! * linear g1 with parallel C1 v:
//!   H_AM = 0, H_PM = C1 w0 / g1
//! * series-RC, nonlinear conductance:
//!   H_AM = -2 g2 R / D, H_PM = 2 g2 R^2 C0 w0 / D
//! * series-RC, nonlinear capacitance:
//!   H_AM = -R^2 C0 C1 w0^2 / D, H_PM = -R C1 w0 / D
//! * both:
//!   H_AM = -(2 g2 R + R^2 C0 C1 w0^2) / D,
//!   H_PM = (-R C1 w0 + 2 g2 R^2 C0 w0) / D
//!
//! The PM pair of the combined family cancels exactly at C1 = 2 g2 R C0.

use num_complex::Complex64;

use crate::bjt::{ExtractedCoeffs, TerminalResistances};
use crate::error::{Error, Result};
use crate::signal::{wrap_phase, CircuitSpec, Excitation, Harmonic, NoiseTransfer};

/// Small-signal validity check of the second-order expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub small_signal_ok: bool,
    /// Largest applicable expansion parameter, dimensionless.
    pub metric: f64,
    pub threshold: f64,
}

/// Default bound on |g2 R V_o1| and |R C1 V_o1 w0|.
pub const VALIDITY_THRESHOLD: f64 = 0.1;

/// Offset-frequency-resolved transfer from the input noise to the baseband,
/// in-phase and quadrature output components, normalized so that
/// `h_i / V_o1 = H_AM` and `-h_q / V_o1 = H_PM` in the flat limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledTf {
    pub h_bb: Complex64,
    pub h_i: Complex64,
    pub h_q: Complex64,
}

/// Closed-form H_AM / H_PM of a circuit family. For the full RC families the
/// result is independent of the excitation level (first-order theory).
pub fn closed_form_tf(spec: &CircuitSpec, exc: &Excitation) -> Result<NoiseTransfer> {
    spec.validate()?;
    let w0 = exc.omega0;
    match *spec {
        CircuitSpec::Memoryless { alpha1, alpha2 } => {
            if alpha1 == 0.0 {
                return Err(Error::DegenerateElement(
                    "memoryless stage needs a nonzero linear gain".into(),
                ));
            }
            Ok(NoiseTransfer::real(2.0 * alpha2 / alpha1, 0.0))
        }
        CircuitSpec::LinCapNonlinG { c0, g2 } => {
            if c0 == 0.0 {
                return Err(Error::DegenerateElement(
                    "C0 = 0 leaves no carrier path through the capacitor".into(),
                ));
            }
            // The neglected in-phase term (derivative of the baseband noise)
            // is out of model; see `coupled_tf` for the RC families.
            Ok(NoiseTransfer::real(0.0, -2.0 * g2 / (c0 * w0)))
        }
        CircuitSpec::LinGNonlinCap { g1, c1 } => Ok(NoiseTransfer::real(0.0, c1 * w0 / g1)),
        CircuitSpec::RcNonlinG { r, c0, g2 } => {
            let d = 1.0 + (r * c0 * w0).powi(2);
            Ok(NoiseTransfer::real(
                -2.0 * g2 * r / d,
                2.0 * g2 * r * r * c0 * w0 / d,
            ))
        }
        CircuitSpec::RcNonlinC { r, c0, c1 } => {
            let d = 1.0 + (r * c0 * w0).powi(2);
            Ok(NoiseTransfer::real(
                -r * r * c0 * c1 * w0 * w0 / d,
                -r * c1 * w0 / d,
            ))
        }
        CircuitSpec::RcNonlinGC { r, c0, g2, c1 } => {
            let d = 1.0 + (r * c0 * w0).powi(2);
            Ok(NoiseTransfer::real(
                -(2.0 * g2 * r + r * r * c0 * c1 * w0 * w0) / d,
                (-r * c1 * w0 + 2.0 * g2 * r * r * c0 * w0) / d,
            ))
        }
    }
}

/// Solve a 3x3 complex system by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[Complex64; 3]; 3], mut b: [Complex64; 3]) -> Result<[Complex64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
            .unwrap();
        if a[pivot][col].norm() < 1e-300 {
            return Err(Error::SingularSystem("coupled noise system is singular".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                let sub = f * a[col][k];
                a[row][k] -= sub;
            }
            let sub = f * b[col];
            b[row] -= sub;
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Frequency-domain solution of the coupled baseband / in-phase / quadrature
/// noise equations at offset `omega_m`, for the three series-RC families.
///
/// With `keep_derivatives = false` every d/dt coupling is dropped and with
/// `keep_foldback = false` the AM-to-baseband fold-back term is dropped; in
/// that double limit the result reproduces [`closed_form_tf`] exactly.
pub fn coupled_tf(
    spec: &CircuitSpec,
    exc: &Excitation,
    omega_m: f64,
    keep_derivatives: bool,
    keep_foldback: bool,
) -> Result<CoupledTf> {
    spec.validate()?;
    let (r, c0, g2, c1) = match *spec {
        CircuitSpec::RcNonlinG { r, c0, g2 } => (r, c0, g2, 0.0),
        CircuitSpec::RcNonlinC { r, c0, c1 } => (r, c0, 0.0, c1),
        CircuitSpec::RcNonlinGC { r, c0, g2, c1 } => (r, c0, g2, c1),
        _ => {
            return Err(Error::InvalidParameter(
                "coupled solution exists for the series-RC families only".into(),
            ))
        }
    };
    if omega_m < 0.0 {
        return Err(Error::InvalidParameter("omega_m must be >= 0".into()));
    }
    if omega_m >= exc.omega0 / 10.0 {
        return Err(Error::InvalidParameter(format!(
            "omega_m = {omega_m} violates omega_m < omega0 / 10 = {}",
            exc.omega0 / 10.0
        )));
    }
    let w0 = exc.omega0;
    let v_o1 = spec.fundamental_amplitude(exc).expect("RC family has a linear response");
    let jwm = if keep_derivatives {
        Complex64::new(0.0, omega_m)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let lhs = one + r * c0 * jwm; // 1 + j wm R C0 on every diagonal

    let fold_g2 = if keep_foldback { Complex64::new(g2 * r * v_o1, 0.0) } else { zero };
    // Unknown order: [v_BB, v_I, v_Q].
    let a = [
        [lhs, fold_g2 + 0.5 * r * c1 * v_o1 * jwm, zero],
        [
            Complex64::new(2.0 * g2 * r * v_o1, 0.0) + r * c1 * v_o1 * jwm,
            lhs,
            Complex64::new(r * c0 * w0, 0.0),
        ],
        [Complex64::new(-r * c1 * w0 * v_o1, 0.0), Complex64::new(-r * c0 * w0, 0.0), lhs],
    ];
    let b = [one, zero, zero];
    let x = solve3(a, b)?;
    Ok(CoupledTf { h_bb: x[0], h_i: x[1], h_q: x[2] })
}

impl CoupledTf {
    /// Map the normalized component transfers to an (H_AM, H_PM) pair.
    pub fn to_noise_transfer(&self, v_o1: f64) -> NoiseTransfer {
        NoiseTransfer { h_am: self.h_i / v_o1, h_pm: -self.h_q / v_o1 }
    }
}

/// Predicted dc, fundamental and 2nd-harmonic lines of the steady-state
/// response, to first order in the expansion parameter. Defined for the
/// single-nonlinearity series-RC families.
pub fn harmonic_prediction(spec: &CircuitSpec, exc: &Excitation) -> Result<Vec<Harmonic>> {
    // The k'th harmonic scales like the k'th power of the expansion
    // parameter, so the recursion itself only requires the parameter below
    // one; the stricter noise-validity threshold is reported separately.
    let report = validity(spec, exc);
    if report.metric >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "expansion parameter {:.3} >= 1; harmonic recursion diverges",
            report.metric
        )));
    }
    let h1 = spec
        .linear_tf(exc.omega0)
        .ok_or_else(|| Error::InvalidParameter("harmonic prediction needs a series-RC family".into()))?;
    let h2 = spec.linear_tf(2.0 * exc.omega0).unwrap();
    let v_o1 = h1.norm() * exc.amplitude;
    let phi1 = h1.arg();
    match *spec {
        CircuitSpec::RcNonlinG { r, g2, .. } => {
            let v_dc = -0.5 * g2 * r * v_o1 * v_o1;
            let v2 = 0.5 * g2.abs() * r * h2.norm() * v_o1 * v_o1;
            // The second-harmonic source is -g2 R v^2; sign absorbed as pi.
            let phi2 = wrap_phase(2.0 * phi1 + h2.arg() + if g2 >= 0.0 { std::f64::consts::PI } else { 0.0 });
            Ok(vec![
                Harmonic {
                    order: 0,
                    amplitude: v_dc.abs(),
                    phase: if v_dc >= 0.0 { 0.0 } else { std::f64::consts::PI },
                },
                Harmonic { order: 1, amplitude: v_o1, phase: wrap_phase(phi1) },
                Harmonic { order: 2, amplitude: v2, phase: phi2 },
            ])
        }
        CircuitSpec::RcNonlinC { r, c1, .. } => {
            // The quadratic term is a total time derivative, so no dc shift.
            let v2 = 0.5 * (r * c1 * exc.omega0).abs() * h2.norm() * v_o1 * v_o1;
            let phi2 = wrap_phase(
                2.0 * phi1 + h2.arg()
                    - if c1 >= 0.0 { 0.5 * std::f64::consts::PI } else { -0.5 * std::f64::consts::PI },
            );
            Ok(vec![
                Harmonic { order: 0, amplitude: 0.0, phase: 0.0 },
                Harmonic { order: 1, amplitude: v_o1, phase: wrap_phase(phi1) },
                Harmonic { order: 2, amplitude: v2, phase: phi2 },
            ])
        }
        _ => Err(Error::InvalidParameter(
            "harmonic prediction covers the single-nonlinearity RC families".into(),
        )),
    }
}

/// Expansion-parameter check: metric is the largest of |g2 R V_o1| and
/// |R C1 V_o1 w0| that applies to the family; the idealized single elements
/// and the memoryless stage report 0.
pub fn validity(spec: &CircuitSpec, exc: &Excitation) -> ValidityReport {
    let metric = match (*spec, spec.fundamental_amplitude(exc)) {
        (CircuitSpec::RcNonlinG { r, g2, .. }, Some(v_o1)) => (g2 * r * v_o1).abs(),
        (CircuitSpec::RcNonlinC { r, c1, .. }, Some(v_o1)) => (r * c1 * v_o1 * exc.omega0).abs(),
        (CircuitSpec::RcNonlinGC { r, g2, c1, .. }, Some(v_o1)) => {
            (g2 * r * v_o1).abs().max((r * c1 * v_o1 * exc.omega0).abs())
        }
        _ => 0.0,
    };
    ValidityReport {
        small_signal_ok: metric <= VALIDITY_THRESHOLD,
        metric,
        threshold: VALIDITY_THRESHOLD,
    }
}

/// AM composition of two cascaded quadratic stages:
/// `H_AM = H_AM_first + gain_first * H_AM_second`, where `gain_first` is the
/// first stage's linear (baseband) gain.
pub fn cascade_am(h_am_first: f64, linear_gain_first: f64, h_am_second: f64) -> f64 {
    h_am_first + linear_gain_first * h_am_second
}

/// Overall AM/PM transfer of the common-emitter stage, per unit base noise
/// current (units 1/A and rad/A).
///
/// The stage maps onto a series-RC circuit with both nonlinearities through
/// `k = 1 + g_pi1 (R_B + R_E) + g_m1 R_E`, `R = (R_B + R_E)/k`, `C0 = c_pi0`,
/// `C1 = c_pi1`, `g2 = (g_pi2 (R_B+R_E) + g_m2 R_E) / (R_B + R_E)`; the
/// collector current adds a memoryless stage with H_AM = 2 g_m2 / g_m1, and
/// the noise current enters scaled by -(R_B + R_E)/k.
pub fn bipolar_tf(
    coeffs: &ExtractedCoeffs,
    resistors: &TerminalResistances,
    exc: &Excitation,
) -> Result<NoiseTransfer> {
    let vals = [
        coeffs.g_pi1,
        coeffs.g_pi2,
        coeffs.g_m1,
        coeffs.g_m2,
        coeffs.c_pi0,
        coeffs.c_pi1,
    ];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("extracted coefficients must be finite".into()));
    }
    if coeffs.g_m1 <= 0.0 {
        return Err(Error::InvalidParameter("g_m1 must be > 0 at a forward-active bias".into()));
    }
    if resistors.r_b < 0.0 || resistors.r_e < 0.0 {
        return Err(Error::InvalidParameter("terminal resistances must be >= 0".into()));
    }
    let r_sum = resistors.r_b + resistors.r_e;
    if r_sum == 0.0 {
        return Err(Error::DegenerateElement(
            "R_B + R_E = 0 leaves the equivalent-circuit mapping undefined".into(),
        ));
    }
    let k = 1.0 + coeffs.g_pi1 * r_sum + coeffs.g_m1 * resistors.r_e;
    if k <= 0.0 || k.is_nan() {
        return Err(Error::InvalidParameter(format!("nonphysical loop gain k = {k}")));
    }
    let eq = CircuitSpec::RcNonlinGC {
        r: r_sum / k,
        c0: coeffs.c_pi0,
        g2: (coeffs.g_pi2 * r_sum + coeffs.g_m2 * resistors.r_e) / r_sum,
        c1: coeffs.c_pi1,
    };
    let inner = closed_form_tf(&eq, exc)?;
    let scale = -r_sum / k;
    Ok(NoiseTransfer {
        h_am: scale * (inner.h_am + Complex64::new(2.0 * coeffs.g_m2 / coeffs.g_m1, 0.0)),
        h_pm: scale * inner.h_pm,
    })
}

/// Equivalent series-RC spec of a bipolar stage (shared by the analytic path
/// and the simulator's cross-check of the direct state equation).
pub fn bipolar_equivalent_spec(
    coeffs: &ExtractedCoeffs,
    resistors: &TerminalResistances,
) -> Result<(CircuitSpec, f64)> {
    let r_sum = resistors.r_b + resistors.r_e;
    if r_sum == 0.0 {
        return Err(Error::DegenerateElement("R_B + R_E = 0".into()));
    }
    let k = 1.0 + coeffs.g_pi1 * r_sum + coeffs.g_m1 * resistors.r_e;
    if k <= 0.0 || k.is_nan() {
        return Err(Error::InvalidParameter(format!("nonphysical loop gain k = {k}")));
    }
    Ok((
        CircuitSpec::RcNonlinGC {
            r: r_sum / k,
            c0: coeffs.c_pi0,
            g2: (coeffs.g_pi2 * r_sum + coeffs.g_m2 * resistors.r_e) / r_sum,
            c1: coeffs.c_pi1,
        },
        k,
    ))
}
