//! Curve-tracer extraction pipeline for a common-emitter bipolar stage.
//!
//! Sweeps a device model over applied base-emitter voltage, de-embeds the
//! terminal resistances to recover the inner junction voltage, and extracts
//! linear plus second-order coefficients:
//!
//! * `g_pi1 = gpi`,  `g_pi2 = d(gpi)/dV_BE / 2`
//! * `g_m1  = gm`,   `g_m2  = d(gm)/dV_BE / 2`
//! * `c_pi0 = cpi`,  `c_pi1 = 2 d(cpi)/dV_BE`
//!
//! Derivatives are taken with 3-point Lagrange differentiation on the
//! non-uniform de-embedded grid; de-embedding warps a uniform applied-voltage
//! grid, and resampling would add interpolation error to the quantity under
//! test.

use std::path::Path;

use crate::error::{Error, Result};

/// One operating point of the sweep, using the column names of the CSV
/// interchange format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BjtOpRow {
    /// Applied external base-emitter voltage, V.
    pub v_bxex: f64,
    /// Base current, A.
    pub i_b: f64,
    /// Collector current, A.
    pub i_c: f64,
    /// Base-emitter conductance, S.
    pub gpi: f64,
    /// Transconductance, S.
    pub gm: f64,
    /// Base-emitter capacitance, F.
    pub cpi: f64,
    /// Internal base resistance (linearized), ohm.
    pub rbi: f64,
    /// External base resistance, ohm.
    pub rbx_t: f64,
    /// Emitter resistance, ohm.
    pub re_t: f64,
}

/// Row after de-embedding: small-signal values against the inner V_BE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeEmbeddedRow {
    pub v_be: f64,
    pub i_b: f64,
    pub i_c: f64,
    pub gpi: f64,
    pub gm: f64,
    pub cpi: f64,
}

/// Extracted linear and 2nd-order coefficients at one bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedCoeffs {
    pub g_pi1: f64,
    pub g_pi2: f64,
    pub g_m1: f64,
    pub g_m2: f64,
    pub c_pi0: f64,
    pub c_pi1: f64,
    pub bias_v_be: f64,
    pub bias_i_c: f64,
}

/// Lumped terminal resistances, `R_B = rbx_t + rbi`, `R_E = re_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalResistances {
    pub r_b: f64,
    pub r_e: f64,
}

/// Analytic exponential-junction device standing in for a simulator-probed
/// transistor model.
///
/// i_C = i_s exp(v_BE / v_t), i_B = i_C / beta,
/// cpi = c_je0 / (1 - v_BE/v_j)^m_j + tau_f * gm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDevice {
    pub i_s: f64,
    pub beta: f64,
    pub v_t: f64,
    pub c_je0: f64,
    pub v_j: f64,
    pub m_j: f64,
    pub tau_f: f64,
    pub r_b: f64,
    pub r_e: f64,
}

impl Default for SyntheticDevice {
    /// Defaults bias to i_C = 1 mA near v_BE = 0.85 V.
    fn default() -> Self {
        SyntheticDevice {
            i_s: 5e-18,
            beta: 100.0,
            v_t: 25.85e-3,
            c_je0: 5e-15,
            v_j: 1.0,
            m_j: 0.33,
            tau_f: 0.2e-12,
            r_b: 60.0,
            r_e: 3.0,
        }
    }
}

impl SyntheticDevice {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.i_s, self.beta, self.v_t, self.c_je0, self.v_j, self.tau_f];
        if pos.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter("device parameters must be positive and finite".into()));
        }
        if !(0.0..1.0).contains(&self.m_j) || self.m_j == 0.0 {
            return Err(Error::InvalidParameter(format!("m_j must be in (0, 1), got {}", self.m_j)));
        }
        if self.r_b < 0.0 || self.r_e < 0.0 {
            return Err(Error::InvalidParameter("terminal resistances must be >= 0".into()));
        }
        Ok(())
    }

    pub fn i_c(&self, v_be: f64) -> f64 {
        self.i_s * (v_be / self.v_t).exp()
    }

    pub fn i_b(&self, v_be: f64) -> f64 {
        self.i_c(v_be) / self.beta
    }

    pub fn gm(&self, v_be: f64) -> f64 {
        self.i_c(v_be) / self.v_t
    }

    pub fn gpi(&self, v_be: f64) -> f64 {
        self.gm(v_be) / self.beta
    }

    pub fn cpi(&self, v_be: f64) -> f64 {
        self.c_je0 / (1.0 - v_be / self.v_j).powf(self.m_j) + self.tau_f * self.gm(v_be)
    }

    /// d(cpi)/dV_BE, used as the extraction oracle in tests.
    pub fn dcpi_dv(&self, v_be: f64) -> f64 {
        self.c_je0 * self.m_j / self.v_j * (1.0 - v_be / self.v_j).powf(-self.m_j - 1.0)
            + self.tau_f * self.gm(v_be) / self.v_t
    }

    /// V_BE at a target collector current.
    pub fn v_be_for_ic(&self, i_c: f64) -> f64 {
        self.v_t * (i_c / self.i_s).ln()
    }
}

/// Solve `v_bxex = v_be + r_b i_b(v_be) + r_e (i_b + i_c)(v_be)` for v_be.
fn solve_inner_vbe(dev: &SyntheticDevice, v_bxex: f64, guess: f64) -> Result<f64> {
    let g = |v: f64| {
        let ib = dev.i_b(v);
        let ic = dev.i_c(v);
        v + dev.r_b * ib + dev.r_e * (ib + ic) - v_bxex
    };
    // g is strictly increasing; bracket then Newton with bisection fallback.
    let mut lo = 0.0;
    let mut hi = v_bxex.max(1e-3);
    if g(hi) < 0.0 {
        // All drops positive, so v_be <= v_bxex always; this cannot happen.
        return Err(Error::RootFindFailed(format!("no bracket for v_bxex = {v_bxex}")));
    }
    let mut v = guess.clamp(lo, hi);
    for _ in 0..100 {
        let f = g(v);
        if f.abs() < 1e-15 * (1.0 + v_bxex.abs()) {
            return Ok(v);
        }
        if f > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let dg = 1.0 + (dev.r_b + dev.r_e) * dev.gpi(v) + dev.r_e * dev.gm(v);
        let mut next = v - f / dg;
        if next <= lo || next >= hi || next.is_nan() {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() < 1e-16 * (1.0 + v.abs()) {
            return Ok(next);
        }
        v = next;
    }
    Err(Error::RootFindFailed(format!(
        "inner V_BE did not converge for v_bxex = {v_bxex}"
    )))
}

/// Sweep the device over the applied-voltage grid and report per-point
/// small-signal values. Fails if any solved inner voltage reaches the
/// junction-capacitance guard 0.95 v_j.
pub fn trace_curves(dev: &SyntheticDevice, v_bxex_grid: &[f64]) -> Result<Vec<BjtOpRow>> {
    dev.validate()?;
    if v_bxex_grid.len() < 2 {
        return Err(Error::InvalidParameter("sweep needs at least 2 points".into()));
    }
    let mut rows = Vec::with_capacity(v_bxex_grid.len());
    let mut guess = v_bxex_grid[0] * 0.95;
    for &vx in v_bxex_grid {
        let v_be = solve_inner_vbe(dev, vx, guess)?;
        if v_be >= 0.95 * dev.v_j {
            return Err(Error::InvalidParameter(format!(
                "sweep reaches v_be = {v_be:.4} V, beyond the 0.95 v_j = {:.4} V guard",
                0.95 * dev.v_j
            )));
        }
        guess = v_be;
        rows.push(BjtOpRow {
            v_bxex: vx,
            i_b: dev.i_b(v_be),
            i_c: dev.i_c(v_be),
            gpi: dev.gpi(v_be),
            gm: dev.gm(v_be),
            cpi: dev.cpi(v_be),
            rbi: 0.0,
            rbx_t: dev.r_b,
            re_t: dev.r_e,
        });
    }
    Ok(rows)
}

/// Remove terminal-resistance drops:
/// `v_be = v_bxex - (rbx_t + rbi) i_b - re_t (i_b + i_c)`.
/// The de-embedded voltage must come out strictly increasing.
pub fn de_embed(rows: &[BjtOpRow]) -> Result<Vec<DeEmbeddedRow>> {
    let out: Vec<DeEmbeddedRow> = rows
        .iter()
        .map(|r| DeEmbeddedRow {
            v_be: r.v_bxex - (r.rbx_t + r.rbi) * r.i_b - r.re_t * (r.i_b + r.i_c),
            i_b: r.i_b,
            i_c: r.i_c,
            gpi: r.gpi,
            gm: r.gm,
            cpi: r.cpi,
        })
        .collect();
    for w in out.windows(2) {
        if w[1].v_be <= w[0].v_be {
            return Err(Error::NonMonotonic(format!(
                "de-embedded v_be not strictly increasing near {:.6} V",
                w[0].v_be
            )));
        }
    }
    Ok(out)
}

/// Quadratic Lagrange value and derivative at `x` through three nodes.
fn lagrange3(xs: [f64; 3], ys: [f64; 3], x: f64) -> (f64, f64) {
    let [x0, x1, x2] = xs;
    let [y0, y1, y2] = ys;
    let d0 = (x0 - x1) * (x0 - x2);
    let d1 = (x1 - x0) * (x1 - x2);
    let d2 = (x2 - x0) * (x2 - x1);
    let l0 = (x - x1) * (x - x2) / d0;
    let l1 = (x - x0) * (x - x2) / d1;
    let l2 = (x - x0) * (x - x1) / d2;
    let value = y0 * l0 + y1 * l1 + y2 * l2;
    let dl0 = (2.0 * x - x1 - x2) / d0;
    let dl1 = (2.0 * x - x0 - x2) / d1;
    let dl2 = (2.0 * x - x0 - x1) / d2;
    let deriv = y0 * dl0 + y1 * dl1 + y2 * dl2;
    (value, deriv)
}

const MAX_GRID_SPACING: f64 = 5e-3; // volts

/// Extract coefficients at `bias_vbe`, which must sit inside the grid with
/// at least two neighbors on each side.
pub fn extract_coeffs(rows: &[DeEmbeddedRow], bias_vbe: f64) -> Result<ExtractedCoeffs> {
    if rows.len() < 5 {
        return Err(Error::InvalidParameter("need at least 5 de-embedded rows".into()));
    }
    let lo = rows[2].v_be;
    let hi = rows[rows.len() - 3].v_be;
    if bias_vbe < lo || bias_vbe > hi {
        return Err(Error::BiasOutsideGrid { bias: bias_vbe, lo, hi });
    }
    // Nearest node, then its two neighbors.
    let j = rows
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.v_be - bias_vbe)
                .abs()
                .partial_cmp(&(b.1.v_be - bias_vbe).abs())
                .unwrap()
        })
        .unwrap()
        .0
        .clamp(1, rows.len() - 2);
    let local = [&rows[j - 1], &rows[j], &rows[j + 1]];
    let xs = [local[0].v_be, local[1].v_be, local[2].v_be];
    let max_spacing = (xs[1] - xs[0]).max(xs[2] - xs[1]);
    if max_spacing > MAX_GRID_SPACING {
        return Err(Error::GridTooCoarse { max_spacing, limit: MAX_GRID_SPACING });
    }

    let fit = |f: fn(&DeEmbeddedRow) -> f64| {
        lagrange3(xs, [f(local[0]), f(local[1]), f(local[2])], bias_vbe)
    };
    let (gpi, dgpi) = fit(|r| r.gpi);
    let (gm, dgm) = fit(|r| r.gm);
    let (cpi, dcpi) = fit(|r| r.cpi);
    let (i_c, _) = fit(|r| r.i_c);

    Ok(ExtractedCoeffs {
        g_pi1: gpi,
        g_pi2: 0.5 * dgpi,
        g_m1: gm,
        g_m2: 0.5 * dgm,
        c_pi0: cpi,
        c_pi1: 2.0 * dcpi,
        bias_v_be: bias_vbe,
        bias_i_c: i_c,
    })
}

/// Terminal resistances of a traced table (constant across rows by
/// construction; validated on import).
pub fn terminal_resistances(rows: &[BjtOpRow]) -> Result<TerminalResistances> {
    let first = rows.first().ok_or_else(|| Error::Schema("empty table".into()))?;
    Ok(TerminalResistances { r_b: first.rbx_t + first.rbi, r_e: first.re_t })
}

const HEADER: &str = "v_bxex,i_b,i_c,gpi,gm,cpi,rbi,rbx_t,re_t";

/// Read an operating-point table. Header must match the interchange schema
/// exactly; values are range-checked.
pub fn import_op_table<P: AsRef<Path>>(path: P) -> Result<Vec<BjtOpRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    {
        let got = reader.headers()?.iter().collect::<Vec<_>>().join(",");
        if got != HEADER {
            return Err(Error::Schema(format!(
                "header mismatch: expected '{HEADER}', got '{got}'"
            )));
        }
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 9 {
            return Err(Error::Schema(format!("row {}: expected 9 columns, got {}", line + 2, record.len())));
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            record[idx].trim().parse::<f64>().map_err(|_| {
                Error::Schema(format!("row {}: non-numeric {name} = '{}'", line + 2, &record[idx]))
            })
        };
        let row = BjtOpRow {
            v_bxex: num(0, "v_bxex")?,
            i_b: num(1, "i_b")?,
            i_c: num(2, "i_c")?,
            gpi: num(3, "gpi")?,
            gm: num(4, "gm")?,
            cpi: num(5, "cpi")?,
            rbi: num(6, "rbi")?,
            rbx_t: num(7, "rbx_t")?,
            re_t: num(8, "re_t")?,
        };
        validate_row(&row, line + 2)?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Schema("table has no data rows".into()));
    }
    for w in rows.windows(2) {
        if w[1].v_bxex <= w[0].v_bxex {
            return Err(Error::Schema("v_bxex must be strictly increasing".into()));
        }
    }
    Ok(rows)
}

fn validate_row(row: &BjtOpRow, line: usize) -> Result<()> {
    let check = |ok: bool, what: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!("row {line}: {what}")))
        }
    };
    check(row.i_b >= 0.0 && row.i_c >= 0.0, "currents must be >= 0 in a forward-active sweep")?;
    check(row.gpi > 0.0 && row.gpi <= 10.0, "gpi outside (0, 10] S")?;
    check(row.gm >= 1e-6 && row.gm <= 10.0, "gm outside [1e-6, 10] S")?;
    check(row.cpi > 0.0 && row.cpi <= 1e-6, "cpi outside (0, 1e-6] F")?;
    check(row.rbi >= 0.0 && row.rbx_t >= 0.0 && row.re_t >= 0.0, "resistances must be >= 0")?;
    check(
        [row.v_bxex, row.i_b, row.i_c, row.gpi, row.gm, row.cpi].iter().all(|v| v.is_finite()),
        "non-finite value",
    )
}

/// Write a table in the interchange schema (UTF-8, LF, shortest round-trip
/// float formatting).
pub fn export_op_table<P: AsRef<Path>>(path: P, rows: &[BjtOpRow]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    f.write_all(HEADER.as_bytes())?;
    f.write_all(b"\n")?;
    for r in rows {
        writeln!(
            f,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.v_bxex, r.i_b, r.i_c, r.gpi, r.gm, r.cpi, r.rbi, r.rbx_t, r.re_t
        )?;
    }
    Ok(())
}

/// Uniform grid helper for sweeps.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![start];
    }
    let step = (stop - start) / (n - 1) as f64;
    (0..n).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_sweep(dev: &SyntheticDevice) -> Vec<BjtOpRow> {
        trace_curves(dev, &linspace(0.70, 0.98, 281)).unwrap()
    }

    #[test]
    fn trace_rows_are_self_consistent() {
        let dev = SyntheticDevice::default();
        let rows = default_sweep(&dev);
        assert_eq!(rows.len(), 281);
        for r in rows.iter().step_by(40) {
            // Invert the exponential law from the reported collector current.
            let v_be = dev.v_be_for_ic(r.i_c);
            let recon = v_be + dev.r_b * r.i_b + dev.r_e * (r.i_b + r.i_c);
            assert!((recon - r.v_bxex).abs() < 1e-9, "KVL residual {:.2e}", recon - r.v_bxex);
            assert!((r.gm - r.i_c / dev.v_t).abs() / r.gm < 1e-12);
        }
    }

    #[test]
    fn gm_at_one_milliamp() {
        let dev = SyntheticDevice { i_s: 1e-17, beta: 100.0, v_t: 25.85e-3, ..Default::default() };
        let rows = default_sweep(&dev);
        // Find the row closest to i_c = 1 mA.
        let r = rows
            .iter()
            .min_by(|a, b| {
                (a.i_c - 1e-3).abs().partial_cmp(&(b.i_c - 1e-3).abs()).unwrap()
            })
            .unwrap();
        let want = r.i_c / dev.v_t; // ~38.68 mS at exactly 1 mA
        assert!((r.gm - want).abs() / want < 1e-12);
        assert!((want - 38.68e-3).abs() / 38.68e-3 < 0.05, "bias grid misses 1 mA region");
    }

    #[test]
    fn zero_resistances_make_terminals_transparent() {
        let dev = SyntheticDevice { r_b: 0.0, r_e: 0.0, ..Default::default() };
        let rows = trace_curves(&dev, &linspace(0.75, 0.85, 21)).unwrap();
        for r in &rows {
            let v_be = dev.v_be_for_ic(r.i_c);
            assert!((v_be - r.v_bxex).abs() < 1e-12);
        }
        let de = de_embed(&rows).unwrap();
        for (r, d) in rows.iter().zip(&de) {
            assert_eq!(r.v_bxex, d.v_be);
        }
    }

    #[test]
    fn sweep_beyond_junction_guard_errors() {
        let dev = SyntheticDevice { r_b: 0.0, r_e: 0.0, ..Default::default() };
        // 0.95 * v_j = 0.95 V applied directly to the junction.
        let err = trace_curves(&dev, &linspace(0.90, 0.96, 13)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)), "got {err:?}");
    }

    #[test]
    fn de_embed_arithmetic_example() {
        let row = BjtOpRow {
            v_bxex: 0.9,
            i_b: 10e-6,
            i_c: 1e-3,
            gpi: 1e-3,
            gm: 38e-3,
            cpi: 3e-14,
            rbi: 40.0,
            rbx_t: 60.0,
            re_t: 1.0,
        };
        let mut row2 = row;
        row2.v_bxex = 0.91;
        row2.i_b = 12e-6;
        let de = de_embed(&[row, row2]).unwrap();
        // 0.9 - 100 * 10e-6 - 1 * 1.01e-3 = 0.89799
        assert!((de[0].v_be - 0.89799).abs() < 1e-12, "got {}", de[0].v_be);
    }

    #[test]
    fn de_embed_round_trip_recovers_model_voltage() {
        let dev = SyntheticDevice::default();
        let rows = default_sweep(&dev);
        let de = de_embed(&rows).unwrap();
        for d in de.iter().step_by(40) {
            let want = dev.v_be_for_ic(d.i_c);
            assert!((d.v_be - want).abs() < 1e-9, "v_be {} vs {}", d.v_be, want);
        }
    }

    #[test]
    fn de_embed_rejects_non_monotone_result() {
        let mk = |v_bxex: f64, i_b: f64| BjtOpRow {
            v_bxex,
            i_b,
            i_c: 0.0,
            gpi: 1e-3,
            gm: 1e-2,
            cpi: 1e-14,
            rbi: 0.0,
            rbx_t: 1e4,
            re_t: 0.0,
        };
        // Large R_B and a jump in i_b fold the de-embedded voltage back.
        let rows = vec![mk(0.80, 1e-6), mk(0.81, 5e-6)];
        assert!(matches!(de_embed(&rows).unwrap_err(), Error::NonMonotonic(_)));
    }

    #[test]
    fn extraction_matches_analytic_derivatives() {
        let dev = SyntheticDevice::default();
        let de = de_embed(&default_sweep(&dev)).unwrap();
        let bias = dev.v_be_for_ic(1e-3);
        let c = extract_coeffs(&de, bias).unwrap();

        let gm = dev.gm(bias);
        assert!((c.g_m1 - gm).abs() / gm < 0.02, "g_m1");
        let g_m2_want = gm / (2.0 * dev.v_t); // ~748 mS/V at 1 mA
        assert!((c.g_m2 - g_m2_want).abs() / g_m2_want < 0.02, "g_m2 {} vs {}", c.g_m2, g_m2_want);
        // Ratio identity of the exponential law: g_pi2 / g_pi1 = 1 / (2 v_t).
        let ratio = c.g_pi2 / c.g_pi1;
        let want = 1.0 / (2.0 * dev.v_t);
        assert!((ratio - want).abs() / want < 0.02, "g_pi2/g_pi1 {} vs {}", ratio, want);
        let c_pi1_want = 2.0 * dev.dcpi_dv(bias);
        assert!((c.c_pi1 - c_pi1_want).abs() / c_pi1_want < 0.02, "c_pi1");
        assert!((c.bias_i_c - 1e-3).abs() / 1e-3 < 0.01);
    }

    #[test]
    fn constant_cpi_gives_zero_c_pi1() {
        let dev = SyntheticDevice::default();
        let mut de = de_embed(&default_sweep(&dev)).unwrap();
        for d in &mut de {
            d.cpi = 2e-14;
        }
        let bias = dev.v_be_for_ic(1e-3);
        let c = extract_coeffs(&de, bias).unwrap();
        assert!(c.c_pi1.abs() < 1e-20, "c_pi1 = {}", c.c_pi1);
    }

    #[test]
    fn central_difference_order_check() {
        // Quadrupling grid density must shrink the derivative error ~16x.
        let dev = SyntheticDevice::default();
        let bias = dev.v_be_for_ic(1e-3);
        let err_for = |n: usize| {
            let rows = trace_curves(&dev, &linspace(0.70, 0.98, n)).unwrap();
            let de = de_embed(&rows).unwrap();
            let c = extract_coeffs(&de, bias).unwrap();
            (c.g_m2 - dev.gm(bias) / (2.0 * dev.v_t)).abs()
        };
        let coarse = err_for(141); // 2 mV applied spacing
        let fine = err_for(561); // 0.5 mV
        let gain = coarse / fine;
        assert!(gain > 8.0 && gain < 32.0, "O(h^2) scaling violated: {gain:.1}x");
    }

    #[test]
    fn skipping_de_embed_biases_g_m2_low() {
        let dev = SyntheticDevice { r_b: 100.0, r_e: 3.0, ..Default::default() };
        let rows = trace_curves(&dev, &linspace(0.70, 1.05, 351)).unwrap();
        let bias = dev.v_be_for_ic(1e-3);
        let g_m2_want = dev.gm(bias) / (2.0 * dev.v_t);

        // Naive path: treat the applied voltage as the junction voltage.
        let naive: Vec<DeEmbeddedRow> = rows
            .iter()
            .map(|r| DeEmbeddedRow {
                v_be: r.v_bxex,
                i_b: r.i_b,
                i_c: r.i_c,
                gpi: r.gpi,
                gm: r.gm,
                cpi: r.cpi,
            })
            .collect();
        let bias_naive = rows
            .iter()
            .min_by(|a, b| (a.i_c - 1e-3).abs().partial_cmp(&(b.i_c - 1e-3).abs()).unwrap())
            .unwrap()
            .v_bxex;
        let c_naive = extract_coeffs(&naive, bias_naive).unwrap();
        let bias_err = (c_naive.g_m2 - g_m2_want) / g_m2_want;
        assert!(bias_err < -0.10, "naive bias only {bias_err:.3}");

        let c_good = extract_coeffs(&de_embed(&rows).unwrap(), bias).unwrap();
        let good_err = ((c_good.g_m2 - g_m2_want) / g_m2_want).abs();
        assert!(good_err < 0.02, "de-embedded error {good_err:.4}");
    }

    #[test]
    fn bias_and_grid_guards() {
        let dev = SyntheticDevice::default();
        let de = de_embed(&default_sweep(&dev)).unwrap();
        assert!(matches!(
            extract_coeffs(&de, 0.5).unwrap_err(),
            Error::BiasOutsideGrid { .. }
        ));
        let coarse_rows = trace_curves(&dev, &linspace(0.70, 0.98, 15)).unwrap();
        let coarse = de_embed(&coarse_rows).unwrap();
        let bias = dev.v_be_for_ic(1e-3);
        assert!(matches!(
            extract_coeffs(&coarse, bias).unwrap_err(),
            Error::GridTooCoarse { .. }
        ));
    }

    #[test]
    fn csv_import_export_round_trip() {
        let dev = SyntheticDevice::default();
        let rows = trace_curves(&dev, &linspace(0.70, 0.90, 201)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op_table.csv");
        export_op_table(&path, &rows).unwrap();
        let back = import_op_table(&path).unwrap();
        assert_eq!(back.len(), 201);
        assert_eq!(rows, back, "round trip must be bit-identical");
    }

    #[test]
    fn csv_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        // Missing the cpi column.
        std::fs::write(&path, "v_bxex,i_b,i_c,gpi,gm,rbi,rbx_t,re_t\n0.8,1e-6,1e-4,1e-4,4e-3,0,60,3\n").unwrap();
        assert!(matches!(import_op_table(&path).unwrap_err(), Error::Schema(_)));
        // Non-numeric cell.
        std::fs::write(
            &path,
            "v_bxex,i_b,i_c,gpi,gm,cpi,rbi,rbx_t,re_t\n0.8,oops,1e-4,1e-4,4e-3,2e-14,0,60,3\n",
        )
        .unwrap();
        assert!(matches!(import_op_table(&path).unwrap_err(), Error::Schema(_)));
        // Unit-range violation: gm far too large.
        std::fs::write(
            &path,
            "v_bxex,i_b,i_c,gpi,gm,cpi,rbi,rbx_t,re_t\n0.8,1e-6,1e-4,1e-4,50.0,2e-14,0,60,3\n",
        )
        .unwrap();
        assert!(matches!(import_op_table(&path).unwrap_err(), Error::Schema(_)));
    }
}
