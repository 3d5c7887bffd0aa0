//! The four subcommands: closed-form analysis, theory-vs-simulation
//! comparison, bipolar extraction, and stochastic PSD runs.

use rayon::prelude::*;

use nlnoise_core::analytic::{
    bipolar_equivalent_spec, bipolar_tf, closed_form_tf, harmonic_prediction, validity,
};
use nlnoise_core::bjt::{
    de_embed, export_op_table, extract_coeffs, import_op_table, linspace, terminal_resistances,
    trace_curves, BjtOpRow, DeEmbeddedRow,
};
use nlnoise_core::noise::{Seed, ToneProbe};
use nlnoise_core::signal::{CircuitSpec, Excitation};
use nlnoise_core::sim::{
    default_ratio_band, noise_run, two_tone_probe, Integrator, SimConfig, SimTarget,
};
use nlnoise_core::spectral::psd_ratio_check;

use crate::config::{Config, SweepPoint};
use crate::output::{fmt, RunDir};
use crate::CliError;

/// Relative error with the documented 1e-12 floor against theory zeros.
fn rel_err(measured: f64, theory: f64) -> f64 {
    (measured - theory).abs() / theory.abs().max(1e-12)
}

fn coord_header(points: &[SweepPoint]) -> Vec<String> {
    points
        .first()
        .map(|p| p.coords.iter().map(|(name, _)| name.clone()).collect())
        .unwrap_or_default()
}

fn coord_cells(point: &SweepPoint) -> Vec<String> {
    point.coords.iter().map(|(_, v)| fmt(*v)).collect()
}

fn circuit_and_excitation(cfg: &Config) -> Result<(CircuitSpec, Excitation), CliError> {
    let spec = cfg
        .circuit
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [circuit] section".into()))?
        .build()?;
    let exc = cfg
        .excitation
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [excitation] section".into()))?
        .build()?;
    Ok((spec, exc))
}

fn build_sim_config(
    cfg: &Config,
    target: &SimTarget,
    exc: &Excitation,
    omega_m: f64,
) -> Result<SimConfig, CliError> {
    let mut sim = SimConfig::recommended_two_tone(target, exc, omega_m, cfg.sim.probe_periods);
    let f0 = exc.f0();
    sim.sample_rate = cfg.sim.samples_per_cycle * f0;
    sim.integrator = match cfg.sim.integrator.as_str() {
        "trapezoidal" => Integrator::Trapezoidal,
        "rk4" => Integrator::Rk4,
        other => {
            return Err(CliError::Config(format!(
                "sim.integrator: unknown '{other}', expected trapezoidal or rk4"
            )))
        }
    };
    sim.tol = cfg.sim.tol;
    sim.max_step_nonlin_iter = cfg.sim.max_step_nonlin_iter;
    // Re-derive span in whole samples at the configured rate and transient.
    let tau = (2.0 * std::f64::consts::PI / exc.omega0).max(target_tau(target));
    let n_skip = (cfg.sim.transient_factor * tau * sim.sample_rate).ceil();
    let window = cfg.sim.probe_periods as f64 * 2.0 * std::f64::consts::PI / omega_m;
    let n_window = (window * sim.sample_rate).round();
    sim.transient_skip = n_skip / sim.sample_rate;
    sim.duration = (n_skip + n_window) / sim.sample_rate;
    Ok(sim)
}

fn target_tau(target: &SimTarget) -> f64 {
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

/// `analyze`: closed-form transfer functions, harmonic predictions and
/// validity over the sweep grid.
pub fn cmd_analyze(points: &[SweepPoint], out: &mut RunDir) -> Result<(), CliError> {
    let mut header = coord_header(points);
    header.extend(
        ["h_am", "h_pm", "validity_metric", "validity_ok", "v_o0", "v_o1", "v_o2"]
            .map(String::from),
    );
    let mut rows = Vec::new();
    for point in points {
        let (spec, exc) = circuit_and_excitation(&point.config)?;
        let tf = closed_form_tf(&spec, &exc).map_err(|e| CliError::Compute(e.to_string()))?;
        let report = validity(&spec, &exc);
        let mut row = coord_cells(point);
        row.push(fmt(tf.h_am.re));
        row.push(fmt(tf.h_pm.re));
        row.push(fmt(report.metric));
        row.push(report.small_signal_ok.to_string());
        match harmonic_prediction(&spec, &exc) {
            Ok(h) => {
                row.push(fmt(h[0].amplitude));
                row.push(fmt(h[1].amplitude));
                row.push(fmt(h[2].amplitude));
            }
            Err(_) => row.extend(["", "", ""].map(String::from)),
        }
        rows.push(row);
    }
    out.write_csv("results.csv", &header.join(","), &rows)?;
    out.log(&format!("analyze: wrote {} rows", rows.len()));
    Ok(())
}

struct ComparisonRow {
    cells: Vec<String>,
    failed: Option<String>,
}

/// `simulate`: per sweep point, closed-form theory next to the two-tone
/// measurement with relative errors. Failed points are marked and the sweep
/// continues.
pub fn cmd_simulate(points: &[SweepPoint], jobs: usize, out: &mut RunDir) -> Result<(), CliError> {
    let mut header = coord_header(points);
    header.extend(
        [
            "h_am_theory",
            "h_pm_theory",
            "h_am_measured",
            "h_pm_measured",
            "rel_err_am",
            "rel_err_pm",
            "validity_metric",
            "status",
        ]
        .map(String::from),
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let results: Vec<ComparisonRow> = pool.install(|| {
        points
            .par_iter()
            .map(|point| simulate_point(point).unwrap_or_else(|e| ComparisonRow {
                cells: {
                    let mut row = coord_cells(point);
                    row.extend((0..7).map(|_| String::new()));
                    row.push(format!("error: {e}"));
                    row
                },
                failed: Some(e.to_string()),
            }))
            .collect()
    });
    let rows: Vec<Vec<String>> = results.iter().map(|r| r.cells.clone()).collect();
    out.write_csv("results.csv", &header.join(","), &rows)?;
    let failures: Vec<&String> = results.iter().filter_map(|r| r.failed.as_ref()).collect();
    out.log(&format!(
        "simulate: {} points, {} failed",
        results.len(),
        failures.len()
    ));
    for f in &failures {
        out.log(&format!("  point error: {f}"));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Compute(format!("{} sweep point(s) failed", failures.len())))
    }
}

fn simulate_point(point: &SweepPoint) -> Result<ComparisonRow, CliError> {
    let cfg = &point.config;
    let (spec, exc) = circuit_and_excitation(cfg)?;
    let theory = closed_form_tf(&spec, &exc).map_err(|e| CliError::Compute(e.to_string()))?;
    let report = validity(&spec, &exc);
    let target = SimTarget::Circuit(spec);
    let probe = ToneProbe {
        amplitude: cfg.probe.amplitude,
        omega_m: cfg.probe.omega_m_ratio * exc.omega0,
    };
    let sim_cfg = build_sim_config(cfg, &target, &exc, probe.omega_m)?;
    let measured = two_tone_probe(&target, &exc, &probe, &sim_cfg)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let mut cells = coord_cells(point);
    cells.push(fmt(theory.h_am.re));
    cells.push(fmt(theory.h_pm.re));
    cells.push(fmt(measured.h_am.re));
    cells.push(fmt(measured.h_pm.re));
    cells.push(fmt(rel_err(measured.h_am.re, theory.h_am.re)));
    cells.push(fmt(rel_err(measured.h_pm.re, theory.h_pm.re)));
    cells.push(fmt(report.metric));
    cells.push("ok".into());
    Ok(ComparisonRow { cells, failed: None })
}

/// `extract`: curve-tracer pipeline plus the overall bipolar transfer
/// functions over a normalized-frequency sweep.
pub fn cmd_extract(cfg: &Config, out: &mut RunDir) -> Result<(), CliError> {
    let bjt = &cfg.bjt;
    let rows: Vec<BjtOpRow> = match bjt.source.as_str() {
        "synthetic" => {
            let dev = bjt.device();
            let grid = linspace(bjt.v_start, bjt.v_stop, bjt.v_points);
            trace_curves(&dev, &grid).map_err(|e| CliError::Compute(e.to_string()))?
        }
        "csv" => {
            let path = bjt
                .csv_path
                .as_ref()
                .ok_or_else(|| CliError::Config("bjt.csv_path: required for source = csv".into()))?;
            if !std::path::Path::new(path).exists() {
                return Err(CliError::Config(format!("bjt.csv_path: '{path}' not found")));
            }
            import_op_table(path).map_err(|e| CliError::Config(format!("bjt.csv_path: {e}")))?
        }
        other => {
            return Err(CliError::Config(format!(
                "bjt.source: unknown '{other}', expected synthetic or csv"
            )))
        }
    };
    if bjt.export_op_table {
        export_op_table(out.dir.join("op_table.csv"), &rows)
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let resistors = terminal_resistances(&rows).map_err(|e| CliError::Compute(e.to_string()))?;
    let de: Vec<DeEmbeddedRow> = de_embed(&rows).map_err(|e| CliError::Compute(e.to_string()))?;
    let bias_vbe = match (bjt.bias_vbe, bjt.bias_ic) {
        (Some(v), _) => v,
        (None, Some(ic)) => interpolate_bias(&de, ic)?,
        (None, None) => return Err(CliError::Config("bjt: set bias_vbe or bias_ic".into())),
    };
    let coeffs =
        extract_coeffs(&de, bias_vbe).map_err(|e| CliError::Compute(e.to_string()))?;
    let (eq_spec, k) = bipolar_equivalent_spec(&coeffs, &resistors)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let rc0 = match eq_spec {
        CircuitSpec::RcNonlinGC { r, c0, .. } => r * c0,
        _ => unreachable!(),
    };

    out.write_csv(
        "coeffs.csv",
        "g_pi1,g_pi2,g_m1,g_m2,c_pi0,c_pi1,bias_v_be,bias_i_c,k,r_b,r_e",
        &[vec![
            fmt(coeffs.g_pi1),
            fmt(coeffs.g_pi2),
            fmt(coeffs.g_m1),
            fmt(coeffs.g_m2),
            fmt(coeffs.c_pi0),
            fmt(coeffs.c_pi1),
            fmt(coeffs.bias_v_be),
            fmt(coeffs.bias_i_c),
            fmt(k),
            fmt(resistors.r_b),
            fmt(resistors.r_e),
        ]],
    )?;

    let mut rows_out = Vec::new();
    for i in 0..bjt.sweep_points {
        let frac = i as f64 / (bjt.sweep_points.max(2) - 1) as f64;
        let x = bjt.sweep_min * (bjt.sweep_max / bjt.sweep_min).powf(frac);
        let w0 = x / rc0;
        let exc = Excitation::new(1.0, w0).map_err(|e| CliError::Compute(e.to_string()))?;
        let tf =
            bipolar_tf(&coeffs, &resistors, &exc).map_err(|e| CliError::Compute(e.to_string()))?;
        rows_out.push(vec![fmt(w0), fmt(x), fmt(tf.h_am.re), fmt(tf.h_pm.re)]);
    }
    out.write_csv("results.csv", "omega0,rc0_omega0,h_am,h_pm", &rows_out)?;
    out.log(&format!(
        "extract: g_m1 = {:.4e} S, g_m2 = {:.4e} S/V, c_pi0 = {:.4e} F at i_c = {:.4e} A",
        coeffs.g_m1, coeffs.g_m2, coeffs.c_pi0, coeffs.bias_i_c
    ));
    Ok(())
}

fn interpolate_bias(de: &[DeEmbeddedRow], target_ic: f64) -> Result<f64, CliError> {
    let pos = de.windows(2).position(|w| w[0].i_c <= target_ic && target_ic <= w[1].i_c);
    let Some(i) = pos else {
        return Err(CliError::Config(format!(
            "bjt.bias_ic: {target_ic} A outside the traced range [{:.3e}, {:.3e}]",
            de.first().map(|r| r.i_c).unwrap_or(f64::NAN),
            de.last().map(|r| r.i_c).unwrap_or(f64::NAN)
        )));
    };
    // Exponential i_c(v_be): interpolate linearly in log current.
    let (a, b) = (&de[i], &de[i + 1]);
    let t = (target_ic.ln() - a.i_c.ln()) / (b.i_c.ln() - a.i_c.ln());
    Ok(a.v_be + t * (b.v_be - a.v_be))
}

/// `psd`: stochastic run; writes the three spectra and the band-ratio
/// summary against the closed-form values.
pub fn cmd_psd(cfg: &Config, seed: u64, out: &mut RunDir) -> Result<(), CliError> {
    let (spec, exc) = circuit_and_excitation(cfg)?;
    let noise = cfg
        .noise
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [noise] section".into()))?
        .build()?;
    let target = SimTarget::Circuit(spec);
    let f0 = exc.f0();
    let fs = cfg.psd.samples_per_cycle * f0;
    let tau = target_tau(&target).max(2.0 * std::f64::consts::PI / exc.omega0);
    let n_skip = (cfg.sim.transient_factor * tau * fs).ceil();
    let sim_cfg = SimConfig {
        sample_rate: fs,
        duration: (cfg.psd.n_samples as f64 + n_skip) / fs,
        integrator: Integrator::Trapezoidal,
        transient_skip: n_skip / fs,
        max_step_nonlin_iter: cfg.sim.max_step_nonlin_iter,
        tol: cfg.sim.tol,
    };
    let run = noise_run(&target, &exc, &noise, Seed(seed), &sim_cfg)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    out.write_psd("s_in.csv", &run.s_in)?;
    out.write_psd("s_an.csv", &run.s_an)?;
    out.write_psd("s_phin.csv", &run.s_phin)?;

    let band = cfg.psd.band.map(|b| (b[0], b[1])).unwrap_or_else(|| default_ratio_band(&exc));
    let theory = closed_form_tf(&spec, &exc).map_err(|e| CliError::Compute(e.to_string()))?;
    let am_sq = psd_ratio_check(&run.s_an, &run.s_in, band)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let pm_sq = psd_ratio_check(&run.s_phin, &run.s_in, band)
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let rows = vec![
        vec![
            "h_am_sq".to_string(),
            fmt(am_sq),
            fmt(theory.h_am.norm_sqr()),
            fmt(rel_err(am_sq, theory.h_am.norm_sqr())),
        ],
        vec![
            "h_pm_sq".to_string(),
            fmt(pm_sq),
            fmt(theory.h_pm.norm_sqr()),
            fmt(rel_err(pm_sq, theory.h_pm.norm_sqr())),
        ],
    ];
    out.write_csv("results.csv", "quantity,measured,theory,rel_err", &rows)?;
    out.log(&format!(
        "psd: band [{:.3e}, {:.3e}] Hz, |H_AM|^2 {:.4e} vs {:.4e}, |H_PM|^2 {:.4e} vs {:.4e}, {} segments",
        band.0,
        band.1,
        am_sq,
        theory.h_am.norm_sqr(),
        pm_sq,
        theory.h_pm.norm_sqr(),
        run.s_an.n_segments
    ));
    Ok(())
}
