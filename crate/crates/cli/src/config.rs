//! TOML experiment configuration: schema structs, dotted-path overrides, and
//! sweep-axis expansion.
//!
//! The full schema is documented in `docs/config-schema.md`. Overrides from
//! `--set a.b.c=value` and sweep axes are applied to the raw TOML tree, and
//! the tree is re-validated into typed structs per sweep point.

use serde::{Deserialize, Serialize};

use nlnoise_core::noise::NoiseModel;
use nlnoise_core::signal::{CircuitSpec, Excitation};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub circuit: Option<CircuitCfg>,
    pub excitation: Option<ExcitationCfg>,
    #[serde(default)]
    pub probe: ProbeCfg,
    #[serde(default)]
    pub sim: SimCfg,
    pub noise: Option<NoiseCfg>,
    #[serde(default)]
    pub psd: PsdCfg,
    #[serde(default)]
    pub bjt: BjtCfg,
    pub sweep: Option<SweepCfg>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitCfg {
    pub kind: String,
    pub r: Option<f64>,
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationCfg {
    /// Volts.
    pub amplitude: f64,
    /// rad/s.
    pub omega0: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeCfg {
    /// Probe amplitude (V for voltage circuits, A for the bipolar stage).
    pub amplitude: f64,
    /// omega_m as a fraction of omega0.
    pub omega_m_ratio: f64,
}

impl Default for ProbeCfg {
    fn default() -> Self {
        ProbeCfg { amplitude: 1e-4, omega_m_ratio: 0.01 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimCfg {
    pub samples_per_cycle: f64,
    /// Transient skip as a multiple of max(R C0, one carrier period).
    pub transient_factor: f64,
    /// Measurement window in whole probe periods (two-tone runs).
    pub probe_periods: usize,
    pub integrator: String,
    pub tol: f64,
    pub max_step_nonlin_iter: usize,
}

impl Default for SimCfg {
    fn default() -> Self {
        SimCfg {
            samples_per_cycle: 100.0,
            transient_factor: 20.0,
            probe_periods: 4,
            integrator: "trapezoidal".into(),
            tol: 1e-12,
            max_step_nonlin_iter: 25,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    pub kind: String,
    pub psd_level: Option<f64>,
    pub psd_at_1hz: Option<f64>,
    pub f_low: Option<f64>,
    pub f_high: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdCfg {
    /// Total simulated samples (power of two recommended).
    pub n_samples: usize,
    pub samples_per_cycle: f64,
    /// Ratio band [f_lo, f_hi] in Hz; defaults to [f0/400, f0/100].
    pub band: Option<[f64; 2]>,
}

impl Default for PsdCfg {
    fn default() -> Self {
        PsdCfg { n_samples: 1 << 21, samples_per_cycle: 64.0, band: None }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BjtCfg {
    /// "synthetic" or "csv".
    pub source: String,
    pub csv_path: Option<String>,
    /// Bias specified either by collector current or directly by v_be.
    pub bias_ic: Option<f64>,
    pub bias_vbe: Option<f64>,
    /// Applied-voltage sweep for the curve tracer.
    pub v_start: f64,
    pub v_stop: f64,
    pub v_points: usize,
    /// Normalized-frequency sweep for the transfer-function output.
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_points: usize,
    /// Inner base-emitter swing held constant across the sweep, V.
    pub v_be_swing: f64,
    /// Also write the traced operating-point table.
    pub export_op_table: bool,
    pub device: DeviceCfg,
}

impl Default for BjtCfg {
    fn default() -> Self {
        BjtCfg {
            source: "synthetic".into(),
            csv_path: None,
            bias_ic: Some(1e-3),
            bias_vbe: None,
            v_start: 0.70,
            v_stop: 0.98,
            v_points: 281,
            sweep_min: 0.1,
            sweep_max: 10.0,
            sweep_points: 13,
            v_be_swing: 5e-4,
            export_op_table: false,
            device: DeviceCfg::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceCfg {
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

impl Default for DeviceCfg {
    fn default() -> Self {
        let d = nlnoise_core::bjt::SyntheticDevice::default();
        DeviceCfg {
            i_s: d.i_s,
            beta: d.beta,
            v_t: d.v_t,
            c_je0: d.c_je0,
            v_j: d.v_j,
            m_j: d.m_j,
            tau_f: d.tau_f,
            r_b: d.r_b,
            r_e: d.r_e,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path of a config leaf, e.g. "excitation.omega0".
    pub param: String,
    pub values: Vec<f64>,
}

impl CircuitCfg {
    pub fn build(&self) -> Result<CircuitSpec, CliError> {
        let need = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| {
                CliError::Config(format!("circuit.{field}: required for kind '{}'", self.kind))
            })
        };
        let spec = match self.kind.as_str() {
            "memoryless" => CircuitSpec::Memoryless {
                alpha1: need("alpha1", self.alpha1)?,
                alpha2: need("alpha2", self.alpha2)?,
            },
            "lin_cap_nonlin_g" => CircuitSpec::LinCapNonlinG {
                c0: need("c0", self.c0)?,
                g2: need("g2", self.g2)?,
            },
            "lin_g_nonlin_cap" => CircuitSpec::LinGNonlinCap {
                g1: need("g1", self.g1)?,
                c1: need("c1", self.c1)?,
            },
            "rc_nonlin_g" => CircuitSpec::RcNonlinG {
                r: need("r", self.r)?,
                c0: need("c0", self.c0)?,
                g2: need("g2", self.g2)?,
            },
            "rc_nonlin_c" => CircuitSpec::RcNonlinC {
                r: need("r", self.r)?,
                c0: need("c0", self.c0)?,
                c1: need("c1", self.c1)?,
            },
            "rc_nonlin_gc" => CircuitSpec::RcNonlinGC {
                r: need("r", self.r)?,
                c0: need("c0", self.c0)?,
                g2: need("g2", self.g2)?,
                c1: need("c1", self.c1)?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "circuit.kind: unknown '{other}', expected one of memoryless, \
                     lin_cap_nonlin_g, lin_g_nonlin_cap, rc_nonlin_g, rc_nonlin_c, rc_nonlin_gc"
                )))
            }
        };
        spec.validate().map_err(|e| CliError::Config(format!("circuit: {e}")))?;
        Ok(spec)
    }
}

impl ExcitationCfg {
    pub fn build(&self) -> Result<Excitation, CliError> {
        Excitation::new(self.amplitude, self.omega0)
            .map_err(|e| CliError::Config(format!("excitation: {e}")))
    }
}

impl NoiseCfg {
    pub fn build(&self) -> Result<NoiseModel, CliError> {
        let need = |field: &str, v: Option<f64>| {
            v.ok_or_else(|| {
                CliError::Config(format!("noise.{field}: required for kind '{}'", self.kind))
            })
        };
        match self.kind.as_str() {
            "white" => Ok(NoiseModel::White { psd_level: need("psd_level", self.psd_level)? }),
            "flicker" => Ok(NoiseModel::Flicker {
                psd_at_1hz: need("psd_at_1hz", self.psd_at_1hz)?,
                f_low: need("f_low", self.f_low)?,
                f_high: need("f_high", self.f_high)?,
            }),
            other => Err(CliError::Config(format!(
                "noise.kind: unknown '{other}', expected white or flicker"
            ))),
        }
    }
}

impl BjtCfg {
    pub fn device(&self) -> nlnoise_core::bjt::SyntheticDevice {
        nlnoise_core::bjt::SyntheticDevice {
            i_s: self.device.i_s,
            beta: self.device.beta,
            v_t: self.device.v_t,
            c_je0: self.device.c_je0,
            v_j: self.device.v_j,
            m_j: self.device.m_j,
            tau_f: self.device.tau_f,
            r_b: self.device.r_b,
            r_e: self.device.r_e,
        }
    }
}

/// Parse the config file into a raw TOML tree.
pub fn load_tree(path: &std::path::Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Apply one `a.b.c=value` override. The value is parsed as a TOML literal
/// and falls back to a string.
pub fn apply_override(tree: &mut toml::Table, setting: &str) -> Result<(), CliError> {
    let (path, raw) = setting
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set '{setting}': expected path=value")))?;
    let value = parse_literal(raw);
    set_path(tree, path.trim(), value)
        .map_err(|e| CliError::Config(format!("--set '{setting}': {e}")))
}

fn parse_literal(raw: &str) -> toml::Value {
    let probe = format!("v = {}", raw.trim());
    if let Ok(t) = probe.parse::<toml::Table>() {
        if let Some(v) = t.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.trim().to_string())
}

pub fn set_path(tree: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed path '{path}'"));
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("'{part}' in '{path}' is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Validate a TOML tree into the typed config.
pub fn validate(tree: &toml::Table) -> Result<Config, CliError> {
    Config::deserialize(tree.clone()).map_err(|e| CliError::Config(e.to_string()))
}

/// Reject unknown tag strings up front; sweeps only rewrite numeric leaves,
/// so a bad tag can never become valid later.
pub fn check_tags(cfg: &Config) -> Result<(), CliError> {
    if let Some(c) = &cfg.circuit {
        const KINDS: [&str; 6] = [
            "memoryless",
            "lin_cap_nonlin_g",
            "lin_g_nonlin_cap",
            "rc_nonlin_g",
            "rc_nonlin_c",
            "rc_nonlin_gc",
        ];
        if !KINDS.contains(&c.kind.as_str()) {
            return Err(CliError::Config(format!(
                "circuit.kind: unknown '{}', expected one of {}",
                c.kind,
                KINDS.join(", ")
            )));
        }
    }
    if let Some(n) = &cfg.noise {
        if !["white", "flicker"].contains(&n.kind.as_str()) {
            return Err(CliError::Config(format!(
                "noise.kind: unknown '{}', expected white or flicker",
                n.kind
            )));
        }
    }
    if !["trapezoidal", "rk4"].contains(&cfg.sim.integrator.as_str()) {
        return Err(CliError::Config(format!(
            "sim.integrator: unknown '{}', expected trapezoidal or rk4",
            cfg.sim.integrator
        )));
    }
    if !["synthetic", "csv"].contains(&cfg.bjt.source.as_str()) {
        return Err(CliError::Config(format!(
            "bjt.source: unknown '{}', expected synthetic or csv",
            cfg.bjt.source
        )));
    }
    Ok(())
}

/// One sweep point: the coordinate values in axis order plus the re-validated
/// config with those values applied.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub coords: Vec<(String, f64)>,
    pub config: Config,
}

/// Expand sweep axes into the cartesian grid of points (a single base point
/// when no sweep is configured).
pub fn expand_sweep(tree: &toml::Table) -> Result<Vec<SweepPoint>, CliError> {
    let base = validate(tree)?;
    let Some(sweep) = base.sweep.clone() else {
        return Ok(vec![SweepPoint { coords: Vec::new(), config: base }]);
    };
    if sweep.axes.is_empty() || sweep.axes.iter().any(|a| a.values.is_empty()) {
        return Err(CliError::Config("sweep.axes: every axis needs at least one value".into()));
    }
    for axis in &sweep.axes {
        if axis.values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config(format!("sweep axis '{}': non-finite value", axis.param)));
        }
    }
    let mut points = Vec::new();
    let mut index = vec![0usize; sweep.axes.len()];
    loop {
        let mut tree_point = tree.clone();
        let mut coords = Vec::new();
        for (axis, &i) in sweep.axes.iter().zip(&index) {
            let v = axis.values[i];
            set_path(&mut tree_point, &axis.param, toml::Value::Float(v))
                .map_err(CliError::Config)?;
            coords.push((axis.param.clone(), v));
        }
        tree_point.remove("sweep");
        let config = validate(&tree_point)?;
        points.push(SweepPoint { coords, config });
        // Odometer increment over the axis grid.
        let mut k = index.len();
        loop {
            if k == 0 {
                return Ok(points);
            }
            k -= 1;
            index[k] += 1;
            if index[k] < sweep.axes[k].values.len() {
                break;
            }
            index[k] = 0;
        }
    }
}
