//! Error type shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Sample rate too low for the requested carrier.
    #[error("sample rate {actual} Hz below required {required} Hz for this carrier")]
    SamplingRate { required: f64, actual: f64 },

    /// A parameter violates its documented domain (non-finite, wrong sign, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Noise band limits inconsistent with the sample rate or each other.
    #[error("band limits: {0}")]
    BandLimits(String),

    /// Estimator configuration rejected (segment length, overlap, lag range).
    #[error("spectral estimator config: {0}")]
    SpectralConfig(String),

    /// Requested frequency band contains no usable bins or zero input power.
    #[error("empty or degenerate band: {0}")]
    EmptyBand(String),

    #[error("signal too short: {actual} samples, need at least {required}")]
    SignalTooShort { required: usize, actual: usize },

    /// Lock-in could not find a carrier well above the noise floor.
    #[error("no detectable carrier: amplitude {detected:.3e} vs floor {floor:.3e}")]
    NoCarrier { detected: f64, floor: f64 },

    #[error("lowpass cutoff {cutoff} Hz too high (limit {limit} Hz)")]
    CutoffTooHigh { cutoff: f64, limit: f64 },

    /// Window does not hold an integer number of periods of every tone.
    #[error("unresolvable tones: {0}")]
    UnresolvableTones(String),

    /// Circuit parameters make the requested formula meaningless (e.g. C0 = 0).
    #[error("degenerate element: {0}")]
    DegenerateElement(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Per-step implicit solve failed to converge.
    #[error("step solver diverged at t = {time:.6e} s (residual {residual:.3e})")]
    StepSolverDiverged { time: f64, residual: f64 },

    /// Simulated state left the physically meaningful region.
    #[error("guard violation at t = {time:.6e} s: |{value:.3e}| exceeds {limit:.3e}")]
    GuardViolation { time: f64, value: f64, limit: f64 },

    #[error("root finder failed: {0}")]
    RootFindFailed(String),

    #[error("non-monotonic data: {0}")]
    NonMonotonic(String),

    #[error("bias {bias} V outside usable grid [{lo}, {hi}] V")]
    BiasOutsideGrid { bias: f64, lo: f64, hi: f64 },

    #[error("grid too coarse near bias: spacing {max_spacing:.3e} V exceeds {limit:.3e} V")]
    GridTooCoarse { max_spacing: f64, limit: f64 },

    /// CSV schema or value-range violation on import.
    #[error("schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
