use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can surface.
///
/// Each variant maps to a stable snake-case [`Error::code`] and a process
/// exit status via [`Error::exit_code`], so the CLI can report errors in a
/// machine-readable way.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("device {device}: table cost decreases at {shards} shards ({prev} -> {next})")]
    NonMonotoneCost {
        device: usize,
        shards: usize,
        prev: f64,
        next: f64,
    },
    #[error("device {device}: communication latency must be finite and non-negative")]
    NegativeLatency { device: usize },
    #[error("device {device}: invalid cost model: {reason}")]
    InvalidCostModel { device: usize, reason: String },
    #[error("device {device}: class {class} is not part of the task's class set")]
    UnknownClass { device: usize, class: u32 },
    #[error("device list is empty")]
    EmptyDeviceList,
    #[error("task must contain at least one shard")]
    ZeroShards,
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("device {device}: {shards} shards exceeds the cost table length {max}")]
    ShardsOutOfRange { device: usize, shards: usize, max: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("data size {data_batches}: need at least 3 samples, got {count}")]
    TooFewSamples { data_batches: u64, count: usize },
    #[error("data size {data_batches}: design matrix is rank deficient")]
    RankDeficient { data_batches: u64 },
    #[error("step two needs at least two distinct data sizes")]
    SingleDataSize,
    #[error("fitted slope {slope} is not positive")]
    NonPositiveSlope { slope: f64 },
    #[error("invalid trace sample: {0}")]
    InvalidSample(String),

    #[error("device {device} does not have a linear cost model")]
    NonLinearProfile { device: usize },
    #[error("expected exactly two devices, got {0}")]
    NotTwoDevices(usize),

    #[error("gradient shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("diversity denominator S + P = {denominator} is degenerate (S = {sum_sq})")]
    DegenerateDenominator { sum_sq: f64, denominator: f64 },
    #[error("invalid gradient: {0}")]
    InvalidGradient(String),
    #[error("need at least {needed} users, got {got}")]
    TooFewUsers { needed: usize, got: usize },

    #[error("target accuracy {target} is not below the asymptote {asymptote}")]
    Unreachable { target: f64, asymptote: f64 },
    #[error("convergence curves have equal exponents; break-even accuracy undefined")]
    DegenerateCurves,
    #[error("invalid convergence model: {0}")]
    InvalidConvergence(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Stable machine-readable identifier for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonMonotoneCost { .. } => "non_monotone_cost",
            Error::NegativeLatency { .. } => "negative_latency",
            Error::InvalidCostModel { .. } => "invalid_cost_model",
            Error::UnknownClass { .. } => "unknown_class",
            Error::EmptyDeviceList => "empty_device_list",
            Error::ZeroShards => "zero_shards",
            Error::InvalidTask(_) => "invalid_task",
            Error::ShardsOutOfRange { .. } => "shards_out_of_range",
            Error::Infeasible(_) => "infeasible",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SingleDataSize => "single_data_size",
            Error::NonPositiveSlope { .. } => "non_positive_slope",
            Error::InvalidSample(_) => "invalid_sample",
            Error::NonLinearProfile { .. } => "non_linear_profile",
            Error::NotTwoDevices(_) => "not_two_devices",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::DegenerateDenominator { .. } => "degenerate_denominator",
            Error::InvalidGradient(_) => "invalid_gradient",
            Error::TooFewUsers { .. } => "too_few_users",
            Error::Unreachable { .. } => "unreachable",
            Error::DegenerateCurves => "degenerate_curves",
            Error::InvalidConvergence(_) => "invalid_convergence",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::TooLarge(_) => "too_large",
            Error::Config(_) => "invalid_config",
            Error::Parse { .. } => "parse_error",
            Error::Io { .. } => "io_error",
            Error::Internal(_) => "internal",
        }
    }

    /// Process exit status: 2 validation, 3 infeasible, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            Error::Io { .. } | Error::Internal(_) => 4,
            _ => 2,
        }
    }
}
