use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("negative power {power} for device `{device}` at {timestamp}")]
    NegativePower {
        device: String,
        timestamp: i64,
        power: f64,
    },
    #[error("timestamp {0} cannot be represented as a UTC date")]
    InvalidTimestamp(i64),
    #[error("readings for device `{device}` go back in time at {timestamp}")]
    UnorderedStream { device: String, timestamp: i64 },
    #[error("device `{0}` is registered but has no readings")]
    DeviceNeverSeen(String),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("cannot train on empty data")]
    EmptyData,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} samples to seed the network, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("graph has no neurons")]
    EmptyGraph,
    #[error("device `{device}`: {source}")]
    Device {
        device: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("state {state} out of range (state count {count})")]
    StateOutOfRange { state: usize, count: usize },
    #[error("sequence needs at least {needed} elements, has {found}")]
    SequenceTooShort { needed: usize, found: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no states were visited")]
    NoVisitedStates,
    #[error("transition row ({state}, {action}) sums to {sum}")]
    NotStochastic {
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("discount factor {0} must lie in [0, 1)")]
    InvalidGamma(f64),
}

impl Error {
    pub(crate) fn for_device(device: &str, err: Error) -> Error {
        Error::Device {
            device: device.into(),
            source: alloc::boxed::Box::new(err),
        }
    }
}
