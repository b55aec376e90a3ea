use thiserror::Error;

/// Errors raised across the construction and experiment pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index {index} out of range (table has {len} rows)")]
    OutOfRange { index: usize, len: usize },

    #[error("precision insufficient: {0}")]
    PrecisionInsufficient(String),

    #[error("schedule overflow: requested denominator with {} bits exceeds budget of {budget} bits", show_bits(.bits))]
    ScheduleOverflow { bits: u64, budget: u64 },

    #[error("plateau empty: level n = {0} must be at least 17")]
    PlateauEmpty(u32),

    #[error("quadrature tolerance {0:e} not reached")]
    Quadrature(f64),

    #[error("degree {degree} too large for sample budget {samples}")]
    DegreeTooLarge { degree: String, samples: usize },

    #[error("frequency {0} exceeds the supported range")]
    FrequencyOverflow(String),

    #[error("positivity violated: sum of layer sup-norms {0} >= 1")]
    Positivity(f64),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("level mismatch: {0}")]
    Level(String),

    #[error("window too small: {0}")]
    Window(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

fn show_bits(bits: &u64) -> String {
    if *bits == u64::MAX {
        "more than 2^64".into()
    } else {
        bits.to_string()
    }
}
