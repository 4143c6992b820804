use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantum numbers (n={n}, l={l}, m={m}): {reason}")]
    Domain {
        n: i64,
        l: i64,
        m: i64,
        reason: String,
    },

    #[error(
        "radial integration failed for n={n}, l={l} at energy {energy:.6e} au \
         (grid r in [{r_min:.3e}, {r_max:.3e}]): {reason}"
    )]
    Solver {
        n: u32,
        l: u32,
        energy: f64,
        r_min: f64,
        r_max: f64,
        reason: String,
    },

    #[error("incompatible radial grids: {0}")]
    Grid(String),

    #[error(
        "kick operator truncated: column {label} has unitarity deficit {deficit:.3e} \
         above tolerance {tolerance:.1e}; raise l_max or widen the n-window"
    )]
    Truncation {
        label: String,
        deficit: f64,
        tolerance: f64,
    },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("packet norm changed by {deviation:.3e} after kick (tolerance {tolerance:.1e})")]
    NormDeviation { deviation: f64, tolerance: f64 },

    #[error("invalid wave packet: {0}")]
    InvalidPacket(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
