use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not unitary (defect {defect:.3e} > {tolerance:.1e})")]
    NotUnitary { defect: f64, tolerance: f64 },

    #[error("integration failed to converge: {0}")]
    IntegrationFailure(String),

    #[error("phase undefined: off-diagonal element vanishes")]
    UndefinedPhase,

    #[error("pulses overlap: separation {separation:.3e} s < {required:.3e} s")]
    Overlap { separation: f64, required: f64 },

    #[error("replica budget exceeded: {requested} replicas requested, at most {allowed} allowed")]
    ReplicaBudget { requested: usize, allowed: usize },

    #[error("pairing requires an even number of pulses, got {0}")]
    OddLength(usize),

    #[error("singular information: outcome with zero probability has nonzero derivative")]
    SingularInformation,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("phase wrap ambiguity: {0}")]
    Ambiguity(String),

    #[error("non-monotonic phase map: {0}")]
    NonMonotonic(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
