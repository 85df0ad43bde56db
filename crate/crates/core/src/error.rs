use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid site dimensions: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("site index {index} out of range for a space of {sites} sites")]
    SiteOutOfRange { index: usize, sites: usize },

    #[error("tensor product of an empty factor list")]
    EmptyProduct,

    #[error("operator is not unitary (max |U†U - 1| = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("operator is not Hermitian (max |A - A†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid realization: {0}")]
    InvalidRealization(String),

    #[error("conditioning event has zero probability: {0}")]
    ZeroProbability(String),

    #[error("Pauli coefficient has imaginary part {value:.3e} (input not a Hermitian projector?)")]
    ComplexCoefficient { value: f64 },

    #[error("probability table is missing {} setting(s), first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    MissingSettings(Vec<String>),

    #[error("realization is not certified: {0}")]
    NotCertified(String),

    #[error("observables carry party-dependent ±Y signs; outside the certified class")]
    MixedBranch,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
