use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("modulus must be positive")]
    ZeroModulus,

    #[error("{0} is even")]
    EvenNumber(u64),

    #[error("{0} is below the smallest odd semiprime 15")]
    TooSmall(u64),

    #[error("{n} exceeds the trial-division cap {cap}")]
    AboveCap { n: u64, cap: u64 },

    #[error("{0} is prime")]
    Prime(u64),

    #[error("{n} is a prime power {base}^{exponent}")]
    PrimePower { n: u64, base: u64, exponent: u32 },

    #[error("{n} has three or more prime factors {factors:?}")]
    ThreeOrMoreFactors { n: u64, factors: Vec<u64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state needs {requested} amplitudes, cap is {cap}")]
    CapExceeded { requested: u128, cap: usize },

    #[error("state norm {norm} deviates from 1 by more than 1e-9")]
    Integrity { norm: f64 },

    #[error("outcome {0} has zero marginal probability")]
    ImpossibleOutcome(u64),

    #[error("2^{qubits} does not exceed N^2 = {n_squared}; pass allow_small_register to override")]
    RegisterTooSmall { qubits: u32, n_squared: u128 },

    #[error("bin {bin} is not within 1/2 of any multiple of 2^{qubits}/{n}")]
    NotNearPeak { bin: u64, qubits: u32, n: u64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}
