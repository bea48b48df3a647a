use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} exceeds the supported residue width")]
    ModulusTooLarge(u64),
    #[error("invalid group specification: {0}")]
    InvalidGroup(String),
    #[error("generator index {index} out of range for {count} generators")]
    BadLetter { index: usize, count: usize },
    #[error("polynomial error: {0}")]
    Polynomial(String),
    #[error("generating set is empty")]
    EmptyGenerators,
    #[error("quotient order exceeds cap of {cap} elements")]
    CapExceeded { cap: usize },
    #[error("element encoding overflows 64 bits for primes {0:?}")]
    EncodingOverflow(Vec<u64>),
    #[error("primes must be distinct: {0:?}")]
    DuplicatePrimes(Vec<u64>),
    #[error("size mismatch: vector has {got} entries, quotient has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e}, best estimate {estimate})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        estimate: f64,
    },
    #[error("word budget exceeded: {words} words > budget {budget}")]
    BudgetExceeded { words: u128, budget: u128 },
    #[error("prime {0} is not tracked by this walk")]
    UntrackedPrime(u64),
    #[error("family {family} requires {required}")]
    FamilyMismatch {
        family: &'static str,
        required: &'static str,
    },
    #[error("family is not large: density at p = {prime} is {density:.6} < floor {floor}")]
    NotLarge {
        prime: u64,
        density: f64,
        floor: f64,
    },
    #[error("prime range infeasible: {0}")]
    Infeasible(String),
    #[error("f(g) = 0 exactly")]
    ZeroValue,
    #[error("all tracked residues of f vanish for sample {sample}; exact tracking is off so f = 0 cannot be ruled out")]
    ZeroAmbiguity { sample: u64 },
    #[error("sample does not lie in the sifted set (divisible by {0})")]
    NotSifted(u64),
    #[error("quotient cache: {0}")]
    Cache(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that mean "beyond desk scale" rather than "bad input".
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. }
                | Error::BudgetExceeded { .. }
                | Error::EncodingOverflow(_)
                | Error::NoConvergence { .. }
                | Error::Infeasible(_)
        )
    }
}
