use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bessel argument {0} outside [0, 100]")]
    BesselDomain(f64),
    #[error("bessel order {0} outside [-1000, 1000]")]
    BesselOrder(i64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("mixing angle undefined: zero detuning and zero dressed gap")]
    DegenerateAngle,
    #[error("rate sum not converged: tail {tail:e} exceeds 1e-6 of total {total:e}")]
    RateNotConverged { tail: f64, total: f64 },
    #[error("effective temperature undefined: {0}")]
    UndefinedTemperature(&'static str),
    #[error("Bloch steady state singular (gamma_1 = {gamma_1:e}, gamma_2 = {gamma_2:e})")]
    BlochSingular { gamma_1: f64, gamma_2: f64 },
    #[error("reflection gain diverges: Z_in + z0 vanishes")]
    GainDivergence,
    #[error("one-period propagator not unitary: deviation {0:e}")]
    NonUnitary(f64),
    #[error("{0} integration steps per period is below the minimum of 1000")]
    TooFewSteps(usize),
    #[error("monodromy not converged under step doubling: change {0:e}")]
    PropagatorNotConverged(f64),
    #[error("Floquet mode Fourier tail {0:e} exceeds 1e-6")]
    FourierCutoff(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("ragged grid: {0}")]
    RaggedGrid(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateAngle
                | Error::RateNotConverged { .. }
                | Error::UndefinedTemperature(_)
                | Error::BlochSingular { .. }
                | Error::GainDivergence
                | Error::NonUnitary(_)
                | Error::TooFewSteps(_)
                | Error::PropagatorNotConverged(_)
                | Error::FourierCutoff(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
