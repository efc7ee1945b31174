use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("regime {regime} out of range 0..{m}")]
    RegimeOutOfRange { regime: usize, m: usize },
    #[error("q-property violated: {0}")]
    QProperty(String),
    #[error("non-finite {what} at t={t}, x={x:?}, regime={regime}")]
    NonFinite {
        what: &'static str,
        t: f64,
        x: Vec<f64>,
        regime: usize,
    },
    #[error("particle {particle} blew up at t={t}")]
    BlowUp { particle: usize, t: f64 },
    #[error("first-order switching needs dt*M_q*(m-1) <= 0.5, got {0}")]
    StepTooLarge(f64),
    #[error("meet-and-merge coupling requires a constant generator; use basic_coupling")]
    StateDependentRates,
    #[error("measure size mismatch: {0} vs {1} atoms (enable subsampling)")]
    SizeMismatch(usize, usize),
    #[error("atom {atom:?} lies outside the bin range [{lo:?}, {hi:?})")]
    OutsideBins {
        atom: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    #[error("time series has no {0} column")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
