use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("delay not grid-aligned: h = {h} is not an integer multiple of dt = {dt}")]
    DelayNotAligned { h: f64, dt: f64 },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("inadmissible control: {0}")]
    Inadmissible(String),

    #[error("corrector failed at step {step}: residual {residual:e} after {iterations} iterations")]
    SolverDiverged {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("implicit block singular at node {node}")]
    SingularBlock { node: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
