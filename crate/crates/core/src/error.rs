use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration has {got} entries, chain has {expected} joints")]
    ConfigurationSize { expected: usize, got: usize },

    #[error("link index {index} out of range for a chain with {links} links")]
    LinkIndex { index: usize, links: usize },

    #[error("JJ^T is singular; use a positive damping factor")]
    Singular,

    #[error("pseudo-inverse requires rows <= cols, got {rows}x{cols}")]
    WideJacobian { rows: usize, cols: usize },

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid sensor {index}: {reason}")]
    InvalidSensor { index: usize, reason: String },

    #[error("invalid obstacle `{id}`: {reason}")]
    InvalidObstacle { id: String, reason: String },

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("invalid scenario at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(
        "non-finite joint velocity at tick {tick} (t = {t} s): sigma = {sigma}, lambda = {lambda}, d_min = {d_min}"
    )]
    NonFinite {
        tick: usize,
        t: f64,
        sigma: f64,
        lambda: f64,
        d_min: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
