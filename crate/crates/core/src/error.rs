use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("time {t_fs} fs outside tabulated range [0, {t_max_fs}] fs")]
    Range { t_fs: f64, t_max_fs: f64 },

    #[error("invalid initial state: {0}")]
    InvalidState(String),

    #[error("quadrature did not converge for {quantity}: {nodes} nodes gave {value:e}, {refined_nodes} nodes gave {refined_value:e}")]
    Quadrature {
        quantity: String,
        nodes: usize,
        value: f64,
        refined_nodes: usize,
        refined_value: f64,
    },

    #[error("bath correlation has not decayed: |C({t_fs} fs)| / |C(0)| = {ratio:e}")]
    NonDecaying { t_fs: f64, ratio: f64 },

    #[error("limit not applicable: {0}")]
    NotApplicable(String),

    #[error("invariant violated at step {step} (t = {t_fs} fs): {detail}")]
    Invariant {
        step: usize,
        t_fs: f64,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by user input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::InvalidState(_)
                | Error::Config(_)
                | Error::Usage(_)
                | Error::Domain(_)
        )
    }
}
