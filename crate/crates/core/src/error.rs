use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The requested quantity only exists when `(1 - p) * alpha < c`.
    #[error("unstable at p = {p}: (1 - p) * alpha = {load} >= c = {servers}")]
    Unstable { p: f64, load: f64, servers: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no data: {0}")]
    Empty(String),

    #[error("non-finite evaluation at {0}")]
    NonFinite(f64),
}
