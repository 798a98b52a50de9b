use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("evaluation error at t = {point:?}: {msg}")]
    Eval { point: Vec<f64>, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("not orderable: {0}")]
    NotOrderable(String),

    #[error("point outside domain {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular matrix encountered: {0}")]
    Singular(String),

    #[error("unknown scenario id: {0}")]
    UnknownScenario(String),

    #[error("schema error: {0}")]
    Schema(String),
}
