use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("material update failed at integration point {ip}: {message}")]
    Material { ip: usize, message: String },

    #[error("Newton did not converge at step {step} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("artifact store: {0}")]
    Store(String),

    #[error("missing or stale upstream artifact: rerun `{stage}`")]
    StaleArtifact { stage: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
