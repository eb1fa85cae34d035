use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies behind or on the RIS plane (local x = {local_x:.3e})")]
    HalfSpaceViolation { local_x: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("BS-side RIS directions are not separable (condition number {condition:.3e})")]
    SeparationInfeasible { condition: f64 },

    #[error("dictionary grid is empty")]
    EmptyDictionary,

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("received signal is identically zero")]
    NoSignal,

    #[error("Fisher information matrix is singular (condition number {condition:.3e})")]
    SingularFim { condition: f64 },

    #[error("fusion needs at least one local estimate")]
    NoFusionInputs,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dictionary cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
