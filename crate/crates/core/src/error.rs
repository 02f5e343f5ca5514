use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid all-reduce model: {0}")]
    InvalidModel(String),

    #[error("invalid network parameters: {0}")]
    InvalidNetwork(String),

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("fit rejected: fitted {coefficient} = {value:e} violates the model invariants")]
    FitRejected { coefficient: &'static str, value: f64 },

    #[error("trace parse error: {0}")]
    TraceParse(String),

    #[error("trace validation error: {0}")]
    TraceInvalid(String),

    #[error("layer index {index} out of range for a trace with {layers} layers")]
    LayerOutOfRange { index: usize, layers: usize },

    #[error("invalid merge plan: {0}")]
    InvalidPlan(String),

    #[error("planner rejected the model: {0}")]
    PlannerRejected(String),

    #[error("exhaustive search refused: {layers} layers would need 2^{} plan evaluations (limit is {max_layers} layers)", .layers.saturating_sub(1))]
    SearchTooLarge { layers: usize, max_layers: usize },

    #[error("zero compute time: speedup is undefined when forward plus backward time is 0")]
    ZeroCompute,

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
