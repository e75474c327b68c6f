use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenomeError {
    #[error("genome must have 10 or 15 alleles, got {0}")]
    Length(usize),
    #[error("base allele {index} = {value} outside [1, 42]")]
    BaseOutOfRange { index: usize, value: i64 },
    #[error("z-allele {index} = {value} outside [-42, 42]")]
    ZOutOfRange { index: usize, value: i64 },
    #[error("cannot parse allele {0:?}")]
    Parse(String),
    #[error("mutation rate {0} outside [0, 1]")]
    MutationRate(f64),
    #[error("mutation step {0} must be at least 1")]
    MutationStep(i16),
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("voxel grid is empty, nothing to fabricate")]
    EmptyGrid,
    #[error("smoothing steps must be non-negative, got {0}")]
    NegativeSteps(i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model input size must be 10 or 15, got {0}")]
    InputSize(usize),
    #[error("fitness scale must be positive, got {0}")]
    FitnessScale(f64),
    #[error("input length {got} does not match model input size {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Training(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitnessError {
    #[error("measurement request {0} not found")]
    NotFound(String),
    #[error("measurement request {0} is already resolved")]
    Conflict(String),
    #[error("invalid measurement: {0}")]
    Validation(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
}

/// One rejected configuration field.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid campaign config: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<FieldError>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("expected {expected} fitness values, got {got}")]
    BatchSize { expected: usize, got: usize },
    #[error("no evaluation is outstanding")]
    NothingPending,
    #[error("an evaluation batch is already outstanding")]
    Busy,
    #[error("fitness value {0} is not finite")]
    NonFinite(f64),
    #[error("campaign has finished")]
    Finished,
    #[error("operation requires a trained surrogate model")]
    NoModel,
}
