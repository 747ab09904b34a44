use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("sequence length {len} exceeds limit {limit}")]
    Length { len: usize, limit: usize },

    #[error("need at least {min} items, got {len}")]
    TooShort { len: usize, min: usize },

    #[error("degenerate step at index {index}: norm {norm:e} below threshold")]
    DegenerateStep { index: usize, norm: f64 },

    #[error("every step of the trajectory is degenerate")]
    AllStepsDegenerate,

    #[error("token id {0} is out of range")]
    TokenOutOfRange(u32),

    #[error("layer {layer} out of range (model has {n_layers} layers)")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: alloc::vec::Vec<usize>,
        actual: alloc::vec::Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
