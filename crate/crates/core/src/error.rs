use thiserror::Error;

/// Errors produced by the codec, the training engine and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid quantization table: {0}")]
    InvalidTable(String),

    #[error("image must be converted to YCbCr or Gray before encoding (got {0})")]
    MustConvert(String),

    #[error("shape mismatch: {lhs:?} vs {rhs:?} ({context})")]
    Shape {
        lhs: Vec<usize>,
        rhs: Vec<usize>,
        context: String,
    },

    #[error("invalid optimizer state: {0}")]
    InvalidState(String),

    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("i/o error: {0}")]
    Io(std::io::Error),

    #[error("json error: {0}")]
    Json(serde_json::Error),

    #[error("csv error: {0}")]
    Csv(csv::Error),

    #[error("image error: {0}")]
    Image(image::ImageError),
}

macro_rules! wrap {
    ($($variant:ident($ty:ty)),*) => {$(
        impl From<$ty> for Error {
            fn from(e: $ty) -> Self {
                Error::$variant(e)
            }
        }
    )*};
}

wrap!(Io(std::io::Error), Json(serde_json::Error), Csv(csv::Error), Image(image::ImageError));

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(lhs: &[usize], rhs: &[usize], context: impl Into<String>) -> Error {
    Error::Shape {
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
        context: context.into(),
    }
}
