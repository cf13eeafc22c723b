/// Crate-wide error type. The CLI maps `Usage` and `Config` (the caller's
/// fault) to exit code 1 and everything else (failed invariants, bad files,
/// bad checkpoints) to 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes that cannot be combined; the message names both shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A structurally invalid configuration (bad field value, unknown key).
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Caller misuse: bad CLI arguments, missing inputs, out-of-domain values.
    #[error("{0}")]
    Usage(String),
    /// Malformed or mismatched checkpoint data.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    /// A numerical check (self-test group, gradient comparison) came back red.
    #[error("{0}")]
    Failed(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code for this error when it escapes the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}
