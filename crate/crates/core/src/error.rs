use std::path::PathBuf;

/// Errors produced by the weight-file reader and manifest checks.
#[derive(Debug, thiserror::Error)]
pub enum WeightError {
    #[error("bad magic {0:?}, expected \"MVTW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(String),
    #[error("entry {index}: name is not valid UTF-8")]
    InvalidName { index: usize },
    #[error("tensor `{name}`: unsupported dtype tag {dtype}")]
    UnsupportedDtype { name: String, dtype: u8 },
    #[error("tensor `{name}`: invalid shape {shape:?}")]
    InvalidShape { name: String, shape: Vec<usize> },
    #[error("duplicate tensor name `{0}`")]
    Duplicate(String),
    #[error("unexpected tensor `{0}` not in manifest")]
    Unknown(String),
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}`: shape {found:?} does not match manifest {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or hyperparameter violation, always names the offending dims.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input values outside an operation's domain (degenerate boxes, empty targets, ...).
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("sequence mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Config(format!($($arg)*))
    };
}
pub(crate) use config_err;
