use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left_height}x{left_width} vs {right_height}x{right_width}")]
    DimensionMismatch { left_height: usize, left_width: usize, right_height: usize, right_width: usize },

    #[error("malformed file at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("png codec error: {0}")]
    Png(String),

    #[error("instance id {0} does not fit in 16 bits")]
    Overflow(u64),

    #[error("non-finite value {value} at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn mismatch(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch { left_height: a.0, left_width: a.1, right_height: b.0, right_width: b.1 }
    }
}
