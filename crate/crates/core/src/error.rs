use thiserror::Error;

/// Errors produced by the layout, geometry, sampling and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("window {window_h}x{window_w} does not fit canvas {canvas_h}x{canvas_w}")]
    WindowTooLarge {
        window_h: usize,
        window_w: usize,
        canvas_h: usize,
        canvas_w: usize,
    },

    #[error("invalid stride {stride} for window extent {window}")]
    InvalidStride { stride: usize, window: usize },

    #[error("canvas pixel ({row}, {col}) is not covered by any window")]
    Coverage { row: usize, col: usize },

    #[error("step {t} outside schedule range 0..={max}")]
    StepOutOfRange { t: usize, max: usize },

    #[error("backend error (window {window:?}): {message}")]
    Backend {
        window: Option<usize>,
        message: String,
    },

    #[error("key token {key} claimed by segments {first} and {second}")]
    Overlap {
        key: usize,
        first: usize,
        second: usize,
    },

    #[error("infeasible layout request: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tensor file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn backend(message: impl Into<String>) -> Self {
        Error::Backend {
            window: None,
            message: message.into(),
        }
    }

    /// Attach a window index to a backend error; other variants pass through.
    pub fn at_window(self, index: usize) -> Self {
        match self {
            Error::Backend { message, .. } => Error::Backend {
                window: Some(index),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
