use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("star radii out of bounds: inner {inner} m, outer {outer} m, limit {limit} m")]
    RadiusOutOfBounds { inner: f64, outer: f64, limit: f64 },

    #[error("phantom support is empty")]
    EmptyPhantom,

    #[error("transducer count {0} is not a perfect square")]
    NonSquareArray(usize),

    #[error(
        "arrival time {time:e} s from pixel {pixel} to transducer {transducer} lies outside the recording window [{start:e}, {end:e}] s"
    )]
    ArrivalOutOfWindow {
        pixel: usize,
        transducer: usize,
        time: f64,
        start: f64,
        end: f64,
    },

    #[error("pixel {pixel} is {distance:e} m from transducer {transducer}, closer than the minimum {minimum:e} m")]
    TransducerTooClose {
        pixel: usize,
        transducer: usize,
        distance: f64,
        minimum: f64,
    },

    #[error("Nyquist violation: 1/(2 dt) = {nyquist:e} Hz must exceed f0 + fwhm = {required:e} Hz")]
    NyquistViolation { nyquist: f64, required: f64 },

    #[error("kernel {kernel_rows}x{kernel_cols} does not fit in grid {grid_rows}x{grid_cols}")]
    KernelSize {
        kernel_rows: usize,
        kernel_cols: usize,
        grid_rows: usize,
        grid_cols: usize,
    },

    #[error("dense materialization needs {required} bytes, budget is {budget}")]
    MemoryBudgetExceeded { required: usize, budget: usize },

    #[error("design matrix is rank deficient and lambda = 0")]
    RankDeficient,

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e} below -{tolerance:e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("eigendecomposition failed to converge")]
    Eigendecomposition,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("data grid equals reconstruction grid (inverse crime); set allow_inverse_crime to override")]
    InverseCrime,

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn mismatch(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

/// Attaches a stage tag to an error.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage {
            stage,
            source: Box::new(source),
        })
    }
}
