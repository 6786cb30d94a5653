use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid of {points} points per axis cannot resolve cutoff {cutoff} (need at least {needed})")]
    Resolution {
        points: usize,
        cutoff: usize,
        needed: usize,
    },
    #[error("invalid norm specification: {0}")]
    InvalidSpec(String),
    #[error("density outside the model class: minimum {min:.6e} below floor {floor:.6e}")]
    ModelClass { min: f64, floor: f64 },
    #[error("sampler integrity violated: f(x) = {value:.9} exceeds envelope {envelope:.9}")]
    SamplerIntegrity { value: f64, envelope: f64 },
    #[error("invalid projection level {0} (must be >= 1)")]
    InvalidLevel(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("discretization error: {0}")]
    Discretization(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("z = {z} lies within {distance:.3e} of eigenvalue {eigenvalue}")]
    NearSingular {
        z: String,
        eigenvalue: f64,
        distance: f64,
    },
    #[error("ill-posed contour: eigenvalue {eigenvalue} at distance {distance:.3e} from the circle")]
    IllPosedContour { eigenvalue: f64, distance: f64 },
    #[error("gap violation: {0}")]
    GapViolation(String),
    #[error("contour encloses no eigenvalue")]
    EmptyContour,
    #[error("incompatible operands: {0}")]
    Incompatible(String),
    #[error("instability: {0}")]
    Instability(String),
    #[error("ill-conditioned perturbation: {0}")]
    Conditioning(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
