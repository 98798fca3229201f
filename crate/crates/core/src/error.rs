use thiserror::Error;

/// Grid location of a pointwise failure, as `(i, j, k)` indices with `i` fastest.
pub type GridIndex = [usize; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector is not unit timelike: u.u = {norm}")]
    NotUnitTimelike { norm: f64 },

    #[error("energy density must be positive, got {0}")]
    NonPositiveDensity(f64),

    #[error("inadmissible transport model: {0}")]
    InadmissibleModel(String),

    #[error("degenerate coefficient {name} = {value:e}")]
    DegenerateCoefficient { name: &'static str, value: f64 },

    #[error("principal matrix A^0 near singular (min singular value {min_sv:e}) at {location:?}")]
    NearSingularA0 { min_sv: f64, location: Option<GridIndex> },

    #[error("negative discriminant {discriminant:e} in the {family} root family")]
    ComplexRoots { family: &'static str, discriminant: f64 },

    #[error("eigenvalue cluster at {lambda} has {found} independent eigenvectors, expected {expected}")]
    DefectiveCluster { lambda: f64, expected: usize, found: usize },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("energy density {min} falls below the floor {floor} at {location:?}")]
    DensityFloorViolated { min: f64, floor: f64, location: Option<GridIndex> },

    #[error("constraint drift {value:e} exceeds {limit:e} at {location:?}")]
    ConstraintDrift { value: f64, limit: f64, location: Option<GridIndex> },

    #[error("state sup norm grew by a factor {ratio:e}")]
    Runaway { ratio: f64 },

    #[error("non-finite value in state at {location:?}")]
    NonFiniteState { location: Option<GridIndex> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
