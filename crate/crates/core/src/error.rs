use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AtlasError {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("invalid chart: {0}")]
    Invalid(String),
    #[error("chart {chart} glues its own elements {first} and {second}")]
    SelfGluing {
        chart: usize,
        first: usize,
        second: usize,
    },
    #[error("inconsistent transitions: {0}")]
    Inconsistent(String),
    #[error("point outside all elements of chart {chart}")]
    Domain { chart: usize },
    #[error("unsupported configuration at vertex {vertex}: {reason}")]
    Unsupported { vertex: usize, reason: String },
    #[error("invalid raw mesh: {0}")]
    RawMesh(String),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BasisError {
    #[error("invalid knot vector {knots:?}: {reason}")]
    InvalidKnots { knots: Vec<f64>, reason: String },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DualityError {
    #[error("knot vectors of lengths {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
    #[error("singular local system while building a dual functional: {0}")]
    Singular(String),
    #[error("linear dependence detected: {0}")]
    LinearDependence(String),
    #[error("space is outside the supported configuration: {0}")]
    Configuration(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("field does not provide derivatives of order {0}")]
    MissingDerivatives(usize),
    #[error("geometry map is not regular: min det(DG^T DG) = {min_det:e}")]
    NonRegularGeometry { min_det: f64 },
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("cannot place element orbit {0} in a patch")]
    Embedding(usize),
    #[error(transparent)]
    Duality(#[from] DualityError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum IoError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}
