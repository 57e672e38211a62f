use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SplineError {
    #[error("degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("knot vector is not clamped: {0}")]
    NotClamped(String),
    #[error("knots must be nondecreasing (position {0})")]
    Decreasing(usize),
    #[error("interior knot {value} has multiplicity {multiplicity} > degree {degree}")]
    ExcessMultiplicity { value: f64, multiplicity: usize, degree: usize },
    #[error("knot vector has no span of positive length")]
    NoSpan,
    #[error("parameter {0} lies outside [0, 1]")]
    Domain(f64),
    #[error("requested derivative order {requested} exceeds degree {degree}")]
    DerivativeOrder { requested: usize, degree: usize },
    #[error("knot vector cannot be coarsened: {0}")]
    NotCoarsenable(String),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("matrix is singular at column {0}")]
    Singular(usize),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MapError {
    #[error("{side} curve has {got} coefficients, expected {expected}")]
    CurveLength { side: &'static str, expected: usize, got: usize },
    #[error("boundary curves disagree at the {corner} corner (gap {gap:e})")]
    CornerMismatch { corner: &'static str, gap: f64 },
    #[error("map is not bijective: det J = {det_j:e} at ({xi}, {eta})")]
    NonBijective { xi: f64, eta: f64, det_j: f64 },
    #[error("control net has {got} points, basis has {expected} functions")]
    NetSize { expected: usize, got: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("{mode} mode needs a C1 primal basis in the {direction} direction (interior multiplicity {multiplicity} with degree {degree})")]
    InsufficientContinuity { mode: &'static str, direction: &'static str, multiplicity: usize, degree: usize },
    #[error("single-direction modes are only available for single-patch problems")]
    ModeNotSupported,
    #[error("chi must lie in [0, 1], got {0}")]
    Chi(f64),
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("vector length {got} does not match expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error("line search stagnated at iteration {iteration} (residual {residual:e})")]
    Stagnation { iteration: usize, residual: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TopologyError {
    #[error("patch index {0} out of range")]
    PatchIndex(usize),
    #[error("face {face} of patch {patch} is glued more than once")]
    DuplicateGluing { patch: usize, face: &'static str },
    #[error("interface {index}: knot vectors differ along the glued faces")]
    KnotMismatch { index: usize },
    #[error("interface {index}: a face cannot be glued to itself")]
    SelfGluing { index: usize },
    #[error("affine map of patch {0} is singular")]
    SingularAffine(usize),
    #[error("boundary data for patch {patch} face {face}: {reason}")]
    Boundary { patch: usize, face: &'static str, reason: String },
    #[error("boundary data missing for patch {patch} face {face}")]
    MissingBoundary { patch: usize, face: &'static str },
    #[error("patch images are not connected")]
    Disconnected,
}
