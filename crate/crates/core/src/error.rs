use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is not in the hemisphere facing the tangent plane (cos c = {cos_c:.3e})")]
    HemisphereViolation { cos_c: f64 },

    #[error("pixel coordinate ({u}, {v}) outside a {width}x{height} grid")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },

    #[error("no built-in layout for {0} patches; supply latitudes and counts")]
    UnsupportedLayout(usize),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("zero-norm vector{}", .0.map(|i| format!(" at index {i}")).unwrap_or_default())]
    ZeroNormVector(Option<usize>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("geometry mismatch: {a:?} vs {b:?}")]
    GeometryMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },

    #[error("no valid ground-truth pixels")]
    NoValidPixels,

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
