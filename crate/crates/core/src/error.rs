use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square with at least one row, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix determinant is {det}, expected +1 or -1")]
    NotUnimodular { det: i128 },
    #[error("eigenvalue modulus {modulus} lies on the unit circle")]
    NotHyperbolic { modulus: f64 },
    #[error("unstable eigenvalue {re} + {im}i is not real")]
    ComplexSpectrumUnsupported { re: f64, im: f64 },
    #[error("exact-mode arithmetic overflowed the 64-bit width (q = {q})")]
    DenominatorOverflow { q: u64 },
    #[error("point dimension {got} does not match system dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid exact point: {0}")]
    InvalidPoint(String),
    #[error("radius {radius} must satisfy 0 < radius < {bound}")]
    RadiusTooLarge { radius: f64, bound: f64 },
    #[error("thickening {rho} swallows hole of radius {radius}")]
    ThickeningSwallowsHole { rho: f64, radius: f64 },
    #[error("grid step {step} too coarse, must be at most {limit}")]
    GridTooCoarse { step: f64, limit: f64 },
    #[error("oracle instance has {cells} cells, cap is {cap}")]
    OracleTooLarge { cells: usize, cap: usize },
    #[error("oracle search exceeded its budget of {nodes} nodes")]
    OracleBudgetExhausted { nodes: u64 },
    #[error("finite-difference stencil of order {order} needs margin {needed}, have {margin}")]
    StencilOutOfRange {
        order: u32,
        needed: usize,
        margin: usize,
    },
    #[error("mollifier support radius {support} does not embed in the torus (must be < 1/2)")]
    SupportDoesNotEmbed { support: f64 },
    #[error("only {found} points above the noise floor {floor:e}, need {needed}")]
    TooFewPointsAboveFloor {
        found: usize,
        needed: usize,
        floor: f64,
    },
    #[error("degenerate scales: {0}")]
    DegenerateScales(String),
    #[error("orbit horizon {horizon} exceeds exact-mode period budget q/10 for q = {q}")]
    PeriodBudgetExceeded { horizon: u64, q: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
