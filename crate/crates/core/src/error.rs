use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("root refinement did not converge after {iterations} iterations (max residual {residual:e})")]
    RootRefinement { iterations: usize, residual: f64 },

    #[error("non-finite Birkhoff sum: orbit hit a critical point at {point}")]
    NonFiniteSum { point: Complex64 },

    #[error("potential is not finite at {point}")]
    NonFinitePotential { point: Complex64 },

    #[error("inverse-branch contraction failed for itinerary {itinerary:?}")]
    BranchContraction { itinerary: Vec<u8> },

    #[error("enumeration budget exceeded: {required} seeds needed, budget {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error("incomplete enumeration at level {level}: found {found} of {expected} periodic points")]
    IncompleteEnumeration { level: usize, found: usize, expected: usize },

    #[error("no repelling periodic points at level {level}")]
    EmptyOrbitSet { level: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eta {eta} outside the admissible interval (0, {upper})")]
    EtaOutOfRange { eta: f64, upper: f64 },

    #[error("pressure curve does not straddle eta on [{lo}, {hi}] (P(lo) - eta = {p_lo:e}, P(hi) - eta = {p_hi:e})")]
    BracketFailure { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("variance estimators disagree: second difference {second_difference:e}, windowed {windowed:e}")]
    EstimatorDisagreement { second_difference: f64, windowed: f64 },

    #[error("Hoelder constant too small: pair ({a}, {b}) needs C >= {needed:e}")]
    HolderViolation { a: Complex64, b: Complex64, needed: f64 },

    #[error("transfer operator grid misses the Julia set")]
    GridMissesJulia,

    #[error("continuation failed: {0}")]
    Continuation(String),

    #[error("parameter {0:?} is not certified hyperbolic")]
    NotHyperbolic(Vec<f64>),

    #[error("gradient of G does not vanish at the base point (|grad| = {norm:e}, tolerance {tol:e})")]
    GradientNotVanishing { norm: f64, tol: f64 },

    #[error("singular Jacobian in relation solve")]
    SingularJacobian,

    #[error("a non-repelling cycle entered an estimator (|multiplier| = {modulus})")]
    NonRepellingCycle { modulus: f64 },

    #[error("distance search budget exhausted without a feasible path")]
    SearchExhausted,
}

pub type Result<T> = std::result::Result<T, Error>;
