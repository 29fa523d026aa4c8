use thiserror::Error;

/// Every failure the toolkit reports. The variant name leads the rendered
/// message so the CLI surfaces it verbatim.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("NonPositiveMass: node at path {path} has mass {mass}")]
    NonPositiveMass { path: String, mass: String },
    #[error("MassMismatch: {0}")]
    MassMismatch(String),
    #[error("EmptyLevel: {0}")]
    EmptyLevel(String),
    #[error("LevelOutOfRange: level {level} not in 0..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("MissingLeafValue: expected {expected} leaf values, got {got}")]
    MissingLeafValue { expected: usize, got: usize },
    #[error("NonCenteredTerminal: terminal mean is {mean}, expected 0")]
    NonCenteredTerminal { mean: String },
    #[error("NotAMartingale: node {node} value differs from the average of its children")]
    NotAMartingale { node: usize },
    #[error("TreeMismatch: objects are defined on different filtration trees")]
    TreeMismatch,
    #[error("InvalidStoppingTime: {0}")]
    InvalidStoppingTime(String),
    #[error("EnumerationCapExceeded: {count} candidates exceed the cap of {cap}")]
    EnumerationCapExceeded { count: String, cap: u128 },
    #[error("NotMeasurable: value varies inside the atom at node {node}")]
    NotMeasurable { node: usize },
    #[error("NegativeThreshold: {0}")]
    NegativeThreshold(f64),
    #[error("InvalidIndex: p = {p}, q = {q}")]
    InvalidIndex { p: f64, q: f64 },
    #[error("PropertyViolated: {which} ({witness})")]
    PropertyViolated { which: String, witness: String },
    #[error("DivisionByZero: {0}")]
    DivisionByZero(String),
    #[error("InvalidExponent: {0}")]
    InvalidExponent(String),
    #[error("DegenerateSequence: every term of the stopping sequence vanishes")]
    DegenerateSequence,
    #[error("ChainViolated: k = {k}, link {link}")]
    ChainViolated { k: i32, link: String },
    #[error("WindowInsufficient: {0}")]
    WindowInsufficient(String),
    #[error("NegativeAlpha: {0}")]
    NegativeAlpha(f64),
    #[error("PreconditionFailed: {0}")]
    PreconditionFailed(String),
    #[error("ExponentMismatch: alpha = {alpha}, expected 1/p1 - 1/p2 = {expected}")]
    ExponentMismatch { alpha: f64, expected: f64 },
    #[error("ParameterOutOfRange: {0}")]
    ParameterOutOfRange(String),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("ConfigError: {0}")]
    ConfigError(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
