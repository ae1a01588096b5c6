use thiserror::Error;

/// Errors raised while building or evaluating utility and kernel models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("non-finite argument {0}")]
    NonFinite(f64),
    #[error("argument {x} outside the domain ({domain})")]
    Domain { x: f64, domain: &'static str },
    #[error("series for (u')^-1 diverges at y = {y}")]
    SeriesDiverged { y: f64 },
    #[error("series utility rejected: {0}")]
    SeriesValidation(String),
    #[error("kernel rejected: {0}")]
    KernelValidation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Why the Lagrange equation `f(λ) = a` has no root.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoMultiplier {
    #[error("f(λ) = +∞ for every λ > 0")]
    EverywhereInfinite,
    #[error("budget {a} exceeds a0 = {a0}")]
    BudgetAboveA0 { a: f64, a0: f64 },
}

/// Errors from the Lagrange solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid budget {0}; the budget must be positive and finite")]
    InvalidBudget(f64),
    #[error("no Lagrange multiplier: {0}")]
    NoMultiplier(NoMultiplier),
    #[error("multiplier λ = {lambda} exists but E[u(X*)] = +∞")]
    ValueDiverged { lambda: f64 },
    #[error("inconclusive f evaluation inside bracket [{lo}, {hi}]: {detail}")]
    Inconclusive { lo: f64, hi: f64, detail: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bracket expansion exhausted: {0}")]
    BracketExhausted(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
