use thiserror::Error;

/// Errors surfaced by the library.
///
/// Construction routines keep partial state out of the error payload; the
/// series builder returns partial state alongside its stop reason instead of
/// erasing work already done.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A point expected on the domain boundary was not on it.
    #[error("point is off the boundary: defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    OffBoundary { defect: f64, tolerance: f64 },

    /// A lift was requested too close to the ramification locus, where the
    /// sheet branches collapse.
    #[error("lift undefined near ramification locus: |z2| = {modulus:.3e} < guard {guard:.3e}")]
    Ramification { modulus: f64, guard: f64 },

    /// A non-finite value appeared where a finite one is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A polynomial product exceeded the configured term budget.
    #[error("term budget exceeded: product would hold {terms} terms, cap is {cap}")]
    TermBudget { terms: usize, cap: usize },

    /// A degree parameter was out of range for the requested operation.
    #[error("degree error: {0}")]
    Degree(String),

    /// An operation that needs input points received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A center set violated its declared pairwise separation.
    #[error("separation violated: centers {i} and {j} at distance {distance:.6e} < {required:.6e}")]
    Separation { i: usize, j: usize, distance: f64, required: f64 },

    /// The holomorphic correction could not be brought within its pointwise
    /// allowance at any surrogate degree.
    #[error("approximation failed: {0}")]
    Approximation(String),

    /// A series step added too little energy (or none) to make progress.
    #[error("stagnation: {0}")]
    Stagnation(String),

    /// A boundary target modulus must stay strictly positive on the probe set.
    #[error("positivity violation: {0}")]
    Positivity(String),

    /// Evaluation requested at a pole of a rational inner factor.
    #[error("pole at z = {re}+{im}i (reflected zero of the factor)")]
    Pole { re: f64, im: f64 },
}
