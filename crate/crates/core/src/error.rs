use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or argument lies outside the domain of the operation.
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// The bracketed root solver ran out of iterations. This signals an
    /// internal error: a correctly bracketed solve always terminates.
    #[error(
        "root solve for ell = {ell} did not converge after {iterations} iterations \
         (offset bracket [{lo}, {hi}])"
    )]
    NoConvergence {
        ell: usize,
        iterations: usize,
        lo: f64,
        hi: f64,
    },

    /// Lloyd/Newton iteration for a scalar quantizer did not reach tolerance.
    #[error("scalar quantizer with {levels} levels did not converge after {iterations} iterations (last step {last_step:e})")]
    QuantizerNoConvergence {
        levels: usize,
        iterations: usize,
        last_step: f64,
        last_points: Vec<f64>,
    },

    #[error("spectrum has {available} eigenpairs but {required} are required")]
    SpectrumTooShort { required: usize, available: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
