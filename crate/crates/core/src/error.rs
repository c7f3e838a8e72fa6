use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),

    /// A value left the representable range; `index` is the iterate at which
    /// it happened (0 for a single evaluation).
    #[error("non-finite value at iterate {index}")]
    Overflow { index: u64 },

    #[error("outside domain: {0}")]
    Domain(String),

    #[error("no chart radius R <= {max_radius} satisfies the remainder bounds")]
    SearchFailure { max_radius: f64 },

    #[error("no convergence up to n = {n_reached} (best error estimate {best_estimate:e})")]
    NoConvergence { n_reached: u64, best_estimate: f64 },

    #[error("inverse branch solve did not converge (residual {residual:e})")]
    NewtonFailure { residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no root found (best residual {best_residual:e} at {best_t})")]
    NoRootFound {
        best_residual: f64,
        best_t: Complex64,
    },

    #[error("invalid map: {0}")]
    InvalidMap(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Rejects NaN/infinite values, tagging the iterate index.
#[inline]
pub(crate) fn finite(z: Complex64, index: u64) -> Result<Complex64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::Overflow { index })
    }
}
