//! Complex linear algebra and special functions shared by every other module.

mod kummer;
mod linalg;

pub use kummer::{kummer_m, log_kummer_m, CROSSOVER as KUMMER_CROSSOVER};
pub use linalg::{
    hermitian_solve, principal_eigenpair, principal_eigenvector, Cholesky, HermitianMatrix,
    BASE_LOADING, MAX_LOADING,
};
pub(crate) use linalg::lower_mul;

/// Complex vector of one STFT bin across channels (steering, observation, noise).
pub type ComplexVector = Vec<num_complex::Complex64>;
