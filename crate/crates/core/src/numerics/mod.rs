//! Small dense complex linear algebra and the special functions behind the
//! closed-form outage probability.

mod eig;
mod gamma;
mod matrix;

pub use eig::{
    cholesky, hermitian_eig_max, hermitian_eigen, solve_lower, solve_lower_adjoint,
    spectral_norm_sq_of_channel, whiten, EigPair,
};
pub use gamma::{gamma_lower_regularized, gamma_upper_regularized};
pub use matrix::{CMat, CVec};

pub use num_complex::Complex64;
