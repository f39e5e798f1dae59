//! Numerical building blocks: ranks and correlations, robust location and
//! scale, small dense SPD linear algebra, and the special functions behind
//! the F and chi-square cutoffs.

mod linalg;
mod rank;
mod special;

pub use linalg::{cholesky, solve_spd, CholeskyFactor, SymmetricMatrix};
pub use rank::{mad, median, midranks, pearson_r, spearman_rho, RankVector, MAD_CONSISTENCY};
pub use special::{
    chi_square_cdf, chi_square_quantile, f_cdf, f_pdf, f_quantile, ln_gamma, normal_cdf, regularized_gamma_p,
    regularized_gamma_q, regularized_incomplete_beta,
};
