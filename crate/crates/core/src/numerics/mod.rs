//! Dense linear algebra and seeded randomness for the rate objectives.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{cholesky, logdet_psd, orthogonal_random, solve_psd, Cholesky};
pub(crate) use linalg::orthonormalize_cols;
pub use matrix::Matrix;
pub use rng::SeededRng;
