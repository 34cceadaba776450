//! Numerical substrate: seeded random streams, dense linear algebra, special functions.

pub mod linalg;
pub mod rng;
pub mod special;

pub use linalg::{eig_extremes_symmetric, Matrix, Vector};
pub use rng::{sample_std_gaussian_vector, RngStream};
pub use special::log_gamma;
