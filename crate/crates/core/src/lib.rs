//! Resonances of the three-dimensional magnetic Schrödinger operator near
//! Landau levels, located as zeros of a regularized Fredholm determinant.

pub mod axis_channel;
pub mod effective_operator;
pub mod landau_toeplitz;
pub mod linalg;
pub mod model;
pub mod resonance_search;
pub mod ssf_breit_wigner;
mod quad;

pub use num_complex::Complex64 as C64;
