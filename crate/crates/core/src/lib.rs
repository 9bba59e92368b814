//! Biorthogonal systems built from weighted orthonormal polynomials of Freud
//! weights: node and omission construction, finite-section solution of the
//! interpolation system, and numerical verification of the dual functions.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod conjugate;
pub mod construction;
pub mod error;
pub mod infsys;
pub mod linalg;
pub mod numeric;
pub mod orthopoly;
pub mod quadrature;
pub mod scalar;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FreudWeight64 = weights::FreudWeight<f64>;
pub type InnerWeight64 = weights::InnerWeight<f64>;
pub type AdmissiblePair64 = weights::AdmissiblePair<f64>;
pub type OrthoBasis64 = orthopoly::OrthoBasis<f64>;
pub type ConstructionState64 = construction::ConstructionState<f64>;
pub type SystemMatrix64<'a> = infsys::SystemMatrix<'a, f64>;
pub type SolutionVector64 = infsys::SolutionVector<f64>;
pub type ConjugateFunction64<'a> = conjugate::ConjugateFunction<'a, f64>;
pub type Matrix64 = linalg::Matrix<f64>;
