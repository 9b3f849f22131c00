//! Exact-arithmetic engine for filtered algebras of differential-operator type,
//! weak module structures over them, and the finite Maurer-Cartan geometry that
//! classifies such structures over coverings of an affine line.
//!
//! Everything is computed over the rationals (or univariate polynomial rings over
//! them); no floating point is used anywhere.

pub mod algebra;
pub mod cech;
pub mod complexes;
pub mod descriptors;
pub mod doldpuppe;
pub mod gen;
pub mod hochschild;
pub mod matrix;
pub mod mcgeom;
pub mod poly;
pub mod ring;
pub mod scalar;

pub use algebra::{AlgebraElement, DExp, FilteredPBWAlgebra, Mode, Token};
pub use matrix::Matrix;
pub use poly::{Mono, Poly};
pub use ring::{Field, PolyRing, RationalField, Ring};
pub use scalar::Rational;

/// Error type shared by the whole engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("degree window too narrow: {0}")]
    Window(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unsolvable: {0}")]
    Unsolvable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
