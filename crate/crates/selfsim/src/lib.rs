//! Self-similar blowup of co-rotational wave maps into perturbed spheres.

pub mod banded;
pub mod chebyshev;
pub mod error;
pub mod evolution;
pub mod fd;
pub mod geometry;
pub mod norms;
pub mod operators;
pub mod profile;
pub mod quadrature;
pub mod scalar;
pub mod series;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations, used throughout the solvers and the CLI.
pub type Target = geometry::WarpedTarget<f64>;
pub type Field = operators::RadialField<f64>;
pub type State = evolution::SimilarityState<f64>;
pub type Evolver = evolution::Evolution<f64>;

/// Single-precision instantiations of the generic kernels.
pub type Target32 = geometry::WarpedTarget<f32>;
pub type Field32 = operators::RadialField<f32>;
pub type State32 = evolution::SimilarityState<f32>;
pub type Evolver32 = evolution::Evolution<f32>;
