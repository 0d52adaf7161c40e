//! Geometry of the space of Riemannian metrics on a discretized flat 2-torus.
//!
//! The crate provides the L² (trace) metric on metric fields, its geodesics,
//! the left action of torus diffeomorphisms by pullback, the orthogonal
//! splitting of symmetric tensors into orbit-tangent and divergence-free parts,
//! slice charts around a base metric, and an exact finite-dimensional model
//! (SO(2) conjugating 2×2 SPD matrices) for checking slice/tube statements.

pub mod diffeo;
pub mod error;
pub mod finite;
pub mod grid;
pub mod io;
mod krylov;
pub mod l2;
pub mod mat2;
pub mod refinement;
pub mod rng;
pub mod slice;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{constant_field, Axis, GridSpec, MetricField, ScalarField, SymTensorField, VectorField};
pub use mat2::{Mat2, Sym2};
