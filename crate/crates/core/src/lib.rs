//! Finite dyadic models of two-weight estimates for band and well-localized operators.
//!
//! Everything lives on a truncated dyadic lattice ([`lattice`]): measures and
//! functions are leaf vectors ([`measure`]), operators are dense leaf matrices
//! assembled from sparse Haar-basis data ([`operators`]), and the paraproduct,
//! Carleson and testing-constant machinery ([`paraproduct`], [`analysis`])
//! becomes exact finite-dimensional linear algebra.

pub mod analysis;
pub mod config;
pub mod error;
pub mod generate;
pub mod haar;
pub mod lattice;
pub mod linalg;
pub mod measure;
pub mod operators;
pub mod paraproduct;
pub mod report;
pub mod search;
pub mod suite;

pub use error::{Error, Result};
pub use lattice::{Cube, Lattice, LatticeSpec};
pub use measure::{GridFunction, MeasureGrid};
pub use operators::{BandOperator, BasisIndex, HaarIndex, InducedOperator};
