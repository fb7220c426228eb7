//! Survivor sets of shrinking holes for hyperbolic toral automorphisms.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`.

// NaN inputs must fail validation, which `!(x > 0)` expresses directly
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covering;
pub mod dimension;
pub mod error;
pub mod fit;
pub mod fixed;
pub mod holes;
pub mod leaf;
pub mod mixing;
pub mod mollifier;
pub mod scalar;
pub mod system;

pub use covering::{CellSet, CoverReport, SurvivorSpec};
pub use dimension::{DeficitRow, DimensionEstimate};
pub use error::{Error, Result};
pub use holes::{Hole, Region};
pub use leaf::CellGrid;
pub use mixing::{DecaySeries, MixingParams, Quadrature};
pub use scalar::Real;
pub use system::{make_system, torus_distance, IntMatrix, R0};

pub type System = system::ToralSystem<f64>;
pub type Point = system::Point<f64>;
pub type UnstableCoord = system::UnstableCoord<f64>;
