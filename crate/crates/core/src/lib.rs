//! hp Nitsche interior-penalty discretization of the 2D Poisson problem on
//! square subdomain partitions, with Bramble–Pasciak–Schatz type
//! substructuring preconditioners for the interface Schur complement.
//!
//! Pipeline: [`geometry`] builds the partition and fine meshes,
//! [`hp_space`] numbers the degrees of freedom, [`assembly`] builds the
//! Nitsche system, [`interface`] condenses it onto the skeleton,
//! [`precond`] builds the interface preconditioners and [`krylov`] solves
//! with PCG while estimating condition numbers. [`diagnostics`] holds
//! the fractional-norm instruments and [`harness`] drives experiments.

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod hp_space;
pub mod interface;
pub mod krylov;
pub mod linalg;
pub mod par;
pub mod precond;

pub use error::{Error, Result};
