//! Preconditioned conjugate gradient solvers for the strongly anisotropic
//! elliptic problem `-omega^2 (Lap_2d + lambda^2 r^-2 d_r(r^2 d_r)) u + u = f`
//! on a thin spherical shell.
//!
//! Two operator backends are provided: a matrix-free stencil that rebuilds
//! the operator from four vertical profile vectors and per-column geometry,
//! and an explicit CSR matrix. Both use a vertical line (per-column
//! tridiagonal) preconditioner. The matrix-free backend also offers a fused
//! PCG variant that needs only two sweeps over the grid per iteration.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csr;
pub mod dense;
pub mod discretization;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod matrix_free;
pub mod problem;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use fields::{Field3D, Layout};
pub use scalar::{Precision, Scalar};
