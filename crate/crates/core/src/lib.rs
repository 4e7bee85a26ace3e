//! Symbolic mechanics for Lagrangian systems with one cyclic coordinate:
//! expressions, tangent and cotangent geometry, Euler-Lagrange and Hamilton
//! equations, Routh and Jacobi reduction, and fixed-step integration.

// Comparisons are written negated on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod expr;
pub mod geometry;
pub mod mechanics;
pub mod routh;
