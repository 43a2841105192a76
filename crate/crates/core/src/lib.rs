//! Numerical laboratory for multilinear Littlewood–Paley operators.
//!
//! The crate samples functions on uniform grids ([`grid`]), measures their
//! BMO, BLO and Lebesgue (quasi)norms on finite ball families ([`spaces`]),
//! builds and certifies multilinear kernels ([`kernels`]), evaluates the
//! square functions `g`, `S` and `g*_λ` together with their non-convolution
//! analogues ([`operators`]), and runs ratio and refinement experiments on
//! the BMO→BLO and L∞→BLO bounds ([`lab`]). [`cli`] wires everything into the
//! `mlp-lab` batch front-end.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod lab;
pub mod operators;
pub mod spaces;
pub mod sum;

pub use error::{LabError, Result};
