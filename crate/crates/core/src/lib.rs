//! Relaxed linear assignment by projected gradient descent.
//!
//! The solver minimizes `Tr(C Xᵀ)` over the wide matching polytope
//! `{X | X·1 = 1, Xᵀ·1 ≤ 1, X ≥ 0}` by alternating a plain gradient step with
//! a Dykstra cyclic projection onto the three constraint sets. Every step is
//! piecewise affine in the cost matrix, so the unrolled solver can be
//! differentiated exactly (see [`autodiff`]).
//!
//! Exact baselines (Hungarian, brute force, greedy) live in [`exact`], the
//! mask/feature cost model in [`cost`], and the benchmark and convergence
//! harness used by the CLI in [`bench`].

pub mod autodiff;
pub mod bench;
pub mod cost;
mod error;
pub mod exact;
pub mod io;
pub mod matcher;
mod matrix;
pub mod polytope;
pub mod rng;

pub use error::{MatchError, Result};
pub use matrix::{frobenius, AssignmentMatrix, CostMatrix};
