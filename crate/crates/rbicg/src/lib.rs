//! Sparse iterative solvers for sequences of dual linear systems.
//!
//! The central algorithm is recycling BiCG: a bi-Lanczos solver that carries
//! approximate left/right invariant subspaces (the "recycle space") from one
//! pair of dual systems `A x = b`, `A* x̃ = b̃` to the next, deflating the
//! eigenvalues closest to the origin. On top of the solver sit a Crout ILUT
//! preconditioner, test-problem generators, and an IRKA driver for
//! interpolatory model reduction that consumes the dual solves.

pub mod bicg;
pub mod irka;
pub mod numerics;
pub mod operator;
pub mod precond;
pub mod problems;
pub mod rbicg;
pub mod recycle;
pub mod report;
pub mod subspace;

pub use numerics::{CVector, Complex};
