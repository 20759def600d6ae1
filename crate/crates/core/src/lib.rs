//! Matrix function evaluation via initial-value ODE modelling.
//!
//! A matrix function f(A) (inverse, exponential, cosine/sine) is obtained as
//! the terminal value of a matrix differential equation along a homotopy
//! path from a starting matrix to A. The resulting initial-value problems
//! are integrated with parallel-in-time (parareal) algorithms, including a
//! variant that reuses the Krylov-like subspace spanned by earlier iterates
//! to cut the number of fine solves. Steady states of the same flows can
//! alternatively be captured by convergence-accelerated fixed-point
//! iterations or by an adjoint-based virtual control formulation.
//!
//! Modules:
//! - [`matcore`]: dense matrices, Frobenius block geometry, global QR;
//! - [`flows`]: the matrix ODE right-hand sides and one-interval propagators;
//! - [`parareal`]: classical and subspace-enhanced parareal iterations;
//! - [`matfun`]: end-to-end drivers for inverse / exp / cos / sin;
//! - [`steady`]: convergence acceleration of stationary iterations;
//! - [`control`]: steady-state capture as a virtual control problem;
//! - [`reference`]: slow-but-sure oracles and problem generators.

pub mod control;
pub mod error;
pub mod exec;
pub mod flows;
pub mod matcore;
pub mod matfun;
pub mod parareal;

pub mod reference;
pub mod steady;

pub use error::{Error, Result};
