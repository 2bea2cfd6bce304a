//! Numerical toolkit for orthotropic variational problems with
//! direction-dependent growth exponents.
//!
//! The energy under study is a sum of one-variable convex integrands of the
//! partial derivatives, `F(u) = Σ_i ∫ |u_{x_i}|^{p_i}/p_i`, with ordered
//! exponents `2 ≤ p_1 ≤ … ≤ p_N`. The crate provides:
//!
//! - [`exponents`]: the scalar exponent ladders driving gradient estimates
//!   (the geometric `γ_j` schedule with its interpolation weights, the
//!   conjugate-type `q_j` sequence, and the closed-form iteration bound for
//!   absorbable recursive estimates);
//! - [`beta`]: the vector exponent recursion whose finite stabilization at
//!   `p_i·q_{j-2}` encodes the integrability gain of the scheme;
//! - [`grid`] and [`model`]: rectangular-grid fields, the regularized
//!   integrands `g_{i,ε}`, discrete energies and weak-form residuals;
//! - [`solver`]: descent solver for the regularized minimization problem and
//!   ε-sweeps tracking convergence of the regularization;
//! - [`verify`]: empirical checkers for the a priori inequalities
//!   (Caccioppoli families, self-improving integrability, the sup-gradient
//!   estimate, higher integrability and higher differentiability), with
//!   refinement studies measuring the stability of empirical constants;
//! - [`report`]: deterministic JSON/CSV emission for all of the above.

pub mod beta;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod model;
pub mod report;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
