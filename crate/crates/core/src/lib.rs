//! Numerical laboratory for periodic homogenization of viscous quadratic
//! Hamilton-Jacobi equations
//!
//! ```text
//!     uᵗ + ½|Du|² + V(x/ε) = (ε/2)Δu,
//! ```
//!
//! with V periodic on the unit torus. The crate computes the effective
//! Hamiltonian H̄ through the cell eigenvalue problem, its Legendre transform
//! L̄, Hopf-Lax solutions of the homogenized equation, Hopf-Cole solutions of
//! the oscillatory problem, heat-kernel asymptotics for periodic drift
//! diffusions, and convergence-rate experiments tying all of it together.

pub mod bloch;
pub mod cell;
pub mod harness;
pub mod hopflax;
pub mod legendre;
pub mod torus;
pub mod viscous;

pub(crate) mod linalg;
pub(crate) mod spectral;
