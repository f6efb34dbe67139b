//! Explicit lower bounds for the first non-trivial Neumann eigenvalue of the
//! p-Laplacian on quasiconformal images of balls and cubes, together with the
//! numerical machinery that checks every inequality feeding those bounds.
//!
//! The modules are layered bottom-up:
//!
//! * [`constants`] closed-form constants and admissible exponent windows,
//!   evaluated in log space.
//! * [`domains`] and [`qc_maps`] geometric regions and explicit
//!   quasiconformal maps with analytic derivatives.
//! * [`quadrature`] seeded Monte Carlo and tensor-product rules, plus the
//!   integral functionals (Jacobian norms, composition-operator norms,
//!   doubling ratios, weak reverse Hölder checks).
//! * [`bounds`] assembly of the eigenvalue lower bounds with the inner
//!   one-dimensional optimisation over the Sobolev exponent.
//! * [`plap_solver`] a Rayleigh-quotient eigensolver used to certify the
//!   bounds from above.
//! * [`quasihyperbolic`] graph approximations of the quasihyperbolic metric.

pub mod bounds;
pub mod config;
pub mod constants;
pub mod domains;
mod error;
pub mod exponent;
pub mod plap_solver;
pub mod qc_maps;
pub mod quadrature;
pub mod quasihyperbolic;

pub use error::{Error, Result};
pub use exponent::Exponent;
