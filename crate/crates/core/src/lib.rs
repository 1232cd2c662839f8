//! Symbolic-numeric toolkit for computing discrete point symmetries of
//! difference and differential-difference equations.
//!
//! Two routes are implemented:
//!
//! * the automorphism route: compute the automorphisms of the continuous
//!   symmetry algebra of an equation ([`autosolve`]), realize them as point
//!   transformations ([`realize`]) and keep those that leave the equation
//!   form-invariant;
//! * the determining-equation route: integrate the flow of a generic point
//!   symmetry generator in closed form and look for periodic orbits
//!   ([`dseq`]), specialized to the discrete Painlevé I equation.
//!
//! Everything is built on a small exact-symbolic expression kernel
//! ([`expr`]), Lie algebras given by structure constants ([`liealg`]) and
//! lattice vector fields with discrete prolongation ([`latfield`]).

pub mod autosolve;
pub mod dseq;
pub mod expr;
pub mod latfield;
pub mod liealg;
pub mod pipeline;
mod polysolve;
pub mod realize;

pub use expr::{Expr, Symbol};
