//! Verification kernel for nonlinear gauge theory on Lie algebroids.
//!
//! The crate represents the geometric objects in coordinates on a single
//! chart and checks the identities that relate them numerically (to dual
//! number exactness) or exhaustively (on finite groupoids):
//!
//! - [`smoothcalc`]: charts, a small expression language, smooth maps with
//!   exact jacobians and a finite-difference oracle;
//! - [`algebroid`]: Lie algebroids `(A, [.,.], rho)` as anchor and structure
//!   functions, the differential `d_A`, and axiom residuals;
//! - [`gauge`]: bundle maps `TM -> A` on trivial principal groupoid bundles,
//!   the curvature operator, flatness versus morphism checks, and finite and
//!   infinitesimal gauge transformations;
//! - [`groupoid`]: exact finite groupoids, principal bundles, division maps,
//!   trivializations, and transition cocycles;
//! - [`apath`]: flat fields over the interval, holonomy of action algebroids,
//!   and homotopy flows (desk-scale Weinstein groupoid experiments);
//! - [`psm`]: the Poisson sigma model as the cotangent-algebroid instance.
//!
//! Everything is immutable after construction and safe to evaluate from
//! multiple threads.

pub mod algebroid;
pub mod apath;
pub mod gauge;
pub mod groupoid;
pub mod linalg;
pub mod psm;
pub mod smoothcalc;
