//! Circle-pattern metrics with prescribed total geodesic curvatures in
//! spherical background geometry.
//!
//! A pattern assigns each vertex of a weighted complex a circle of radius
//! r in (0, pi/2); adjacent circles meet at the prescribed angle Theta(e),
//! and each circle carries the total geodesic curvature T = alpha cos r.
//! This crate finds patterns realizing prescribed curvatures T̂ by two
//! independent routes: the curvature flow du_i/dt = -(T_i - T̂_i) in the
//! log-cotangent coordinate, and damped Newton descent on the convex
//! curvature potential. On infinite lattices the flow is approximated by
//! truncations to nested combinatorial balls with a frozen outer ring.

// Validation comparisons are written negated (`!(x > 0.0)`) so that NaN
// fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod complex;
pub mod flow;
pub mod geometry;
pub mod lattice;
pub mod variational;

pub use complex::{ComplexError, ComplexTopology, TargetCurvature, VertexId};
pub use flow::{FlowConfig, FlowTrace, Integrator, SolveReport, SolveStatus};
pub use geometry::PatternState;
pub use lattice::{InfiniteComplexGenerator, LatticeKind};
