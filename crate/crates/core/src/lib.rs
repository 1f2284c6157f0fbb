//! Time-domain enclosure method for a sound-hard obstacle inside a bounded cavity.
//!
//! A ball-shaped initial pulse is propagated in free space, its normal derivative
//! is played back on the cavity wall in reverse time, and the Laplace-transformed
//! boundary response is compared against the free-space prediction. The decay
//! rate of that comparison in the Laplace parameter reveals the radius of the
//! smallest sphere around the pulse center that encloses the obstacle.
//!
//! Layers, bottom up:
//! - [`geometry`], [`quadrature`], [`logspace`]: shapes and numerical plumbing.
//! - [`analytic_waves`], [`closed_forms`]: exact free-space fields and Laplace kernels.
//! - [`reference_field`]: Neumann data and the reference Laplace field.
//! - [`forward_solver`]: leapfrog solver for the cavity problem.
//! - [`indicator`], [`extraction`]: the indicator sweep and the radius fit.
//! - [`pipeline`]: forward run, companion run and inversion in one call.
//! - [`oracle_suite`]: named closed-form vs quadrature checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic_waves;
pub mod closed_forms;
pub mod extraction;
pub mod forward_solver;
pub mod geometry;
pub mod indicator;
pub mod logspace;
pub mod oracle_suite;
pub mod par;
pub mod pipeline;
pub mod quadrature;
pub mod reference_field;

pub use analytic_waves::{SourcePulse, WaveRegion};
pub use geometry::{BallSpec, DomainSpec, SurfaceQuadrature, Vec3};
pub use logspace::LogValue;
