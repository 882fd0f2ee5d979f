//! Geodesic flow on ellipsoids `<A^{-1}x, x> = 1`, Moser's Lax-pair invariants
//! and numerical diagnostics for self-focal points.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod flow;
pub mod focal;
pub mod geometry;
pub mod lax;
pub mod linalg;
pub mod ode;
pub mod report;
pub mod rosochatius;
pub mod sampling;
pub mod suite;

pub use error::{FocalError, Result};
pub use flow::{exp_map, first_return, integrate_geodesic, ReturnEvent, Trajectory};
pub use focal::{
    self_focality_scan, umbilic_points_2d, ScanOptions, ScanReport, Verdict,
};
pub use geometry::{Ellipsoid, PhasePoint, ShapeReport};
pub use lax::{lax_matrix, lax_spectrum, moment_map, spectrum, LaxMatrix, LaxSpectrum, MomentValue};
pub use ode::IntegratorOptions;
