//! Benchmark fixtures shared by the criterion targets in `benches/`.

use focal_core::{Ellipsoid, PhasePoint};

pub fn ellipsoid(alphas: &[f64]) -> Ellipsoid {
    Ellipsoid::new(alphas).expect("benchmark ellipsoid")
}

/// Seeded random phase points on `e`.
pub fn phase_points(e: &Ellipsoid, count: usize) -> Vec<PhasePoint> {
    (0..count as u64).map(|k| e.random_phase_point(k)).collect()
}
