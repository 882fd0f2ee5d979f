//! Direction grids on the unit tangent sphere `S*_{x0}`.
//!
//! `T_{x0}` has dimension `n - 1`, so the directions form an `S^{n-2}`. The
//! deterministic part is a half-step offset circle grid for `n = 3` (so no grid
//! point sits on a coordinate-plane direction), a Fibonacci spiral for
//! `n = 4` and Gaussianized Halton points beyond; a seeded random tail is
//! appended so that no grid symmetry can hide a non-focal direction.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FocalError, Result};
use crate::geometry::Ellipsoid;

/// How many directions come from the deterministic grid versus the seeded tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionPlan {
    pub total: usize,
    pub random: usize,
    pub seed: u64,
}

impl DirectionPlan {
    /// One eighth of the directions random, the rest on the grid.
    pub fn new(total: usize, seed: u64) -> Self {
        Self {
            total,
            random: total / 8,
            seed,
        }
    }

    pub fn grid_only(total: usize) -> Self {
        Self {
            total,
            random: 0,
            seed: 0,
        }
    }
}

/// Unit vectors on `S^{d-1}`; `count` deterministic points.
pub fn sphere_grid(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => (0..count)
            .map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..count)
            .map(|k| {
                let th = std::f64::consts::TAU * (k as f64 + 0.5) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => fibonacci_sphere(count),
        _ => halton_sphere(d, count),
    }
}

fn fibonacci_sphere(count: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

fn halton_sphere(d: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len(), "Halton grid supports up to {} dimensions", PRIMES.len());
    let normal = Normal::standard();
    let mut out = Vec::with_capacity(count);
    let mut k = 1u64;
    while out.len() < count {
        let g: Vec<f64> = (0..d)
            .map(|i| normal.inverse_cdf(radical_inverse(k, PRIMES[i]).clamp(1e-12, 1.0 - 1e-12)))
            .collect();
        k += 1;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            out.push(g.iter().map(|v| v / norm).collect());
        }
    }
    out
}

/// Unit tangent directions at `x0` following `plan`. The deterministic grid is
/// expressed in [`Ellipsoid::tangent_frame`]; for `n = 3` direction `k` has
/// angle `2 pi (k + 1/2) / N` from the first frame vector.
pub fn tangent_directions(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    plan: &DirectionPlan,
) -> Result<Vec<DVector<f64>>> {
    if plan.random > plan.total {
        return Err(FocalError::invalid("more random directions than directions"));
    }
    let frame = e.tangent_frame(x0)?;
    let grid = sphere_grid(frame.len(), plan.total - plan.random);
    let mut out: Vec<DVector<f64>> = grid
        .into_iter()
        .map(|c| {
            let mut v = DVector::zeros(e.dim());
            for (ci, f) in c.iter().zip(&frame) {
                v.axpy(*ci, f, 1.0);
            }
            v.normalize()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    for _ in 0..plan.random {
        out.push(e.sample_unit_tangent(x0, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_are_unit_and_sized() {
        for d in 1..7 {
            let g = sphere_grid(d, 33);
            assert_eq!(g.len(), 33);
            for p in g {
                let n: f64 = p.iter().map(|v| v * v).sum();
                assert!((n - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fibonacci_is_roughly_balanced() {
        let g = sphere_grid(3, 500);
        let mean: Vec<f64> = (0..3).map(|i| g.iter().map(|p| p[i]).sum::<f64>() / 500.0).collect();
        assert!(mean.iter().all(|m| m.abs() < 0.01));
    }

    #[test]
    fn halton_is_deterministic() {
        assert_eq!(sphere_grid(5, 10), sphere_grid(5, 10));
    }

    #[test]
    fn tangent_directions_are_tangent_and_reproducible() {
        let e = Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let x = e.random_point(3);
        let n = e.unit_normal(&x).unwrap();
        let plan = DirectionPlan::new(64, 11);
        let a = tangent_directions(&e, &x, &plan).unwrap();
        let b = tangent_directions(&e, &x, &plan).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        for v in &a {
            assert!(v.dot(&n).abs() < 1e-14);
            assert!((v.norm() - 1.0).abs() < 1e-14);
        }
    }
}
