//! The ellipsoid `<A^{-1} x, x> = 1` with diagonal positive `A`, its normals,
//! tangent projections and the shape operator used as the umbilic oracle.
//!
//! Points and vectors are always in the caller's coordinate order. The axis
//! values are additionally kept sorted, with the permutation back to user order,
//! for everything that reasons about the ordering of the `alpha_j`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::linalg::{gram_schmidt, jacobi_eigen};

/// Default tolerance on `|<A^{-1}x,x> - 1|`, tangency and unit speed.
pub const DEFAULT_CONSTRAINT_TOL: f64 = 1e-9;

/// Relative gap below which two axis values count as the same eigenvalue.
const AXIS_EQUALITY_RTOL: f64 = 1e-12;

/// One distinct eigenvalue of `A` and the user-order coordinates carrying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBlock {
    pub alpha: f64,
    pub indices: Vec<usize>,
}

impl AxisBlock {
    pub fn multiplicity(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    /// Squared semi-axes in user order.
    alphas: Vec<f64>,
    /// Squared semi-axes, non-decreasing.
    sorted: Vec<f64>,
    /// `sorted[k] == alphas[order[k]]`.
    order: Vec<usize>,
    /// Distinct values, largest first.
    blocks: Vec<AxisBlock>,
    tol: f64,
}

impl Ellipsoid {
    /// Builds `E_A` from the eigenvalues of `A` (squared semi-axes).
    pub fn new(alphas: &[f64]) -> Result<Self> {
        if alphas.len() < 3 {
            return Err(FocalError::UnsupportedDimension(alphas.len()));
        }
        Self::with_min_dim(alphas, 3)
    }

    pub fn from_semi_axes(semi_axes: &[f64]) -> Result<Self> {
        if let Some(a) = semi_axes.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(FocalError::invalid(format!("semi-axis {a} is not strictly positive")));
        }
        let alphas: Vec<f64> = semi_axes.iter().map(|a| a * a).collect();
        Self::new(&alphas)
    }

    /// Coordinate sub-ellipsoids may be one-dimensional ellipses.
    pub(crate) fn with_min_dim(alphas: &[f64], min_dim: usize) -> Result<Self> {
        if alphas.len() < min_dim {
            return Err(FocalError::UnsupportedDimension(alphas.len()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(FocalError::invalid(format!("axis value {a} is not strictly positive")));
        }
        let mut order: Vec<usize> = (0..alphas.len()).collect();
        order.sort_by(|&i, &j| alphas[i].total_cmp(&alphas[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| alphas[i]).collect();

        let mut blocks: Vec<AxisBlock> = Vec::new();
        for &i in order.iter().rev() {
            match blocks.last_mut() {
                Some(b) if (b.alpha - alphas[i]).abs() <= AXIS_EQUALITY_RTOL * b.alpha => {
                    b.indices.push(i)
                }
                _ => blocks.push(AxisBlock {
                    alpha: alphas[i],
                    indices: vec![i],
                }),
            }
        }
        for b in &mut blocks {
            b.indices.sort_unstable();
        }
        Ok(Self {
            alphas: alphas.to_vec(),
            sorted,
            order,
            blocks,
            tol: DEFAULT_CONSTRAINT_TOL,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sorted_alphas(&self) -> &[f64] {
        &self.sorted
    }

    /// Permutation with `sorted_alphas()[k] == alphas()[permutation()[k]]`.
    pub fn permutation(&self) -> &[usize] {
        &self.order
    }

    /// Distinct axis values, largest first.
    pub fn blocks(&self) -> &[AxisBlock] {
        &self.blocks
    }

    /// Multiplicities `(m_1, .., m_k)` of the distinct axes, largest axis first.
    pub fn multiplicities(&self) -> Vec<usize> {
        self.blocks.iter().map(AxisBlock::multiplicity).collect()
    }

    pub fn is_sphere(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn has_distinct_axes(&self) -> bool {
        self.blocks.len() == self.dim()
    }

    pub fn semi_axes(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a.sqrt()).collect()
    }

    pub fn geometric_mean_semi_axis(&self) -> f64 {
        let log_sum: f64 = self.alphas.iter().map(|a| 0.5 * a.ln()).sum();
        (log_sum / self.dim() as f64).exp()
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.sorted.last().copied().unwrap_or(0.0).sqrt()
    }

    pub fn min_semi_axis(&self) -> f64 {
        self.sorted.first().copied().unwrap_or(0.0).sqrt()
    }

    /// The index of the block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.indices.contains(&i))
            .expect("coordinate index out of range")
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.alphas))
    }

    /// `A^{-1} v`.
    pub fn inv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().zip(&self.alphas).map(|(x, a)| x / a))
    }

    /// `<A^{-1} x, x>`.
    pub fn quadratic(&self, x: &DVector<f64>) -> f64 {
        x.iter().zip(&self.alphas).map(|(x, a)| x * x / a).sum()
    }

    pub fn constraint_residual(&self, x: &DVector<f64>) -> f64 {
        (self.quadratic(x) - 1.0).abs()
    }

    pub(crate) fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(FocalError::invalid(format!(
                "vector has {} components, ellipsoid dimension is {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_on(&self, x: &DVector<f64>) -> Result<()> {
        self.check_dim(x)?;
        let residual = self.constraint_residual(x);
        if !(residual <= self.tol) {
            return Err(FocalError::ConstraintViolation {
                residual,
                tolerance: self.tol,
            });
        }
        Ok(())
    }

    /// Outward unit normal `A^{-1}x / |A^{-1}x|`.
    pub fn unit_normal(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_on(x)?;
        Ok(self.inv_apply(x).normalize())
    }

    /// Radial scaling `y / sqrt(<A^{-1}y,y>)` back onto the ellipsoid.
    pub fn project_to_ellipsoid(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(y)?;
        let q = self.quadratic(y);
        if !(q > 0.0) || !q.is_finite() {
            return Err(FocalError::DegenerateInput(
                "cannot scale the zero vector onto the ellipsoid".into(),
            ));
        }
        Ok(y / q.sqrt())
    }

    /// `v - <v,n> n` for the unit normal `n` at `x`.
    pub fn project_to_tangent(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        let n = self.unit_normal(x)?;
        Ok(v - &n * v.dot(&n))
    }

    /// Orthonormal basis of `T_x`, built by Gram-Schmidt on the normal followed by
    /// the coordinate vectors `e_1, e_2, ..` in user order.
    pub fn tangent_frame(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let n = self.unit_normal(x)?;
        let dim = self.dim();
        let units = (0..dim).map(|k| {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            e
        });
        let frame = gram_schmidt(&[n], units, 1e-6);
        debug_assert_eq!(frame.len(), dim - 1);
        Ok(frame)
    }

    /// Principal curvatures w.r.t. the outward normal at `x`.
    ///
    /// The second fundamental form is the Hessian `2A^{-1}` of the defining
    /// function divided by `|grad| = 2|A^{-1}x|`, restricted to `T_x`.
    pub fn shape_operator(&self, x: &DVector<f64>) -> Result<ShapeReport> {
        let frame = self.tangent_frame(x)?;
        let grad_norm = self.inv_apply(x).norm();
        let m = frame.len();
        let images: Vec<DVector<f64>> = frame.iter().map(|v| self.inv_apply(v)).collect();
        let form = DMatrix::from_fn(m, m, |i, j| frame[i].dot(&images[j]) / grad_norm);
        let eig = jacobi_eigen(&form)?;
        let principal_curvatures = eig.values;
        let umbilic_defect = principal_curvatures.last().unwrap() - principal_curvatures[0];
        Ok(ShapeReport {
            principal_curvatures,
            umbilic_defect,
        })
    }

    /// Unit tangent vector at `x`, uniform on the unit sphere of `T_x`.
    pub fn random_unit_tangent(&self, x: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_unit_tangent(x, &mut rng)
    }

    pub(crate) fn sample_unit_tangent(
        &self,
        x: &DVector<f64>,
        rng: &mut impl rand::Rng,
    ) -> Result<DVector<f64>> {
        let n = self.unit_normal(x)?;
        loop {
            let g = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
            let t: DVector<f64> = &g - &n * g.dot(&n);
            let norm = t.norm();
            if norm > 1e-8 {
                return Ok(t / norm);
            }
        }
    }

    /// A random point on the ellipsoid (Gaussian direction, radially scaled).
    pub fn random_point(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_point(&mut rng)
    }

    pub(crate) fn sample_point(&self, rng: &mut impl rand::Rng) -> DVector<f64> {
        loop {
            let g = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
            if let Ok(p) = self.project_to_ellipsoid(&g) {
                return p;
            }
        }
    }

    /// A random on-shell phase point.
    pub fn random_phase_point(&self, seed: u64) -> PhasePoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = self.sample_point(&mut rng);
        let xi = self
            .sample_unit_tangent(&x, &mut rng)
            .expect("sampled point lies on the ellipsoid");
        PhasePoint { x, xi }
    }
}

/// A point of the unit cosphere bundle, with the covector represented by the
/// corresponding unit tangent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: DVector<f64>,
    pub xi: DVector<f64>,
}

impl PhasePoint {
    /// Validates the three on-shell conditions against the ellipsoid tolerance.
    pub fn new(e: &Ellipsoid, x: DVector<f64>, xi: DVector<f64>) -> Result<Self> {
        e.check_on(&x)?;
        e.check_dim(&xi)?;
        let tangency = e.inv_apply(&x).dot(&xi).abs();
        let speed = (xi.norm() - 1.0).abs();
        let residual = tangency.max(speed);
        if !(residual <= e.tolerance()) {
            return Err(FocalError::ConstraintViolation {
                residual,
                tolerance: e.tolerance(),
            });
        }
        Ok(Self { x, xi })
    }

    /// Projects onto the ellipsoid, the tangent space and the unit sphere.
    pub fn normalized(e: &Ellipsoid, x: &DVector<f64>, xi: &DVector<f64>) -> Result<Self> {
        let x = e.project_to_ellipsoid(x)?;
        let xi = e.project_to_tangent(&x, xi)?;
        let norm = xi.norm();
        if norm == 0.0 {
            return Err(FocalError::DegenerateInput("direction is normal to the ellipsoid".into()));
        }
        Ok(Self { x, xi: xi / norm })
    }

    pub fn residuals(&self, e: &Ellipsoid) -> (f64, f64, f64) {
        (
            e.constraint_residual(&self.x),
            e.inv_apply(&self.x).dot(&self.xi).abs(),
            (self.xi.norm() - 1.0).abs(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub principal_curvatures: Vec<f64>,
    /// `max - min` principal curvature.
    pub umbilic_defect: f64,
}

/// Elementwise `DVector` from a slice.
pub fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e321() -> Ellipsoid {
        Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn construction_and_multiplicities() {
        let e = e321();
        assert_eq!(e.multiplicities(), vec![1, 1, 1]);
        assert_eq!(e.sorted_alphas(), &[1.0, 2.0, 3.0]);
        assert_eq!(e.permutation(), &[2, 1, 0]);
        assert!(e.has_distinct_axes());

        let s = Ellipsoid::new(&[1.0; 4]).unwrap();
        assert_eq!(s.multiplicities(), vec![4]);
        assert!(s.is_sphere());

        let t = Ellipsoid::new(&[3.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(t.multiplicities(), vec![1, 2, 1]);
        assert_eq!(t.blocks()[1].indices, vec![1, 2]);

        let w = Ellipsoid::new(&[3.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(w.multiplicities(), vec![2, 1, 1]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Ellipsoid::new(&[1.0, 0.0, 2.0]),
            Err(FocalError::InvalidInput(_))
        ));
        assert!(matches!(
            Ellipsoid::new(&[1.0, -2.0, 2.0]),
            Err(FocalError::InvalidInput(_))
        ));
        assert!(matches!(
            Ellipsoid::new(&[1.0, 2.0]),
            Err(FocalError::UnsupportedDimension(2))
        ));
        assert!(matches!(Ellipsoid::new(&[]), Err(FocalError::UnsupportedDimension(0))));
    }

    #[test]
    fn semi_axes_are_squared() {
        let e = Ellipsoid::from_semi_axes(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.alphas(), &[4.0, 1.0, 1.0]);
    }

    #[test]
    fn unit_normal_examples() {
        let e = e321();
        let n = e.unit_normal(&vector(&[3f64.sqrt(), 0.0, 0.0])).unwrap();
        assert!((n - vector(&[1.0, 0.0, 0.0])).norm() < 1e-15);

        let s = Ellipsoid::new(&[1.0, 1.0, 1.0]).unwrap();
        let x = vector(&[0.6, 0.0, 0.8]);
        assert!((s.unit_normal(&x).unwrap() - &x).norm() < 1e-15);

        let x = vector(&[1.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
        let n = e.unit_normal(&x).unwrap();
        let expected = vector(&[1.5f64.sqrt() / 3.0, 0.0, 0.5f64.sqrt()]).normalize();
        assert!((&n - expected).norm() < 1e-15);
        for seed in 0..10 {
            let xi = e.random_unit_tangent(&x, seed).unwrap();
            assert!(n.dot(&xi).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_normal_rejects_off_ellipsoid_points() {
        let e = e321();
        assert!(matches!(
            e.unit_normal(&vector(&[2.0, 0.0, 0.0])),
            Err(FocalError::ConstraintViolation { .. })
        ));
    }

    #[test]
    fn project_to_ellipsoid_examples() {
        let e = e321();
        let p = e.project_to_ellipsoid(&vector(&[2.0, 0.0, 0.0])).unwrap();
        assert!((p - vector(&[3f64.sqrt(), 0.0, 0.0])).norm() < 1e-15);

        let s = Ellipsoid::new(&[1.0, 1.0, 1.0]).unwrap();
        let p = s.project_to_ellipsoid(&vector(&[2.0, 0.0, 0.0])).unwrap();
        assert_eq!(p, vector(&[1.0, 0.0, 0.0]));

        assert!(matches!(
            e.project_to_ellipsoid(&vector(&[0.0, 0.0, 0.0])),
            Err(FocalError::DegenerateInput(_))
        ));
    }

    #[test]
    fn project_to_tangent_examples() {
        let e = e321();
        let x = e.random_point(3);
        let n = e.unit_normal(&x).unwrap();
        assert!(e.project_to_tangent(&x, &n).unwrap().norm() < 1e-15);
        let t = e.random_unit_tangent(&x, 4).unwrap();
        assert!((e.project_to_tangent(&x, &t).unwrap() - &t).norm() < 1e-15);
        let v = vector(&[0.3, -1.2, 0.7]);
        let p = e.project_to_tangent(&x, &v).unwrap();
        assert!(e.inv_apply(&x).dot(&p).abs() < 1e-14);
    }

    #[test]
    fn shape_operator_examples() {
        let s = Ellipsoid::new(&[1.0, 1.0, 1.0]).unwrap();
        let r = s.shape_operator(&vector(&[0.0, 0.6, 0.8])).unwrap();
        assert!(r.principal_curvatures.iter().all(|k| (k - 1.0).abs() < 1e-14));
        assert!(r.umbilic_defect < 1e-14);

        let e = e321();
        let umb = vector(&[1.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
        assert!(e.shape_operator(&umb).unwrap().umbilic_defect < 1e-10);

        // At the vertex (sqrt3,0,0) the principal curvatures are sqrt3/2 and sqrt3.
        let r = e.shape_operator(&vector(&[3f64.sqrt(), 0.0, 0.0])).unwrap();
        assert!((r.principal_curvatures[0] - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!((r.principal_curvatures[1] - 3f64.sqrt()).abs() < 1e-14);
        assert!(r.umbilic_defect > 0.1);
    }

    #[test]
    fn random_unit_tangent_is_deterministic_and_isotropic() {
        let e = Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let x = e.random_point(11);
        let a = e.random_unit_tangent(&x, 5).unwrap();
        let b = e.random_unit_tangent(&x, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-14);
        assert!(e.inv_apply(&x).dot(&a).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut mean = DVector::zeros(4);
        let count = 10_000;
        for _ in 0..count {
            mean += e.sample_unit_tangent(&x, &mut rng).unwrap();
        }
        mean /= count as f64;
        assert!(mean.norm() < 0.05, "mean norm {}", mean.norm());
    }

    #[test]
    fn phase_point_validation() {
        let e = e321();
        let x = vector(&[3f64.sqrt(), 0.0, 0.0]);
        assert!(PhasePoint::new(&e, x.clone(), vector(&[0.0, 1.0, 0.0])).is_ok());
        assert!(PhasePoint::new(&e, x.clone(), vector(&[0.0, 2.0, 0.0])).is_err());
        assert!(PhasePoint::new(&e, x, vector(&[1.0, 0.0, 0.0])).is_err());
    }
}
