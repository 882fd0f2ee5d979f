//! Moser's Lax matrix `L(x, xi) = P_xi (A - x x^T) P_xi`, its spectrum, the
//! eigenvalue moment map, the rational function `Phi_z` with the quadratic
//! forms `Q_z`, confocal tangency, Jacobi ellipsoidal coordinates and the first
//! variation of the nonzero eigenvalues.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::geometry::{Ellipsoid, PhasePoint};
use crate::linalg::{commutator, elementary_symmetric, jacobi_eigen, null_space};

/// Eigenvalues with `|lambda| < KERNEL_RTOL * ||L||_F` are counted as kernel.
pub const KERNEL_RTOL: f64 = 1e-10;
/// Nonzero eigenvalues closer than `CLUSTER_RTOL * ||L||_F` are treated as one cluster.
pub const CLUSTER_RTOL: f64 = 1e-8;
/// `|z - alpha_j|` below this is a pole of `Q_z`.
pub const POLE_TOL: f64 = 1e-12;
/// Level of the confocal family: `{y : <(A - z)^{-1} y, y> = QUADRIC_LEVEL}`.
///
/// Fixed by [`resolve_quadric_level`]: this is the sign for which the zeros of
/// `Phi_z` are exactly the tangency values, and `z = 0` gives the ellipsoid itself.
pub const QUADRIC_LEVEL: f64 = 1.0;
/// Normalized tangency residual accepted as a contact.
pub const CONTACT_TOL: f64 = 1e-9;
/// Alignment tolerance `|1 - |<normal, phi>||` for the eigenvector/normal check.
pub const ALIGNMENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct LaxMatrix(pub DMatrix<f64>);

impl LaxMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Kernel of dimension other than two at a point that should be on-shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyAnomaly {
    pub kernel_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LaxSpectrum {
    /// All eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Nonzero eigenvalues `lambda_1 <= .. <= lambda_{n-2}` (on-shell).
    pub nonzero: Vec<f64>,
    pub nonzero_vectors: Vec<DVector<f64>>,
    pub kernel_vectors: Vec<DVector<f64>>,
    pub frobenius_norm: f64,
    pub anomaly: Option<DegeneracyAnomaly>,
}

impl LaxSpectrum {
    pub fn kernel_dim(&self) -> usize {
        self.kernel_vectors.len()
    }

    /// Index ranges of nonzero eigenvalues that sit within the cluster tolerance.
    pub fn clusters(&self) -> Vec<std::ops::Range<usize>> {
        let tol = CLUSTER_RTOL * self.frobenius_norm;
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.nonzero.len() {
            if k == self.nonzero.len() || self.nonzero[k] - self.nonzero[k - 1] > tol {
                out.push(start..k);
                start = k;
            }
        }
        out
    }

    pub fn is_simple(&self) -> bool {
        self.clusters().iter().all(|r| r.len() == 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    /// `e_1, .., e_{n-2}` of the nonzero eigenvalues.
    pub e: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub anomaly: Option<DegeneracyAnomaly>,
}

/// `P_xi (A - x x^T) P_xi` with `P_xi` the orthogonal projector onto `xi^perp`.
pub fn lax_matrix(e: &Ellipsoid, x: &DVector<f64>, xi: &DVector<f64>) -> LaxMatrix {
    let n = e.dim();
    let u = xi.normalize();
    let p = DMatrix::<f64>::identity(n, n) - &u * u.transpose();
    let m = e.matrix() - x * x.transpose();
    let l = &p * m * &p;
    LaxMatrix((&l + l.transpose()) * 0.5)
}

/// Moser's skew matrix `B_ij = -(x_i y_j - x_j y_i) / (alpha_i alpha_j)`.
///
/// `[B, L]` is the velocity of `L` in Moser's time; along unit-speed geodesics
/// (arclength) the Lax equation reads `dL/dt = [B, L] / |A^{-1}x|^2`, see
/// [`lax_velocity`].
pub fn b_matrix(e: &Ellipsoid, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let a = e.alphas();
    let n = e.dim();
    DMatrix::from_fn(n, n, |i, j| -(x[i] * y[j] - x[j] * y[i]) / (a[i] * a[j]))
}

/// `dL/dt` along the arclength-parametrized geodesic through `(x, y)`.
pub fn lax_velocity(e: &Ellipsoid, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let l = lax_matrix(e, x, y);
    let b = b_matrix(e, x, y);
    commutator(&b, l.matrix()) / e.inv_apply(x).norm_squared()
}

pub fn spectrum(l: &LaxMatrix) -> Result<LaxSpectrum> {
    let norm = l.0.norm();
    let eig = jacobi_eigen(&l.0)?;
    let kernel_tol = KERNEL_RTOL * norm.max(f64::MIN_POSITIVE);
    let mut nonzero = Vec::new();
    let mut nonzero_vectors = Vec::new();
    let mut kernel_vectors = Vec::new();
    for (k, &v) in eig.values.iter().enumerate() {
        if v.abs() < kernel_tol {
            kernel_vectors.push(eig.vector(k));
        } else {
            nonzero.push(v);
            nonzero_vectors.push(eig.vector(k));
        }
    }
    let anomaly = (kernel_vectors.len() != 2).then_some(DegeneracyAnomaly {
        kernel_dim: kernel_vectors.len(),
    });
    Ok(LaxSpectrum {
        eigenvalues: eig.values,
        nonzero,
        nonzero_vectors,
        kernel_vectors,
        frobenius_norm: norm,
        anomaly,
    })
}

pub fn lax_spectrum(e: &Ellipsoid, x: &DVector<f64>, xi: &DVector<f64>) -> Result<LaxSpectrum> {
    spectrum(&lax_matrix(e, x, xi))
}

pub fn moment_map(e: &Ellipsoid, x: &DVector<f64>, xi: &DVector<f64>) -> Result<MomentValue> {
    let s = lax_spectrum(e, x, xi)?;
    Ok(MomentValue {
        e: elementary_symmetric(&s.nonzero),
        eigenvalues: s.nonzero,
        anomaly: s.anomaly,
    })
}

fn check_pole(e: &Ellipsoid, z: f64) -> Result<()> {
    for &alpha in e.alphas() {
        let distance = (z - alpha).abs();
        if distance < POLE_TOL {
            return Err(FocalError::PoleOfQ { z, alpha, distance });
        }
    }
    Ok(())
}

/// `Q_z(x, y) = <(z - A)^{-1} x, y>`.
pub fn q_form(e: &Ellipsoid, z: f64, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    check_pole(e, z)?;
    Ok(x.iter()
        .zip(y.iter())
        .zip(e.alphas())
        .map(|((a, b), alpha)| a * b / (z - alpha))
        .sum())
}

/// `Phi_z(x, xi) = (|xi|^2 / z) det(L - z) / det(A - z)`, evaluated through the
/// nonzero Lax spectrum as `|xi|^2 z prod(lambda_j - z) / prod(alpha_j - z)`.
pub fn phi_z(e: &Ellipsoid, z: f64, x: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
    if z == 0.0 {
        return Err(FocalError::invalid("Phi_z is evaluated away from z = 0"));
    }
    check_pole(e, z)?;
    let s = lax_spectrum(e, x, xi)?;
    let denominator: f64 = e.alphas().iter().map(|a| a - z).product();
    let numerator = if s.kernel_dim() == 2 {
        z * s.nonzero.iter().map(|l| l - z).product::<f64>()
    } else {
        s.eigenvalues.iter().map(|l| l - z).product::<f64>() / z
    };
    Ok(xi.norm_squared() * numerator / denominator)
}

/// Right-hand side `Q_z(xi)(1 + Q_z(x)) - Q_z(x, xi)^2` of Moser's identity for `Phi_z`.
pub fn phi_identity_rhs(e: &Ellipsoid, z: f64, x: &DVector<f64>, xi: &DVector<f64>) -> Result<f64> {
    let qxx = q_form(e, z, x, x)?;
    let qxy = q_form(e, z, x, xi)?;
    let qyy = q_form(e, z, xi, xi)?;
    Ok(qyy * (1.0 + qxx) - qxy * qxy)
}

/// Discriminant of `t -> <(A - z)^{-1}(x + t xi), x + t xi> - level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyResidual {
    /// `b^2 - a c` for the quadratic `a t^2 + 2 b t + c`.
    pub discriminant: f64,
    /// `b^2 + |a c|`, the size of the terms that cancel at tangency.
    pub scale: f64,
}

impl TangencyResidual {
    pub fn normalized(&self) -> f64 {
        if self.scale == 0.0 {
            self.discriminant.abs()
        } else {
            self.discriminant.abs() / self.scale
        }
    }
}

fn tangency_with_level(
    e: &Ellipsoid,
    z: f64,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    level: f64,
) -> Result<(TangencyResidual, f64, f64)> {
    check_pole(e, z)?;
    // (A - z)^{-1} = -(z - A)^{-1}
    let a = -q_form(e, z, xi, xi)?;
    let b = -q_form(e, z, x, xi)?;
    let c = -q_form(e, z, x, x)? - level;
    // Magnitudes of a, b, c before the per-axis terms cancel.
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, level.abs());
    for ((p, q), alpha) in x.iter().zip(xi.iter()).zip(e.alphas()) {
        let w = 1.0 / (alpha - z).abs();
        sa += q * q * w;
        sb += (p * q).abs() * w;
        sc += p * p * w;
    }
    Ok((
        TangencyResidual {
            discriminant: b * b - a * c,
            scale: sb * sb + sa * sc,
        },
        a,
        b,
    ))
}

pub fn confocal_tangency_residual(
    e: &Ellipsoid,
    lambda: f64,
    x: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<TangencyResidual> {
    tangency_with_level(e, lambda, x, xi, QUADRIC_LEVEL).map(|r| r.0)
}

/// Outcome of the numerical sign resolution for the confocal family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadricConvention {
    pub level: f64,
    /// Worst normalized tangency residual at the Lax eigenvalues, per candidate level.
    pub worst_residual_plus: f64,
    pub worst_residual_minus: f64,
    pub samples: usize,
}

/// Decides between `<(A - z)^{-1} y, y> = +1` and `= -1` as the family whose
/// tangency values coincide with the zeros of `Phi_z` (the Lax eigenvalues).
pub fn resolve_quadric_level(e: &Ellipsoid, samples: usize, seed: u64) -> Result<QuadricConvention> {
    let mut worst_plus: f64 = 0.0;
    let mut worst_minus: f64 = 0.0;
    for k in 0..samples {
        let p = e.random_phase_point(seed.wrapping_add(k as u64));
        let s = lax_spectrum(e, &p.x, &p.xi)?;
        for &lambda in &s.nonzero {
            if check_pole(e, lambda).is_err() {
                continue;
            }
            let plus = tangency_with_level(e, lambda, &p.x, &p.xi, 1.0)?.0.normalized();
            let minus = tangency_with_level(e, lambda, &p.x, &p.xi, -1.0)?.0.normalized();
            worst_plus = worst_plus.max(plus);
            worst_minus = worst_minus.max(minus);
        }
    }
    let level = if worst_plus <= worst_minus { 1.0 } else { -1.0 };
    Ok(QuadricConvention {
        level,
        worst_residual_plus: worst_plus,
        worst_residual_minus: worst_minus,
        samples,
    })
}

#[derive(Debug, Clone)]
pub struct Contact {
    /// Parameter of the double root along `x + t xi`.
    pub t: f64,
    pub point: DVector<f64>,
    /// Unit normal `(A - lambda)^{-1} p` of the confocal quadric at the contact point.
    pub normal: DVector<f64>,
    /// `|<normal, phi>|` for the eigenvector of a simple eigenvalue matching `lambda`.
    pub eigenvector_alignment: Option<f64>,
}

impl Contact {
    pub fn is_aligned(&self) -> Option<bool> {
        self.eigenvector_alignment
            .map(|a| (1.0 - a).abs() < ALIGNMENT_TOL)
    }
}

pub fn contact_point_and_normal(
    e: &Ellipsoid,
    lambda: f64,
    x: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<Contact> {
    let (residual, a, b) = tangency_with_level(e, lambda, x, xi, QUADRIC_LEVEL)?;
    if !(residual.normalized() < CONTACT_TOL) {
        return Err(FocalError::NoContact(residual.normalized()));
    }
    if a == 0.0 {
        return Err(FocalError::NoContact(f64::INFINITY));
    }
    let t = -b / a;
    let point = x + xi * t;
    let grad = DVector::from_iterator(
        point.len(),
        point.iter().zip(e.alphas()).map(|(p, alpha)| p / (alpha - lambda)),
    );
    let normal = grad.normalize();

    let s = lax_spectrum(e, x, xi)?;
    let cluster_tol = CLUSTER_RTOL * s.frobenius_norm;
    let eigenvector_alignment = s
        .nonzero
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - lambda).abs().total_cmp(&(b.1 - lambda).abs()))
        .filter(|(k, &l)| {
            (l - lambda).abs() < 1e-6 * s.frobenius_norm.max(1.0)
                && s
                    .nonzero
                    .iter()
                    .enumerate()
                    .all(|(j, &m)| j == *k || (m - l).abs() > cluster_tol)
        })
        .map(|(k, _)| normal.dot(&s.nonzero_vectors[k]).abs());
    Ok(Contact {
        t,
        point,
        normal,
        eigenvector_alignment,
    })
}

/// `R(z; x) = sum_i x_i^2 prod_{j != i} (alpha_j - z)`.
pub fn r_polynomial(e: &Ellipsoid, z: f64, x: &DVector<f64>) -> f64 {
    let a = e.alphas();
    (0..a.len())
        .map(|i| {
            let others: f64 = (0..a.len()).filter(|&j| j != i).map(|j| a[j] - z).product();
            x[i] * x[i] * others
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidalCoords {
    /// The `n - 1` roots of `R(z; x)`, ascending.
    pub zeta: Vec<f64>,
}

impl EllipsoidalCoords {
    /// Largest violation of `alpha_k <= zeta_k <= alpha_{k+1}` (sorted axes).
    pub fn interlacing_violation(&self, e: &Ellipsoid) -> f64 {
        let a = e.sorted_alphas();
        self.zeta
            .iter()
            .enumerate()
            .map(|(k, &z)| (a[k] - z).max(z - a[k + 1]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Roots of `sum_i x_i^2 / (alpha_i - z) = level`, with the root `z = 0` of the
/// `level = 1` family (the ellipsoid itself) removed.
///
/// Each distinct axis value of multiplicity `m` is a root of multiplicity `m - 1`
/// (and `m` if the whole block of `x` vanishes); the remaining roots are isolated
/// one per gap between consecutive weighted axis values and bisected down to
/// adjacent floating-point numbers.
fn coordinate_roots(e: &Ellipsoid, x: &DVector<f64>, level: f64) -> Result<Vec<f64>> {
    e.check_dim(x)?;
    if x.iter().all(|v| *v == 0.0) {
        return Err(FocalError::DegenerateInput("x = 0 has no ellipsoidal coordinates".into()));
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut zeta = Vec::with_capacity(e.dim() - 1);
    for block in e.blocks().iter().rev() {
        let weight: f64 = block.indices.iter().map(|&i| x[i] * x[i]).sum();
        if weight > 0.0 {
            zeta.extend(std::iter::repeat_n(block.alpha, block.multiplicity() - 1));
            groups.push((block.alpha, weight));
        } else {
            zeta.extend(std::iter::repeat_n(block.alpha, block.multiplicity()));
        }
    }

    // sum_i w_i prod_{j != i} (b_j - z) - level prod_j (b_j - z)
    let reduced = |z: f64| -> f64 {
        let weighted: f64 = groups
            .iter()
            .enumerate()
            .map(|(i, &(_, w))| {
                let others: f64 = groups
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &(b, _))| b - z)
                    .product();
                w * others
            })
            .sum();
        weighted - level * groups.iter().map(|&(b, _)| b - z).product::<f64>()
    };

    for pair in groups.windows(2) {
        let (mut lo, mut hi) = (pair[0].0, pair[1].0);
        let mut f_lo = reduced(lo);
        let f_hi = reduced(hi);
        if f_lo == 0.0 || f_hi == 0.0 || f_lo.signum() == f_hi.signum() {
            return Err(FocalError::NumericalFailure(format!(
                "no sign change of R on [{lo}, {hi}]"
            )));
        }
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = reduced(mid);
            if f_mid == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        zeta.push(0.5 * (lo + hi));
    }
    zeta.sort_by(f64::total_cmp);
    if zeta.len() != e.dim() - 1 {
        return Err(FocalError::NumericalFailure(format!(
            "found {} ellipsoidal coordinates, expected {}",
            zeta.len(),
            e.dim() - 1
        )));
    }
    Ok(zeta)
}

/// The roots of `R(z; x) = sum_i x_i^2 prod_{j != i} (alpha_j - z)`.
pub fn ellipsoidal_coordinates(e: &Ellipsoid, x: &DVector<f64>) -> Result<EllipsoidalCoords> {
    coordinate_roots(e, x, 0.0).map(|zeta| EllipsoidalCoords { zeta })
}

/// Parameters `z != 0` of the confocal quadrics `<(A - z)^{-1} y, y> = 1`
/// through `x`. These are the coordinates that the Lax eigenvalues interlace.
pub fn confocal_coordinates(e: &Ellipsoid, x: &DVector<f64>) -> Result<EllipsoidalCoords> {
    coordinate_roots(e, x, QUADRIC_LEVEL).map(|zeta| EllipsoidalCoords { zeta })
}

/// Root counts of the numerator `z prod(lambda_j - z)` of `Phi_z` in the
/// intervals `(-inf, u_1), [u_1, u_2], .., [u_{n-2}, u_{n-1}]` where `u` are the
/// [`confocal_coordinates`] of `x`. Each count is one.
pub fn audin_interval_counts(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    tol: f64,
) -> Result<Vec<usize>> {
    let u = confocal_coordinates(e, x)?.zeta;
    let s = lax_spectrum(e, x, xi)?;
    let mut roots = vec![0.0];
    roots.extend(&s.nonzero);
    let mut counts = vec![0; u.len()];
    for r in roots {
        if r < u[0] - tol {
            counts[0] += 1;
            continue;
        }
        // Roots sitting on a shared endpoint are credited to the first interval that has room.
        for k in 1..u.len() {
            if r >= u[k - 1] - tol && r <= u[k] + tol && counts[k] == 0 {
                counts[k] += 1;
                break;
            }
        }
    }
    Ok(counts)
}

/// Rates `d lambda_j / ds` along a variation `(x_dot, xi_dot)` of `(x, xi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueVariation {
    pub rates: Vec<f64>,
    /// Set when some nonzero eigenvalues were within the cluster tolerance; the
    /// clustered rates are then the eigenvalues of the variation compressed to
    /// the cluster's eigenspace.
    pub multiplicity_warning: bool,
}

/// Largest violation of the linearized on-shell conditions for `(x_dot, xi_dot)`.
pub fn admissibility_residual(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    x_dot: &DVector<f64>,
    xi_dot: &DVector<f64>,
) -> f64 {
    let ax = e.inv_apply(x);
    let r1 = ax.dot(x_dot);
    let r2 = ax.dot(xi_dot) + e.inv_apply(x_dot).dot(xi);
    let r3 = xi_dot.dot(xi);
    r1.abs().max(r2.abs()).max(r3.abs())
}

/// First variation of the nonzero Lax eigenvalues:
/// `lambda_dot = -2 (<xi_dot, phi><(A - x x^T) phi, xi> + <x_dot, phi><x, phi>)`.
pub fn eigenvalue_variation(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    x_dot: &DVector<f64>,
    xi_dot: &DVector<f64>,
) -> Result<EigenvalueVariation> {
    let scale = 1.0 + x_dot.norm() + xi_dot.norm();
    let residual = admissibility_residual(e, x, xi, x_dot, xi_dot);
    if residual > 1e-8 * scale {
        return Err(FocalError::invalid(format!(
            "variation is not tangent to the unit cosphere bundle (residual {residual:.3e})"
        )));
    }
    let s = lax_spectrum(e, x, xi)?;
    let m = e.matrix() - x * x.transpose();
    let m_xi = &m * xi;
    // Symmetric bilinear form whose diagonal is the eigenvalue rate.
    let form = |u: &DVector<f64>, v: &DVector<f64>| -> f64 {
        -(xi_dot.dot(u) * m_xi.dot(v)
            + xi_dot.dot(v) * m_xi.dot(u)
            + x_dot.dot(u) * x.dot(v)
            + x_dot.dot(v) * x.dot(u))
    };
    let mut rates = Vec::with_capacity(s.nonzero.len());
    let mut warning = false;
    for cluster in s.clusters() {
        if cluster.len() == 1 {
            let phi = &s.nonzero_vectors[cluster.start];
            rates.push(form(phi, phi));
        } else {
            warning = true;
            let k = cluster.len();
            let vs = &s.nonzero_vectors[cluster.clone()];
            let compressed = DMatrix::from_fn(k, k, |i, j| form(&vs[i], &vs[j]));
            rates.extend(jacobi_eigen(&compressed)?.values);
        }
    }
    Ok(EigenvalueVariation {
        rates,
        multiplicity_warning: warning,
    })
}

/// Orthonormal basis (in `R^{2n}`) of admissible variations at `(x, xi)`:
/// the `2n - 3` dimensional tangent space of the unit cosphere bundle.
pub fn admissible_basis(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
) -> Vec<(DVector<f64>, DVector<f64>)> {
    let n = e.dim();
    let ax = e.inv_apply(x);
    let axi = e.inv_apply(xi);
    let mut c = DMatrix::zeros(3, 2 * n);
    for i in 0..n {
        c[(0, i)] = ax[i];
        c[(1, i)] = axi[i];
        c[(1, n + i)] = ax[i];
        c[(2, n + i)] = xi[i];
    }
    null_space(&c, 1e-12)
        .into_iter()
        .map(|v| (v.rows(0, n).into_owned(), v.rows(n, n).into_owned()))
        .collect()
}

/// Retraction of `(x + s x_dot, xi + s xi_dot)` back onto the unit cosphere
/// bundle; first-order accurate in `s` for admissible variations.
pub fn retract(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    x_dot: &DVector<f64>,
    xi_dot: &DVector<f64>,
    s: f64,
) -> Result<PhasePoint> {
    PhasePoint::normalized(e, &(x + x_dot * s), &(xi + xi_dot * s))
}

/// Reorders `spectrum.nonzero` so that branch `k` is the eigenvalue whose
/// eigenvector overlaps most with `reference[k]` (greedy maximal overlap).
pub fn track_branches(reference: &[DVector<f64>], spectrum: &LaxSpectrum) -> Vec<f64> {
    let m = reference.len().min(spectrum.nonzero.len());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, r) in reference.iter().enumerate().take(m) {
        for (j, v) in spectrum.nonzero_vectors.iter().enumerate() {
            pairs.push((r.dot(v).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut assigned = vec![None; m];
    let mut used = vec![false; spectrum.nonzero.len()];
    for (_, i, j) in pairs {
        if assigned[i].is_none() && !used[j] {
            assigned[i] = Some(j);
            used[j] = true;
        }
    }
    assigned
        .into_iter()
        .map(|j| spectrum.nonzero[j.expect("every branch is matched")])
        .collect()
}

/// Central finite difference of the tracked nonzero eigenvalues along the
/// retracted curve with direction `(x_dot, xi_dot)`.
pub fn eigenvalue_variation_fd(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    x_dot: &DVector<f64>,
    xi_dot: &DVector<f64>,
    step: f64,
) -> Result<Vec<f64>> {
    let base = lax_spectrum(e, x, xi)?;
    let plus = retract(e, x, xi, x_dot, xi_dot, step)?;
    let minus = retract(e, x, xi, x_dot, xi_dot, -step)?;
    let lp = track_branches(&base.nonzero_vectors, &lax_spectrum(e, &plus.x, &plus.xi)?);
    let lm = track_branches(&base.nonzero_vectors, &lax_spectrum(e, &minus.x, &minus.xi)?);
    Ok(lp
        .iter()
        .zip(&lm)
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect())
}

/// `(n-2) x (2n-3)` Jacobian of the eigenvalue map in the admissible basis, by
/// central differences.
pub fn lambda_jacobian_fd(
    e: &Ellipsoid,
    x: &DVector<f64>,
    xi: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let basis = admissible_basis(e, x, xi);
    let columns = basis
        .iter()
        .map(|(dx, dxi)| eigenvalue_variation_fd(e, x, xi, dx, dxi, step).map(DVector::from_vec))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Same Jacobian from the first-variation formula.
pub fn lambda_jacobian(e: &Ellipsoid, x: &DVector<f64>, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
    let basis = admissible_basis(e, x, xi);
    let columns = basis
        .iter()
        .map(|(dx, dxi)| eigenvalue_variation(e, x, xi, dx, dxi).map(|v| DVector::from_vec(v.rates)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Jacobian `d e_j / d lambda_k = e_{j-1}(lambda without lambda_k)`; its
/// determinant is the Vandermonde product of the `lambda_k`.
pub fn moment_lambda_jacobian(lambdas: &[f64]) -> DMatrix<f64> {
    let m = lambdas.len();
    DMatrix::from_fn(m, m, |j, k| {
        if j == 0 {
            1.0
        } else {
            let rest: Vec<f64> = lambdas
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &v)| v)
                .collect();
            elementary_symmetric(&rest)[j - 1]
        }
    })
}

/// Smallest singular value of a matrix.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vector;

    fn e4321() -> Ellipsoid {
        Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap()
    }

    fn umbilic_321() -> DVector<f64> {
        vector(&[1.5f64.sqrt(), 0.0, 0.5f64.sqrt()])
    }

    #[test]
    fn sphere_lax_matrix_is_a_projector() {
        let s = Ellipsoid::new(&[1.0; 4]).unwrap();
        let x = vector(&[1.0, 0.0, 0.0, 0.0]);
        let xi = vector(&[0.0, 1.0, 0.0, 0.0]);
        let l = lax_matrix(&s, &x, &xi);
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 2)] = 1.0;
        expected[(3, 3)] = 1.0;
        assert!((l.matrix() - expected).norm() < 1e-15);
        let sp = spectrum(&l).unwrap();
        assert_eq!(sp.kernel_dim(), 2);
        assert!(sp.nonzero.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let m = moment_map(&s, &x, &xi).unwrap();
        assert!((m.e[0] - 2.0).abs() < 1e-14 && (m.e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lax_matrix_annihilates_velocity_and_normal() {
        let e = e4321();
        for seed in 0..20 {
            let p = e.random_phase_point(seed);
            let l = lax_matrix(&e, &p.x, &p.xi);
            assert!((l.matrix() - l.matrix().transpose()).norm() < 1e-14);
            assert!((l.matrix() * &p.xi).norm() < 1e-12);
            assert!((l.matrix() * e.inv_apply(&p.x)).norm() < 1e-12);
            let s = spectrum(&l).unwrap();
            assert_eq!(s.kernel_dim(), 2);
            assert!(s.anomaly.is_none());
            for (lam, v) in s.nonzero.iter().zip(&s.nonzero_vectors) {
                assert!((l.matrix() * v - v * *lam).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn umbilic_spectrum_is_middle_axis() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let x = umbilic_321();
        for seed in 0..10 {
            let xi = e.random_unit_tangent(&x, seed).unwrap();
            let s = lax_spectrum(&e, &x, &xi).unwrap();
            assert_eq!(s.nonzero.len(), 1);
            assert!((s.nonzero[0] - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn generic_points_have_simple_spectrum() {
        let e = e4321();
        for seed in 0..50 {
            let p = e.random_phase_point(seed);
            let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
            assert_eq!(s.nonzero.len(), 2);
            assert!(s.is_simple());
        }
    }

    #[test]
    fn b_matrix_examples() {
        let e = e4321();
        let x = e.random_point(1);
        assert!(b_matrix(&e, &x, &(&x * 2.5)).norm() < 1e-15);
        let b = b_matrix(&e, &x, &e.random_unit_tangent(&x, 2).unwrap());
        assert!((&b + b.transpose()).norm() < 1e-15);

        let s = Ellipsoid::new(&[1.0; 3]).unwrap();
        let x = vector(&[1.0, 0.0, 0.0]);
        let y = vector(&[0.0, 0.6, 0.8]);
        let expected = -(&x * y.transpose() - &y * x.transpose());
        assert!((b_matrix(&s, &x, &y) - expected).norm() < 1e-15);
    }

    #[test]
    fn q_form_examples() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let x = vector(&[3f64.sqrt(), 0.0, 0.0]);
        assert!((q_form(&e, 0.0, &x, &x).unwrap() + 1.0).abs() < 1e-15);
        let y = vector(&[0.2, -0.7, 1.1]);
        assert_eq!(q_form(&e, 5.0, &x, &y).unwrap(), q_form(&e, 5.0, &y, &x).unwrap());
        let z = 1e8;
        let q = q_form(&e, z, &y, &y).unwrap();
        assert!((q * z / y.norm_squared() - 1.0).abs() < 1e-7);
        assert!(matches!(q_form(&e, 2.0, &x, &y), Err(FocalError::PoleOfQ { .. })));
    }

    #[test]
    fn phi_vanishes_at_lax_eigenvalues_and_matches_identity() {
        let e = e4321();
        let p = e.random_phase_point(7);
        let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
        for &l in &s.nonzero {
            assert!(phi_z(&e, l, &p.x, &p.xi).unwrap().abs() < 1e-12);
        }
        for z in [-3.0, 0.5, 1.5, 2.7, 3.3, 6.0] {
            let phi = phi_z(&e, z, &p.x, &p.xi).unwrap();
            let rhs = phi_identity_rhs(&e, z, &p.x, &p.xi).unwrap();
            assert!((phi - rhs).abs() < 1e-10 * phi.abs().max(1.0), "z={z}: {phi} vs {rhs}");
            // Phi is constant along the line x + s xi.
            let shifted = &p.x + &p.xi * 0.37;
            let rhs_shift = phi_identity_rhs(&e, z, &shifted, &p.xi).unwrap();
            assert!((rhs_shift - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
        }
        assert!(phi_z(&e, 0.0, &p.x, &p.xi).is_err());
        assert!(phi_z(&e, 3.0, &p.x, &p.xi).is_err());
    }

    #[test]
    fn quadric_level_resolution_is_frozen() {
        let conv = resolve_quadric_level(&e4321(), 200, 17).unwrap();
        assert_eq!(conv.level, QUADRIC_LEVEL);
        assert!(conv.worst_residual_plus < 1e-9);
        assert!(conv.worst_residual_minus > 1e-3);
    }

    #[test]
    fn tangency_and_contact() {
        let e = e4321();
        let p = e.random_phase_point(3);
        let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
        for (k, &l) in s.nonzero.iter().enumerate() {
            assert!(confocal_tangency_residual(&e, l, &p.x, &p.xi).unwrap().normalized() < 1e-9);
            let off = confocal_tangency_residual(&e, l + 0.1, &p.x, &p.xi).unwrap();
            assert!(off.normalized() > 1e-4);
            assert!(matches!(
                contact_point_and_normal(&e, l + 0.1, &p.x, &p.xi),
                Err(FocalError::NoContact(_))
            ));

            let c = contact_point_and_normal(&e, l, &p.x, &p.xi).unwrap();
            let on_quadric: f64 = c
                .point
                .iter()
                .zip(e.alphas())
                .map(|(y, a)| y * y / (a - l))
                .sum();
            assert!((on_quadric - QUADRIC_LEVEL).abs() < 1e-9);
            assert_eq!(c.is_aligned(), Some(true), "eigenvector {k}");
        }
        let sphere = Ellipsoid::new(&[1.0; 4]).unwrap();
        let q = sphere.random_phase_point(1);
        let ls = lax_spectrum(&sphere, &q.x, &q.xi).unwrap();
        assert!(matches!(
            confocal_tangency_residual(&sphere, ls.nonzero[0], &q.x, &q.xi),
            Err(FocalError::PoleOfQ { .. })
        ));
    }

    #[test]
    fn ellipsoidal_coordinates_at_vertex() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let c = ellipsoidal_coordinates(&e, &vector(&[3f64.sqrt(), 0.0, 0.0])).unwrap();
        assert!((c.zeta[0] - 1.0).abs() < 1e-14 && (c.zeta[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn confocal_coordinates_at_vertex_and_generic() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let c = confocal_coordinates(&e, &vector(&[3f64.sqrt(), 0.0, 0.0])).unwrap();
        assert_eq!(c.zeta, vec![1.0, 2.0]);
        let e = e4321();
        let x = e.random_point(8);
        let c = confocal_coordinates(&e, &x).unwrap();
        for &z in &c.zeta {
            let level: f64 = x.iter().zip(e.alphas()).map(|(v, a)| v * v / (a - z)).sum();
            assert!((level - 1.0).abs() < 1e-8);
        }
        assert_eq!(c.interlacing_violation(&e), 0.0);
    }

    #[test]
    fn ellipsoidal_coordinates_are_roots() {
        let e = e4321();
        for seed in 0..20 {
            let x = e.random_point(seed);
            let c = ellipsoidal_coordinates(&e, &x).unwrap();
            assert_eq!(c.zeta.len(), 3);
            for &z in &c.zeta {
                let d: f64 = x.iter().map(|v| v * v).sum::<f64>() * 10.0;
                assert!(r_polynomial(&e, z, &x).abs() < 1e-12 * d);
            }
            assert_eq!(c.interlacing_violation(&e), 0.0);
        }
    }

    #[test]
    fn ellipsoidal_coordinates_with_repeated_axes() {
        let e = Ellipsoid::new(&[3.0, 2.0, 2.0, 1.0]).unwrap();
        let x = e.random_point(4);
        let c = ellipsoidal_coordinates(&e, &x).unwrap();
        assert_eq!(c.zeta.len(), 3);
        assert!(c.zeta.contains(&2.0));
        assert!(c.interlacing_violation(&e) < 1e-12);
    }

    #[test]
    fn audin_intervals_hold_one_root_each() {
        let e = e4321();
        for seed in 0..50 {
            let p = e.random_phase_point(seed);
            let counts = audin_interval_counts(&e, &p.x, &p.xi, 1e-10).unwrap();
            assert_eq!(counts, vec![1, 1, 1]);
        }
    }

    #[test]
    fn variation_vanishes_for_orthogonal_vertical_variations() {
        // n = 4: xi_dot must be orthogonal to xi, to the normal and to both phi_j;
        // that leaves only the zero vector, so use the formula's linearity instead.
        let e = e4321();
        let p = e.random_phase_point(9);
        let zero = DVector::zeros(4);
        let v = eigenvalue_variation(&e, &p.x, &p.xi, &zero, &zero).unwrap();
        assert!(v.rates.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn variation_matches_finite_differences() {
        let e = e4321();
        for seed in 0..20 {
            let p = e.random_phase_point(100 + seed);
            let basis = admissible_basis(&e, &p.x, &p.xi);
            assert_eq!(basis.len(), 5);
            for (dx, dxi) in &basis {
                assert!(admissibility_residual(&e, &p.x, &p.xi, dx, dxi) < 1e-14);
                let exact = eigenvalue_variation(&e, &p.x, &p.xi, dx, dxi).unwrap().rates;
                let fd = eigenvalue_variation_fd(&e, &p.x, &p.xi, dx, dxi, 1e-5).unwrap();
                let err = exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let size = exact.iter().map(|a| a.abs()).fold(0.0, f64::max);
                assert!(err < 1e-6 * size.max(1.0), "err {err:.3e}");
            }
        }
    }

    #[test]
    fn vertical_variation_reduces_to_short_formula() {
        let e = e4321();
        let p = e.random_phase_point(31);
        let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
        let n = e.unit_normal(&p.x).unwrap();
        let zero = DVector::zeros(4);
        // Vertical variations: x fixed, xi_dot tangent and orthogonal to xi.
        let xi_dot = &s.nonzero_vectors[0] * 0.6 + &s.nonzero_vectors[1] * 0.8;
        assert!(xi_dot.dot(&n).abs() < 1e-12);
        let rates = eigenvalue_variation(&e, &p.x, &p.xi, &zero, &xi_dot).unwrap().rates;
        let m = e.matrix() - &p.x * p.x.transpose();
        for (k, phi) in s.nonzero_vectors.iter().enumerate() {
            let short = -2.0 * xi_dot.dot(phi) * (&m * phi).dot(&p.xi);
            assert!((rates[k] - short).abs() < 1e-13);
        }
    }

    #[test]
    fn variation_rejects_inadmissible_directions() {
        let e = e4321();
        let p = e.random_phase_point(5);
        let n = e.unit_normal(&p.x).unwrap();
        assert!(eigenvalue_variation(&e, &p.x, &p.xi, &n, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn jacobian_full_rank_and_vandermonde() {
        let e = e4321();
        let p = e.random_phase_point(77);
        let jf = lambda_jacobian_fd(&e, &p.x, &p.xi, 1e-5).unwrap();
        let ja = lambda_jacobian(&e, &p.x, &p.xi).unwrap();
        assert_eq!(jf.shape(), (2, 5));
        assert!((&jf - &ja).norm() < 1e-6 * ja.norm());
        assert!(smallest_singular_value(&jf) > 1e-6);

        // d e = (de/dlambda) d lambda, with det(de/dlambda) the Vandermonde product.
        let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
        let v = moment_lambda_jacobian(&s.nonzero);
        assert!((v.determinant().abs() - (s.nonzero[1] - s.nonzero[0]).abs()).abs() < 1e-12);
        let basis = admissible_basis(&e, &p.x, &p.xi);
        let (dx, dxi) = &basis[2];
        let h = 1e-5;
        let plus = retract(&e, &p.x, &p.xi, dx, dxi, h).unwrap();
        let minus = retract(&e, &p.x, &p.xi, dx, dxi, -h).unwrap();
        let ep = moment_map(&e, &plus.x, &plus.xi).unwrap().e;
        let em = moment_map(&e, &minus.x, &minus.xi).unwrap().e;
        let de = DVector::from_iterator(2, ep.iter().zip(&em).map(|(a, b)| (a - b) / (2.0 * h)));
        let predicted = &v * ja.column(2);
        assert!((de - predicted).norm() < 1e-6);
    }

    #[test]
    fn lax_velocity_is_skew_conjugation() {
        let e = e4321();
        let p = e.random_phase_point(8);
        let v = lax_velocity(&e, &p.x, &p.xi);
        // Velocity of an isospectral family is traceless and symmetric.
        assert!(v.trace().abs() < 1e-13);
        assert!((&v - v.transpose()).norm() < 1e-13);
    }
}
