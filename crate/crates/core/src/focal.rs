//! Self-focal point diagnostics: return-time scans over `S*_{x0}`, the first
//! return map on directions and its finite-difference derivative, umbilics of
//! 3-axial ellipsoids, coordinate slices, block-rotation isometries and the
//! moment-map constancy test.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::flow::{search_returns, ReturnEvent};
use crate::geometry::Ellipsoid;
use crate::lax::moment_map;
use crate::linalg::gram_schmidt;
use crate::ode::{brent_root, IntegratorOptions};
use crate::sampling::{tangent_directions, DirectionPlan};

/// Relative time spread below which a scan is evidence of self-focality.
pub const FOCAL_TOL: f64 = 1e-5;
/// Relative time spread above which a scan rules self-focality out.
pub const SEPARATION_TOL: f64 = 1e-2;
/// Default return radius in units of the geometric-mean semi-axis.
pub const RETURN_RADIUS_FACTOR: f64 = 1e-3;
/// Largest shape-operator defect accepted at a computed umbilic.
pub const UMBILIC_DEFECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SelfFocalEvidence,
    NotSelfFocal,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanOptions {
    pub num_directions: usize,
    pub seed: u64,
    /// Directions drawn at random on top of the deterministic grid.
    pub random_directions: usize,
    pub integrator: IntegratorOptions,
    pub return_radius: f64,
    pub focal_tol: f64,
    pub separation_tol: f64,
}

impl ScanOptions {
    /// Defaults scaled to `e`: return radius [`RETURN_RADIUS_FACTOR`] geometric-mean semi-axis,
    /// horizon `4 pi` times the largest semi-axis, one eighth random directions.
    pub fn for_ellipsoid(e: &Ellipsoid, num_directions: usize, seed: u64) -> Self {
        Self {
            num_directions,
            seed,
            random_directions: num_directions / 8,
            integrator: IntegratorOptions::default()
                .with_t_max(4.0 * std::f64::consts::PI * e.max_semi_axis()),
            return_radius: RETURN_RADIUS_FACTOR * e.geometric_mean_semi_axis(),
            focal_tol: FOCAL_TOL,
            separation_tol: SEPARATION_TOL,
        }
    }

    pub fn grid_only(mut self) -> Self {
        self.random_directions = 0;
        self
    }

    fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.return_radius > 0.0) {
            return Err(FocalError::invalid("return radius must be positive"));
        }
        if !(self.focal_tol > 0.0 && self.separation_tol >= self.focal_tol) {
            return Err(FocalError::invalid("need 0 < focal_tol <= separation_tol"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionResult {
    pub direction: DVector<f64>,
    /// First return within the return radius.
    pub event: Option<ReturnEvent>,
    /// Closest approach to `x0` (any local minimum of `|x(t) - x0|`) seen before the
    /// first return or the horizon.
    pub closest: Option<ReturnEvent>,
}

impl DirectionResult {
    /// The event used in the time statistics: the return if there was one,
    /// otherwise the closest approach.
    pub fn representative(&self) -> Option<&ReturnEvent> {
        self.event.as_ref().or(self.closest.as_ref())
    }

    pub fn angular_deviation(&self) -> Option<f64> {
        self.event
            .as_ref()
            .map(|ev| angle_between(&self.direction, &ev.terminal_direction))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub base_point: DVector<f64>,
    pub alphas: Vec<f64>,
    pub options: ScanOptions,
    pub results: Vec<DirectionResult>,
    pub returned: usize,
    pub mean_time: f64,
    pub time_spread: f64,
    pub relative_spread: f64,
    pub max_miss: f64,
    pub verdict: Verdict,
    pub detail: Option<String>,
}

impl ScanReport {
    pub fn times(&self) -> Vec<f64> {
        self.results
            .iter()
            .filter_map(|r| r.representative().map(|e| e.return_time))
            .collect()
    }

    pub fn deviations(&self) -> Vec<Option<f64>> {
        self.results.iter().map(|r| r.angular_deviation()).collect()
    }
}

pub fn angle_between(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    // Half-angle form keeps precision for nearly parallel vectors.
    let (a, b) = (u / u.norm(), v / v.norm());
    2.0 * (&a - &b).norm().atan2((&a + &b).norm())
}

fn check_base_point(e: &Ellipsoid, x0: &DVector<f64>) -> Result<()> {
    e.unit_normal(x0).map(|_| ())
}

/// Launches the geodesics `exp_{x0}(t xi)` for the given directions and reports
/// return-time statistics with a verdict.
pub fn scan_directions(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    directions: Vec<DVector<f64>>,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    opts.validate()?;
    check_base_point(e, x0)?;
    if directions.is_empty() {
        return Err(FocalError::invalid("scan needs at least one direction"));
    }
    let results = directions
        .into_par_iter()
        .map(|direction| {
            let search = search_returns(e, x0, &direction, &opts.integrator, opts.return_radius, true)?;
            Ok(DirectionResult {
                direction,
                event: search.events.into_iter().next(),
                closest: search.closest,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(e, x0, opts, results))
}

fn summarize(e: &Ellipsoid, x0: &DVector<f64>, opts: &ScanOptions, results: Vec<DirectionResult>) -> ScanReport {
    let returned = results.iter().filter(|r| r.event.is_some()).count();
    let times: Vec<f64> = results
        .iter()
        .filter_map(|r| r.representative().map(|e| e.return_time))
        .collect();
    let missing = results.len() - times.len();
    let (mean_time, time_spread) = if times.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        (mean, max - min)
    };
    let relative_spread = time_spread / mean_time;
    let max_miss = results
        .iter()
        .map(|r| r.representative().map_or(f64::INFINITY, |e| e.miss_distance))
        .fold(0.0, f64::max);

    let mut detail = None;
    let verdict = if missing > 0 {
        detail = Some(format!(
            "{missing} of {} directions never approached x0 before t = {}",
            results.len(),
            opts.integrator.t_max
        ));
        Verdict::Inconclusive
    } else if relative_spread > opts.separation_tol {
        Verdict::NotSelfFocal
    } else if relative_spread < opts.focal_tol && returned == results.len() {
        Verdict::SelfFocalEvidence
    } else {
        if returned < results.len() {
            detail = Some(format!(
                "{} of {} directions did not return within radius {:.3e} before t = {}",
                results.len() - returned,
                results.len(),
                opts.return_radius,
                opts.integrator.t_max
            ));
        }
        Verdict::Inconclusive
    };
    ScanReport {
        base_point: x0.clone(),
        alphas: e.alphas().to_vec(),
        options: opts.clone(),
        results,
        returned,
        mean_time,
        time_spread,
        relative_spread,
        max_miss,
        verdict,
        detail,
    }
}

/// Scan over `opts.num_directions` grid plus seeded random directions at `x0`.
pub fn self_focality_scan(e: &Ellipsoid, x0: &DVector<f64>, opts: &ScanOptions) -> Result<ScanReport> {
    if opts.num_directions < 8 {
        return Err(FocalError::invalid("a focality scan needs at least 8 directions"));
    }
    let plan = DirectionPlan {
        total: opts.num_directions,
        random: opts.random_directions.min(opts.num_directions),
        seed: opts.seed,
    };
    let directions = tangent_directions(e, x0, &plan)?;
    scan_directions(e, x0, directions, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnMapSample {
    pub initial_direction: DVector<f64>,
    pub terminal_direction: DVector<f64>,
    pub angular_deviation: f64,
    pub return_time: f64,
    pub miss_distance: f64,
    /// Set when no return within the radius was found near the common time.
    pub flagged: bool,
}

/// The first return map `Phi_{x0}` sampled on `grid`, using for each direction
/// the return event closest to `t_common`.
pub fn return_map(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    t_common: f64,
    grid: &[DVector<f64>],
    opts: &ScanOptions,
) -> Result<Vec<ReturnMapSample>> {
    opts.validate()?;
    check_base_point(e, x0)?;
    if !(t_common > 0.0) {
        return Err(FocalError::invalid("common return time must be positive"));
    }
    let integrator = opts
        .integrator
        .with_t_max(t_common * 1.05 + 10.0 * opts.return_radius);
    grid.par_iter()
        .map(|xi| {
            let search = search_returns(e, x0, xi, &integrator, opts.return_radius, false)?;
            let best = search
                .events
                .iter()
                .min_by(|a, b| {
                    (a.return_time - t_common)
                        .abs()
                        .total_cmp(&(b.return_time - t_common).abs())
                })
                .cloned();
            let (event, flagged) = match best {
                Some(ev) => (ev, false),
                None => match search.closest {
                    Some(c) => (c, true),
                    None => {
                        return Ok(ReturnMapSample {
                            initial_direction: xi.clone(),
                            terminal_direction: DVector::from_element(xi.len(), f64::NAN),
                            angular_deviation: f64::NAN,
                            return_time: f64::NAN,
                            miss_distance: f64::INFINITY,
                            flagged: true,
                        })
                    }
                },
            };
            Ok(ReturnMapSample {
                initial_direction: xi.clone(),
                angular_deviation: angle_between(xi, &event.terminal_direction),
                terminal_direction: event.terminal_direction,
                return_time: event.return_time,
                miss_distance: event.miss_distance,
                flagged,
            })
        })
        .collect()
}

/// Orthonormal basis of `T_xi S*_{x0}`: tangent to the ellipsoid and orthogonal to `xi`.
pub fn direction_sphere_frame(e: &Ellipsoid, x0: &DVector<f64>, xi: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let n = e.unit_normal(x0)?;
    let frame = e.tangent_frame(x0)?;
    let basis = gram_schmidt(&[n, xi.normalize()], frame, 1e-6);
    debug_assert_eq!(basis.len(), e.dim() - 2);
    Ok(basis)
}

/// Central-difference stencil `cos(h) xi +- sin(h) v_k` around `xi`.
pub fn twistedness_stencil(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    xi: &DVector<f64>,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    let frame = direction_sphere_frame(e, x0, xi)?;
    let mut out = Vec::with_capacity(2 * frame.len());
    for v in &frame {
        out.push(xi * h.cos() + v * h.sin());
        out.push(xi * h.cos() - v * h.sin());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistednessSample {
    pub direction: DVector<f64>,
    /// `D Phi` in the frame of [`direction_sphere_frame`], row-major.
    pub jacobian: Vec<f64>,
    /// `min_k |mu_k - 1|` over the (complex) eigenvalues `mu_k` of `D Phi`.
    pub distance_from_one: f64,
    pub det_minus_identity: f64,
    pub sigma_min_minus_identity: f64,
    /// Largest entry change between stencil widths `h` and `h/2`.
    pub resolution_change: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistednessReport {
    pub step: f64,
    pub samples: Vec<TwistednessSample>,
    /// Directions whose `D Phi` has an eigenvalue within `untwisted_tol` of 1.
    pub untwisted: Vec<usize>,
    pub untwisted_tol: f64,
}

/// Parallel transport on the unit sphere from `T_p` to `T_q` along the great circle.
fn transport(w: &DVector<f64>, p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let c = 1.0 + p.dot(q);
    if c < 1e-8 {
        return Err(FocalError::NumericalFailure(
            "return map sends the direction to its antipode; transport undefined".into(),
        ));
    }
    Ok(w - (p + q) * (w.dot(q) / c))
}

/// `D Phi` at `xi` from the return-map values on the stencil of width `h`.
pub fn return_map_jacobian(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    xi: &DVector<f64>,
    phi_xi: &DVector<f64>,
    stencil_images: &[DVector<f64>],
    h: f64,
) -> Result<DMatrix<f64>> {
    let frame = direction_sphere_frame(e, x0, xi)?;
    let m = frame.len();
    if stencil_images.len() != 2 * m {
        return Err(FocalError::invalid("stencil size does not match the direction sphere"));
    }
    let mut jac = DMatrix::zeros(m, m);
    for k in 0..m {
        let diff = (&stencil_images[2 * k] - &stencil_images[2 * k + 1]) / (2.0 * h.sin());
        let tangent = &diff - phi_xi * diff.dot(phi_xi);
        let back = transport(&tangent, phi_xi, xi)?;
        for (i, v) in frame.iter().enumerate() {
            jac[(i, k)] = v.dot(&back);
        }
    }
    Ok(jac)
}

fn jacobian_summary(jac: &DMatrix<f64>) -> (f64, f64, f64) {
    let m = jac.nrows();
    let shifted = jac - DMatrix::<f64>::identity(m, m);
    let distance = jac
        .complex_eigenvalues()
        .iter()
        .map(|mu| ((mu.re - 1.0).powi(2) + mu.im.powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let det = shifted.determinant().abs();
    let sigma = shifted
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    (distance, det, sigma)
}

/// Finite-difference derivative of the return map at each of `directions`,
/// with a stencil-halving resolution check.
pub fn twistedness_report(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    t_common: f64,
    directions: &[DVector<f64>],
    h: f64,
    opts: &ScanOptions,
) -> Result<TwistednessReport> {
    const RESOLUTION_TOL: f64 = 1e-3;
    const UNTWISTED_TOL: f64 = 1e-3;
    if !(h > 0.0 && h < 0.5) {
        return Err(FocalError::invalid("stencil width must lie in (0, 0.5)"));
    }
    let mut samples = Vec::with_capacity(directions.len());
    let mut untwisted = Vec::new();
    for (idx, xi) in directions.iter().enumerate() {
        let mut grid = vec![xi.clone()];
        grid.extend(twistedness_stencil(e, x0, xi, h)?);
        grid.extend(twistedness_stencil(e, x0, xi, h / 2.0)?);
        let images = return_map(e, x0, t_common, &grid, opts)?;
        if let Some(bad) = images.iter().find(|s| s.flagged) {
            return Err(FocalError::InsufficientResolution(format!(
                "direction {idx}: stencil point misses x0 by {:.3e}",
                bad.miss_distance
            )));
        }
        let m = (grid.len() - 1) / 4;
        let img: Vec<DVector<f64>> = images.iter().map(|s| s.terminal_direction.clone()).collect();
        let coarse = return_map_jacobian(e, x0, xi, &img[0], &img[1..1 + 2 * m], h)?;
        let fine = return_map_jacobian(e, x0, xi, &img[0], &img[1 + 2 * m..], h / 2.0)?;
        let change = (&coarse - &fine).amax() / fine.amax().max(1.0);
        if change > RESOLUTION_TOL {
            return Err(FocalError::InsufficientResolution(format!(
                "direction {idx}: D Phi changes by {change:.3e} when the stencil is halved from {h}"
            )));
        }
        let (distance, det, sigma) = jacobian_summary(&fine);
        if distance < UNTWISTED_TOL {
            untwisted.push(idx);
        }
        samples.push(TwistednessSample {
            direction: xi.clone(),
            jacobian: fine.transpose().iter().copied().collect(),
            distance_from_one: distance,
            det_minus_identity: det,
            sigma_min_minus_identity: sigma,
            resolution_change: change,
        });
    }
    Ok(TwistednessReport {
        step: h,
        samples,
        untwisted,
        untwisted_tol: UNTWISTED_TOL,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedDirections {
    pub grid_size: usize,
    /// Angles from the first tangent-frame vector.
    pub angles: Vec<f64>,
    pub directions: Vec<DVector<f64>>,
    pub deviations: Vec<f64>,
    /// Grid directions with no return near `t_common`.
    pub flagged: usize,
}

/// Fixed directions of the return map of a surface (`n = 3`): zeros of the
/// intrinsic angle difference `theta' - theta`, bracketed on a `grid_size`
/// circle grid and refined by Brent. Roots with deviation above `tol` (jumps of
/// the wrapped difference) are discarded.
pub fn fixed_directions(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    t_common: f64,
    grid_size: usize,
    tol: f64,
    opts: &ScanOptions,
) -> Result<FixedDirections> {
    if e.dim() != 3 {
        return Err(FocalError::UnsupportedDimension(e.dim()));
    }
    let frame = e.tangent_frame(x0)?;
    let dir = |th: f64| &frame[0] * th.cos() + &frame[1] * th.sin();
    let wrap = |a: f64| (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    let angle_gap = |th: f64, s: &ReturnMapSample| {
        let v = &s.terminal_direction;
        wrap(v.dot(&frame[1]).atan2(v.dot(&frame[0])) - th)
    };
    let thetas: Vec<f64> = sphere_angles(grid_size);
    let grid: Vec<DVector<f64>> = thetas.iter().map(|&t| dir(t)).collect();
    let samples = return_map(e, x0, t_common, &grid, opts)?;
    let flagged = samples.iter().filter(|s| s.flagged).count();
    let gaps: Vec<f64> = thetas.iter().zip(&samples).map(|(&t, s)| angle_gap(t, s)).collect();

    let mut out = FixedDirections {
        grid_size,
        angles: Vec::new(),
        directions: Vec::new(),
        deviations: Vec::new(),
        flagged,
    };
    let gap_at = |th: f64| -> f64 {
        match return_map(e, x0, t_common, &[dir(th)], opts) {
            Ok(s) if !s[0].flagged => angle_gap(th, &s[0]),
            _ => f64::NAN,
        }
    };
    for k in 0..grid_size {
        let k1 = (k + 1) % grid_size;
        let (g0, g1) = (gaps[k], gaps[k1]);
        if samples[k].flagged || samples[k1].flagged || !(g0.is_finite() && g1.is_finite()) {
            continue;
        }
        let root = if g0 == 0.0 {
            thetas[k]
        } else if g0 * g1 < 0.0 && (g0 - g1).abs() < std::f64::consts::PI {
            let t1 = if k1 == 0 { thetas[0] + std::f64::consts::TAU } else { thetas[k1] };
            match brent_root(gap_at, thetas[k], t1, g0, g1, 1e-13) {
                Ok(r) => r,
                Err(_) => continue,
            }
        } else {
            continue;
        };
        let s = return_map(e, x0, t_common, &[dir(root)], opts)?;
        if !s[0].flagged && s[0].angular_deviation < tol {
            out.angles.push(root.rem_euclid(std::f64::consts::TAU));
            out.directions.push(dir(root));
            out.deviations.push(s[0].angular_deviation);
        }
    }
    Ok(out)
}

fn sphere_angles(count: usize) -> Vec<f64> {
    crate::sampling::sphere_grid(2, count)
        .into_iter()
        .map(|p| p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmbilicPoints {
    /// The four umbilics `(+-x_max, 0, +-x_min)` in user coordinates.
    pub points: Vec<DVector<f64>>,
    pub defects: Vec<f64>,
    /// Largest distance to the closed form
    /// `x_max^2 = a1 (a1 - a2)/(a1 - a3)`, `x_min^2 = a3 (a2 - a3)/(a1 - a3)`.
    pub closed_form_deviation: f64,
}

/// Umbilics of a 3-axial ellipsoid, located as the zeros of the difference of
/// principal curvatures along the slice through the largest and smallest axes.
pub fn umbilic_points_2d(e: &Ellipsoid) -> Result<UmbilicPoints> {
    if e.dim() != 3 {
        return Err(FocalError::UnsupportedDimension(e.dim()));
    }
    if !e.has_distinct_axes() {
        return Err(FocalError::NoUmbilicFound(0.0));
    }
    let blocks = e.blocks();
    let (i1, i2, i3) = (blocks[0].indices[0], blocks[1].indices[0], blocks[2].indices[0]);
    let (a1, a2, a3) = (blocks[0].alpha, blocks[1].alpha, blocks[2].alpha);

    // On the slice x_{i2} = 0, e_{i2} is a principal direction with curvature
    // (1/a2)/|A^{-1}x|; the in-slice principal curvature is <A^{-1}t,t>/|A^{-1}x|.
    let difference = |s: f64| -> f64 {
        let (tx, tz) = (-a1.sqrt() * s.sin(), a3.sqrt() * s.cos());
        let norm2 = tx * tx + tz * tz;
        (tx * tx / a1 + tz * tz / a3) / norm2 - 1.0 / a2
    };
    let lo = 0.0;
    let hi = std::f64::consts::FRAC_PI_2;
    let s = brent_root(difference, lo, hi, difference(lo), difference(hi), 1e-15)?;
    let (p1, p3) = (a1.sqrt() * s.cos(), a3.sqrt() * s.sin());

    let closed1 = (a1 * (a1 - a2) / (a1 - a3)).sqrt();
    let closed3 = (a3 * (a2 - a3) / (a1 - a3)).sqrt();
    let closed_form_deviation = (p1 - closed1).abs().max((p3 - closed3).abs());

    let mut points = Vec::with_capacity(4);
    let mut defects = Vec::with_capacity(4);
    for (s1, s3) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let mut x = DVector::zeros(3);
        x[i1] = s1 * p1;
        x[i2] = 0.0;
        x[i3] = s3 * p3;
        let x = e.project_to_ellipsoid(&x)?;
        let defect = e.shape_operator(&x)?.umbilic_defect;
        if !(defect < UMBILIC_DEFECT_TOL) {
            return Err(FocalError::NoUmbilicFound(defect));
        }
        points.push(x);
        defects.push(defect);
    }
    Ok(UmbilicPoints {
        points,
        defects,
        closed_form_deviation,
    })
}

/// A coordinate sub-ellipsoid `{x : x_i = 0 for i not in indices}`.
#[derive(Debug, Clone)]
pub struct SliceEmbedding {
    pub sub: Ellipsoid,
    pub indices: Vec<usize>,
    pub ambient_dim: usize,
}

impl SliceEmbedding {
    pub fn embed(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient_dim);
        for (k, &i) in self.indices.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    pub fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| v[i]))
    }

    /// Largest ambient component outside the slice.
    pub fn off_slice(&self, v: &DVector<f64>) -> f64 {
        (0..self.ambient_dim)
            .filter(|i| !self.indices.contains(i))
            .map(|i| v[i].abs())
            .fold(0.0, f64::max)
    }
}

/// The slice of `e` through the coordinate axes `indices` (0-based, user order).
pub fn embed_slice(e: &Ellipsoid, indices: &[usize]) -> Result<SliceEmbedding> {
    if indices.len() < 2 {
        return Err(FocalError::invalid("a slice needs at least two coordinates"));
    }
    let mut seen = vec![false; e.dim()];
    for &i in indices {
        if i >= e.dim() || seen[i] {
            return Err(FocalError::invalid(format!("bad slice index {i}")));
        }
        seen[i] = true;
    }
    let alphas: Vec<f64> = indices.iter().map(|&i| e.alphas()[i]).collect();
    Ok(SliceEmbedding {
        sub: Ellipsoid::with_min_dim(&alphas, 2)?.with_tolerance(e.tolerance()),
        indices: indices.to_vec(),
        ambient_dim: e.dim(),
    })
}

/// The self-focal point `u = (x_1, 0, .., 0, x_n)` of an ellipsoid with axis
/// multiplicities `(1, n-2, 1)`: the umbilic of the 3-axial slice through the
/// largest axis, one middle axis and the smallest axis.
pub fn special_point_1_n2_1(e: &Ellipsoid) -> Result<DVector<f64>> {
    let found: Vec<usize> = e.blocks().iter().map(|b| b.multiplicity()).collect();
    let n = e.dim();
    if found != [1, n - 2, 1] {
        return Err(FocalError::InvalidMultiplicities {
            found,
            expected: format!("(1, {}, 1)", n - 2),
        });
    }
    let b = e.blocks();
    let slice = embed_slice(e, &[b[0].indices[0], b[1].indices[0], b[2].indices[0]])?;
    let umbilics = umbilic_points_2d(&slice.sub)?;
    let u = umbilics
        .points
        .iter()
        .find(|p| p.iter().all(|v| *v >= 0.0))
        .expect("one umbilic has non-negative coordinates");
    Ok(slice.embed(u))
}

/// `x + delta v` for a seeded random unit tangent `v`, projected back onto `e`.
pub fn perturb_point(e: &Ellipsoid, x: &DVector<f64>, delta: f64, seed: u64) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = e.sample_unit_tangent(x, &mut rng)?;
    e.project_to_ellipsoid(&(x + v * delta))
}

/// A product of plane rotations, each inside one equal-axis block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRotation {
    /// `(i, j, angle)`: rotate the `(x_i, x_j)` plane by `angle`.
    pub rotations: Vec<(usize, usize, f64)>,
}

impl BlockRotation {
    pub fn validate(&self, e: &Ellipsoid) -> Result<()> {
        for &(i, j, angle) in &self.rotations {
            if i >= e.dim() || j >= e.dim() || i == j {
                return Err(FocalError::InvalidIsometry(format!("bad plane ({i}, {j})")));
            }
            if e.block_of(i) != e.block_of(j) {
                return Err(FocalError::InvalidIsometry(format!(
                    "axes {i} and {j} have different lengths"
                )));
            }
            if !angle.is_finite() {
                return Err(FocalError::InvalidIsometry("non-finite angle".into()));
            }
        }
        Ok(())
    }

    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut g = DMatrix::<f64>::identity(dim, dim);
        for &(i, j, angle) in &self.rotations {
            let mut r = DMatrix::<f64>::identity(dim, dim);
            let (s, c) = angle.sin_cos();
            r[(i, i)] = c;
            r[(i, j)] = -s;
            r[(j, i)] = s;
            r[(j, j)] = c;
            g = r * g;
        }
        g
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix(v.len()) * v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometryReport {
    pub rotation: BlockRotation,
    pub base_point: DVector<f64>,
    pub image_point: DVector<f64>,
    pub verdict_base: Verdict,
    pub verdict_image: Verdict,
    pub mean_time_difference: f64,
    pub spread_difference: f64,
    pub agrees: bool,
}

/// Scans `x0` and `g x0` with directions related by `g` and compares the results.
pub fn isometry_orbit_check(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    g: &BlockRotation,
    opts: &ScanOptions,
) -> Result<IsometryReport> {
    const AGREEMENT_TOL: f64 = 1e-6;
    g.validate(e)?;
    let plan = DirectionPlan {
        total: opts.num_directions,
        random: opts.random_directions.min(opts.num_directions),
        seed: opts.seed,
    };
    let directions = tangent_directions(e, x0, &plan)?;
    let gm = g.matrix(e.dim());
    let image_point = e.project_to_ellipsoid(&(&gm * x0))?;
    let image_dirs: Vec<DVector<f64>> = directions.iter().map(|d| &gm * d).collect();
    let base = scan_directions(e, x0, directions, opts)?;
    let image = scan_directions(e, &image_point, image_dirs, opts)?;
    let mean_time_difference = (base.mean_time - image.mean_time).abs();
    let spread_difference = (base.time_spread - image.time_spread).abs();
    Ok(IsometryReport {
        rotation: g.clone(),
        base_point: x0.clone(),
        image_point,
        verdict_base: base.verdict,
        verdict_image: image.verdict,
        mean_time_difference,
        spread_difference,
        agrees: base.verdict == image.verdict && mean_time_difference < AGREEMENT_TOL,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentConstancyReport {
    pub base_point: DVector<f64>,
    pub samples: usize,
    /// Range (max - min) of each elementary symmetric function over the sampled directions.
    pub spreads: Vec<f64>,
    pub max_spread: f64,
    /// Largest `min_i |lambda_j - alpha_i|` over samples and eigenvalues.
    pub max_axis_distance: f64,
    /// `[min, max]` of each nonzero eigenvalue (ascending order) over the samples.
    pub eigenvalue_ranges: Vec<[f64; 2]>,
    pub anomalies: usize,
}

fn ranges<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone) -> Vec<[f64; 2]> {
    let m = rows.clone().map(|r| r.len()).max().unwrap_or(0);
    (0..m)
        .map(|k| {
            rows.clone()
                .filter_map(|r| r.get(k).copied())
                .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], v| [lo.min(v), hi.max(v)])
        })
        .collect()
}

pub fn moment_constancy_check(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    num_directions: usize,
    seed: u64,
) -> Result<MomentConstancyReport> {
    let directions = tangent_directions(e, x0, &DirectionPlan::new(num_directions, seed))?;
    let values = directions
        .iter()
        .map(|xi| moment_map(e, x0, xi))
        .collect::<Result<Vec<_>>>()?;
    let spreads: Vec<f64> = ranges(values.iter().map(|v| v.e.as_slice()))
        .iter()
        .map(|[lo, hi]| hi - lo)
        .collect();
    let max_axis_distance = values
        .iter()
        .flat_map(|v| v.eigenvalues.iter())
        .map(|l| e.alphas().iter().map(|a| (l - a).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(MomentConstancyReport {
        base_point: x0.clone(),
        samples: values.len(),
        max_spread: spreads.iter().copied().fold(0.0, f64::max),
        spreads,
        max_axis_distance,
        eigenvalue_ranges: ranges(values.iter().map(|v| v.eigenvalues.as_slice())),
        anomalies: values.iter().filter(|v| v.anomaly.is_some()).count(),
    })
}
