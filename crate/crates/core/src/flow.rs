//! Geodesic flow in ambient coordinates: `x'' = -nu A^{-1} x` with
//! `nu = <A^{-1} y, y> / |A^{-1} x|^2`, integrated with Dormand-Prince and
//! radial/tangent re-projection, plus first-return event detection.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::geometry::{Ellipsoid, PhasePoint};
use crate::lax::{lax_matrix, lax_spectrum, lax_velocity};
use crate::ode::{brent_root, integrate, Control, DenseStep, IntegratorOptions, OdeSystem, Termination};

/// Events refined to this accuracy in `t`.
pub const EVENT_TIME_TOL: f64 = 1e-12;
/// Events closer than this in time are merged, keeping the smaller miss.
pub const EVENT_MERGE_WINDOW: f64 = 1e-6;

pub fn geodesic_nu(e: &Ellipsoid, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ax = e.inv_apply(x);
    e.inv_apply(y).dot(y) / ax.norm_squared()
}

/// `(dx, dy) = (y, -nu A^{-1} x)`.
pub fn geodesic_rhs(e: &Ellipsoid, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let nu = geodesic_nu(e, x, y);
    (y.clone(), e.inv_apply(x) * (-nu))
}

/// The geodesic vector field on the state `[x, y]`.
pub struct GeodesicSystem<'a> {
    e: &'a Ellipsoid,
    speed: f64,
}

impl<'a> GeodesicSystem<'a> {
    pub fn new(e: &'a Ellipsoid, speed: f64) -> Self {
        Self { e, speed }
    }
}

impl OdeSystem for GeodesicSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.e.dim()
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let n = self.e.dim();
        let a = self.e.alphas();
        let (x, y) = state.split_at(n);
        let mut ax2 = 0.0;
        let mut ayy = 0.0;
        for i in 0..n {
            ax2 += (x[i] / a[i]).powi(2);
            ayy += y[i] * y[i] / a[i];
        }
        let nu = ayy / ax2;
        for i in 0..n {
            out[i] = y[i];
            out[n + i] = -nu * x[i] / a[i];
        }
    }

    fn project(&self, state: &mut [f64]) {
        let n = self.e.dim();
        let a = self.e.alphas();
        let (x, y) = state.split_at_mut(n);
        let q: f64 = (0..n).map(|i| x[i] * x[i] / a[i]).sum();
        let s = q.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        let normal: Vec<f64> = (0..n).map(|i| x[i] / a[i]).collect();
        let nn: f64 = normal.iter().map(|v| v * v).sum();
        let c = (0..n).map(|i| y[i] * normal[i]).sum::<f64>() / nn;
        for i in 0..n {
            y[i] -= c * normal[i];
        }
        let speed = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if speed > 0.0 {
            y.iter_mut().for_each(|v| *v *= self.speed / speed);
        }
    }
}

pub(crate) fn split_state(state: &[f64], n: usize) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_column_slice(&state[..n]),
        DVector::from_column_slice(&state[n..]),
    )
}

pub(crate) fn join_state(x: &DVector<f64>, y: &DVector<f64>) -> Vec<f64> {
    x.iter().chain(y.iter()).copied().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub point: PhasePoint,
    pub constraint_residual: f64,
    pub speed_residual: f64,
    /// Largest `|lambda_j(t) - lambda_j(0)| / |lambda_j(0)|` over the nonzero Lax eigenvalues.
    pub lax_drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub steps: Vec<DenseStep>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn final_point(&self) -> &PhasePoint {
        &self.samples.last().expect("trajectory has its initial sample").point
    }

    /// State at time `t` from the dense output (unprojected).
    pub fn at(&self, t: f64) -> Result<PhasePoint> {
        if !(0.0..=self.t_end()).contains(&t) {
            return Err(FocalError::invalid(format!(
                "t = {t} outside the integrated range [0, {}]",
                self.t_end()
            )));
        }
        if t == 0.0 {
            return Ok(self.samples[0].point.clone());
        }
        let k = self.steps.partition_point(|s| s.t1() < t).min(self.steps.len() - 1);
        let n = self.samples[0].point.x.len();
        let (x, xi) = split_state(&self.steps[k].eval(t), n);
        Ok(PhasePoint { x, xi })
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.constraint_residual).fold(0.0, f64::max)
    }

    pub fn max_speed_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.speed_residual).fold(0.0, f64::max)
    }

    pub fn max_lax_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.lax_drift).fold(0.0, f64::max)
    }

    /// CSV with columns `t, x_1..x_n, xi_1..xi_n, constraint_residual, speed_residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.point.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("xi_{i}")));
        header.push("constraint_residual".into());
        header.push("speed_residual".into());
        w.write_record(&header).map_err(csv_error)?;
        for s in &self.samples {
            let mut row = vec![format!("{:.17e}", s.t)];
            row.extend(s.point.x.iter().map(|v| format!("{v:.17e}")));
            row.extend(s.point.xi.iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.6e}", s.constraint_residual));
            row.push(format!("{:.6e}", s.speed_residual));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> FocalError {
    FocalError::Io(std::io::Error::other(e))
}

struct Diagnostics<'a> {
    e: &'a Ellipsoid,
    initial: Vec<f64>,
}

impl<'a> Diagnostics<'a> {
    fn new(e: &'a Ellipsoid, p: &PhasePoint) -> Result<Self> {
        let initial = lax_spectrum(e, &p.x, &p.xi)?.nonzero;
        Ok(Self { e, initial })
    }

    fn sample(&self, t: f64, x: DVector<f64>, xi: DVector<f64>) -> TrajectorySample {
        let constraint_residual = self.e.constraint_residual(&x);
        let speed_residual = (xi.norm() - 1.0).abs();
        let lax_drift = match lax_spectrum(self.e, &x, &xi) {
            Ok(s) if s.nonzero.len() == self.initial.len() => {
                s.nonzero
                    .iter()
                    .zip(&self.initial)
                    .map(|(a, b)| (a - b).abs() / b.abs())
                    .fold(0.0, f64::max)
            }
            _ => f64::INFINITY,
        };
        TrajectorySample {
            t,
            point: PhasePoint { x, xi },
            constraint_residual,
            speed_residual,
            lax_drift,
        }
    }
}

/// Integrates the unit-speed geodesic through `p0` up to `opts.t_max`, recording
/// every accepted step with its diagnostics.
pub fn integrate_geodesic(e: &Ellipsoid, p0: &PhasePoint, opts: &IntegratorOptions) -> Result<Trajectory> {
    opts.validate()?;
    let p0 = PhasePoint::new(e, p0.x.clone(), p0.xi.clone())?;
    let n = e.dim();
    let diag = Diagnostics::new(e, &p0)?;
    let sys = GeodesicSystem::new(e, 1.0);
    let mut traj = Trajectory {
        samples: vec![diag.sample(0.0, p0.x.clone(), p0.xi.clone())],
        steps: Vec::new(),
        accepted: 0,
        rejected: 0,
    };
    let result = integrate(&sys, &join_state(&p0.x, &p0.xi), opts, |step, state| {
        let (x, y) = split_state(state, n);
        traj.samples.push(diag.sample(step.t1(), x, y));
        traj.steps.push(step.clone());
        Control::Continue
    });
    match result {
        Ok(summary) => {
            traj.accepted = summary.accepted;
            traj.rejected = summary.rejected;
            Ok(traj)
        }
        Err(fail) => Err(FocalError::IntegrationFailure {
            t: fail.t,
            reason: fail.reason,
            partial: Some(Box::new(traj)),
        }),
    }
}

/// `G^t(x0, xi0)`; negative `t` flows backwards.
pub fn exp_map(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    xi0: &DVector<f64>,
    t: f64,
    opts: &IntegratorOptions,
) -> Result<PhasePoint> {
    let p0 = PhasePoint::new(e, x0.clone(), xi0.clone())?;
    if t == 0.0 {
        return Ok(p0);
    }
    if !t.is_finite() {
        return Err(FocalError::invalid("exp_map needs a finite time"));
    }
    let sign = t.signum();
    let opts = opts.with_t_max(t.abs());
    opts.validate()?;
    let sys = GeodesicSystem::new(e, 1.0);
    let start = join_state(&p0.x, &(&p0.xi * sign));
    let summary = integrate(&sys, &start, &opts, |_, _| Control::Continue).map_err(|f| {
        FocalError::IntegrationFailure {
            t: f.t * sign,
            reason: f.reason,
            partial: None,
        }
    })?;
    let (x, y) = split_state(&summary.state, e.dim());
    Ok(PhasePoint { x, xi: y * sign })
}

/// `||dL/dt - [B, L] / |A^{-1}x|^2||_F` at time `t` of `traj`, with `dL/dt` from
/// central differences of the dense output with step `h`.
pub fn lax_equation_residual(e: &Ellipsoid, traj: &Trajectory, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && t - h >= 0.0 && t + h <= traj.t_end()) {
        return Err(FocalError::invalid("central difference stencil leaves the trajectory"));
    }
    let plus = traj.at(t + h)?;
    let minus = traj.at(t - h)?;
    let mid = traj.at(t)?;
    let fd = (lax_matrix(e, &plus.x, &plus.xi).0 - lax_matrix(e, &minus.x, &minus.xi).0) / (2.0 * h);
    Ok((fd - lax_velocity(e, &mid.x, &mid.xi)).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEvent {
    pub return_time: f64,
    /// Velocity at the event, projected to `T_{x0}` and normalized.
    pub terminal_direction: DVector<f64>,
    pub miss_distance: f64,
}

/// Local minima of `|x(t) - x0|^2` seen on dense steps: sign changes from
/// negative to positive of `g(t) = <x(t) - x0, y(t)>`, polished with Brent.
pub struct ReturnDetector {
    x0: DVector<f64>,
    normal0: DVector<f64>,
    radius: f64,
    stop_at_first: bool,
    pub events: Vec<ReturnEvent>,
    /// Smallest-miss local minimum of any size, for diagnostics.
    pub closest: Option<ReturnEvent>,
    buf: Vec<f64>,
}

impl ReturnDetector {
    pub fn new(e: &Ellipsoid, x0: &DVector<f64>, radius: f64, stop_at_first: bool) -> Result<Self> {
        Ok(Self {
            x0: x0.clone(),
            normal0: e.unit_normal(x0)?,
            radius,
            stop_at_first,
            events: Vec::new(),
            closest: None,
            buf: vec![0.0; 2 * e.dim()],
        })
    }

    fn g(&mut self, step: &DenseStep, t: f64) -> f64 {
        step.eval_into(t, &mut self.buf);
        let n = self.x0.len();
        (0..n).map(|i| (self.buf[i] - self.x0[i]) * self.buf[n + i]).sum()
    }

    /// Feed one accepted step; returns `Control::Stop` once a qualifying event is
    /// found and the detector was asked to stop at the first one.
    pub fn observe(&mut self, step: &DenseStep) -> Control {
        const FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut prev_t = step.t0;
        let mut prev_g = self.g(step, prev_t);
        for &f in &FRACTIONS[1..] {
            let t = step.t0 + f * step.h;
            let g = self.g(step, t);
            if prev_g < 0.0 && g >= 0.0 {
                if let Some(c) = self.refine(step, prev_t, t, prev_g, g) {
                    if self.stop_at_first && c == Control::Stop {
                        return Control::Stop;
                    }
                }
            }
            prev_t = t;
            prev_g = g;
        }
        Control::Continue
    }

    fn refine(&mut self, step: &DenseStep, a: f64, b: f64, ga: f64, gb: f64) -> Option<Control> {
        let t_star = if gb == 0.0 {
            b
        } else {
            let mut buf = std::mem::take(&mut self.buf);
            let x0 = self.x0.clone();
            let n = x0.len();
            let root = brent_root(
                |t| {
                    step.eval_into(t, &mut buf);
                    (0..n).map(|i| (buf[i] - x0[i]) * buf[n + i]).sum()
                },
                a,
                b,
                ga,
                gb,
                EVENT_TIME_TOL,
            );
            self.buf = buf;
            root.ok()?
        };
        let state = step.eval(t_star);
        let n = self.x0.len();
        let (x, y) = split_state(&state, n);
        let miss = (&x - &self.x0).norm();
        let projected = &y - &self.normal0 * y.dot(&self.normal0);
        let norm = projected.norm();
        let terminal_direction = if norm > 0.0 { projected / norm } else { projected };
        let event = ReturnEvent {
            return_time: t_star,
            terminal_direction,
            miss_distance: miss,
        };
        if self.closest.as_ref().is_none_or(|c| miss < c.miss_distance) {
            self.closest = Some(event.clone());
        }
        if miss >= self.radius {
            return Some(Control::Continue);
        }
        match self.events.last_mut() {
            Some(last) if (t_star - last.return_time).abs() < EVENT_MERGE_WINDOW => {
                if miss < last.miss_distance {
                    *last = event;
                }
            }
            _ => self.events.push(event),
        }
        Some(Control::Stop)
    }
}

/// Outcome of a single-direction return search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnSearch {
    pub events: Vec<ReturnEvent>,
    pub closest: Option<ReturnEvent>,
    pub t_end: f64,
}

pub fn search_returns(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    xi0: &DVector<f64>,
    opts: &IntegratorOptions,
    return_radius: f64,
    stop_at_first: bool,
) -> Result<ReturnSearch> {
    opts.validate()?;
    if !(return_radius > 0.0) {
        return Err(FocalError::invalid("return_radius must be positive"));
    }
    let p0 = PhasePoint::new(e, x0.clone(), xi0.clone())?;
    let sys = GeodesicSystem::new(e, 1.0);
    let mut detector = ReturnDetector::new(e, &p0.x, return_radius, stop_at_first)?;
    let summary = integrate(&sys, &join_state(&p0.x, &p0.xi), opts, |step, _| detector.observe(step))
        .map_err(|f| FocalError::IntegrationFailure {
            t: f.t,
            reason: f.reason,
            partial: None,
        })?;
    if let Termination::Halted(reason) = summary.termination {
        return Err(FocalError::IntegrationFailure {
            t: summary.t_end,
            reason,
            partial: None,
        });
    }
    Ok(ReturnSearch {
        events: detector.events,
        closest: detector.closest,
        t_end: summary.t_end,
    })
}

/// Every return to `x0` within `return_radius` before `opts.t_max`, ordered by time.
pub fn first_return(
    e: &Ellipsoid,
    x0: &DVector<f64>,
    xi0: &DVector<f64>,
    opts: &IntegratorOptions,
    return_radius: f64,
) -> Result<Vec<ReturnEvent>> {
    search_returns(e, x0, xi0, opts, return_radius, false).map(|s| s.events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vector;
    use std::f64::consts::{PI, TAU};

    fn sphere() -> Ellipsoid {
        Ellipsoid::new(&[1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let s = sphere();
        let (dx, dy) = geodesic_rhs(&s, &vector(&[1.0, 0.0, 0.0]), &vector(&[0.0, 1.0, 0.0]));
        assert_eq!(dx, vector(&[0.0, 1.0, 0.0]));
        assert!((dy - vector(&[-1.0, 0.0, 0.0])).norm() < 1e-15);

        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let x = vector(&[3f64.sqrt(), 0.0, 0.0]);
        let y = vector(&[0.0, 1.0, 0.0]);
        assert!((geodesic_nu(&e, &x, &y) - 1.5).abs() < 1e-15);
        let (_, dy) = geodesic_rhs(&e, &x, &y);
        assert!((dy - vector(&[-(3f64.sqrt()) / 2.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn acceleration_keeps_speed_and_constraint() {
        // d/dt |y|^2 = 2<dy, y> = 0 since dy is normal; d^2/dt^2 of the constraint vanishes.
        let e = Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        for seed in 0..10 {
            let p = e.random_phase_point(seed);
            let (_, dy) = geodesic_rhs(&e, &p.x, &p.xi);
            assert!(dy.dot(&p.xi).abs() < 1e-14);
            let second = 2.0 * e.inv_apply(&p.xi).dot(&p.xi) + 2.0 * e.inv_apply(&p.x).dot(&dy);
            assert!(second.abs() < 1e-13);
        }
    }

    #[test]
    fn great_circle_closes() {
        let s = sphere();
        let p0 = PhasePoint::new(&s, vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 1.0, 0.0])).unwrap();
        let traj = integrate_geodesic(&s, &p0, &IntegratorOptions::default().with_t_max(TAU)).unwrap();
        let end = traj.final_point();
        assert!((&end.x - &p0.x).norm() < 1e-8);
        assert!((&end.xi - &p0.xi).norm() < 1e-8);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn long_run_diagnostics() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let p0 = e.random_phase_point(4);
        let traj = integrate_geodesic(&e, &p0, &IntegratorOptions::default()).unwrap();
        assert!((traj.t_end() - 50.0).abs() < 1e-12);
        assert!(traj.max_constraint_residual() < 1e-8);
        assert!(traj.max_speed_residual() < 1e-8);
        assert!(traj.max_lax_drift() < 1e-8, "drift {}", traj.max_lax_drift());
    }

    #[test]
    fn slice_is_totally_geodesic() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let x = vector(&[1.0, 0.0, (1.0 - 1.0 / 3.0f64).sqrt()]);
        let xi = e.project_to_tangent(&x, &vector(&[1.0, 0.0, 0.0])).unwrap().normalize();
        let p0 = PhasePoint::new(&e, x, xi).unwrap();
        let traj = integrate_geodesic(&e, &p0, &IntegratorOptions::default().with_t_max(20.0)).unwrap();
        let worst = traj.samples.iter().map(|s| s.point.x[1].abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn exp_map_properties() {
        let s = sphere();
        let opts = IntegratorOptions::default();
        let x0 = vector(&[0.0, 0.0, 1.0]);
        let xi0 = vector(&[0.6, 0.8, 0.0]);
        let p = exp_map(&s, &x0, &xi0, 0.0, &opts).unwrap();
        assert_eq!(p.x, x0);
        let p = exp_map(&s, &x0, &xi0, PI, &opts).unwrap();
        assert!((&p.x + &x0).norm() < 1e-9 && (&p.xi + &xi0).norm() < 1e-9);

        let e = Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let q = e.random_phase_point(2);
        let a = exp_map(&e, &q.x, &q.xi, 3.7, &opts).unwrap();
        let b = exp_map(&e, &a.x, &a.xi, 2.1, &opts).unwrap();
        let c = exp_map(&e, &q.x, &q.xi, 5.8, &opts).unwrap();
        assert!((&b.x - &c.x).norm() < 1e-9 && (&b.xi - &c.xi).norm() < 1e-9);

        let back = exp_map(&e, &c.x, &c.xi, -5.8, &opts).unwrap();
        assert!((&back.x - &q.x).norm() < 1e-7);
        let reversed = exp_map(&e, &c.x, &(-&c.xi), 5.8, &opts).unwrap();
        assert!((&reversed.x - &q.x).norm() < 1e-7 && (&reversed.xi + &q.xi).norm() < 1e-7);
    }

    #[test]
    fn dense_output_matches_exp_map() {
        let e = Ellipsoid::new(&[3.0, 2.0, 1.0]).unwrap();
        let p0 = e.random_phase_point(9);
        let opts = IntegratorOptions::default().with_t_max(10.0);
        let traj = integrate_geodesic(&e, &p0, &opts).unwrap();
        let mid = traj.at(6.123).unwrap();
        let direct = exp_map(&e, &p0.x, &p0.xi, 6.123, &opts).unwrap();
        assert!((&mid.x - &direct.x).norm() < 1e-9);
        assert!(traj.at(11.0).is_err());
    }

    #[test]
    fn sphere_returns_once_at_two_pi() {
        let s = sphere();
        let x0 = vector(&[0.0, 1.0, 0.0]);
        let xi0 = vector(&[0.0, 0.0, 1.0]);
        let opts = IntegratorOptions::default().with_t_max(8.0);
        let events = first_return(&s, &x0, &xi0, &opts, 1e-3).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].return_time - TAU).abs() < 1e-8);
        assert!(events[0].miss_distance < 1e-8);
        assert!((&events[0].terminal_direction - &xi0).norm() < 1e-8);
    }

    #[test]
    fn no_return_is_empty() {
        let s = sphere();
        let opts = IntegratorOptions::default().with_t_max(3.0);
        let x0 = vector(&[1.0, 0.0, 0.0]);
        let events = first_return(&s, &x0, &vector(&[0.0, 1.0, 0.0]), &opts, 1e-3).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn csv_has_expected_columns() {
        let s = sphere();
        let p0 = PhasePoint::new(&s, vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 1.0, 0.0])).unwrap();
        let traj = integrate_geodesic(&s, &p0, &IntegratorOptions::default().with_t_max(1.0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,x_1,x_2,x_3,xi_1,xi_2,xi_3,constraint_residual,speed_residual");
        assert_eq!(text.lines().count(), traj.samples.len() + 1);
    }

    #[test]
    fn lax_equation_holds_along_a_geodesic() {
        let e = Ellipsoid::new(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        let traj = integrate_geodesic(&e, &e.random_phase_point(6), &IntegratorOptions::default().with_t_max(10.0)).unwrap();
        for t in [1.0, 4.5, 9.0] {
            assert!(lax_equation_residual(&e, &traj, t, 1e-4).unwrap() < 1e-6);
        }
        assert!(traj.max_lax_drift() < 1e-8);
    }
}
