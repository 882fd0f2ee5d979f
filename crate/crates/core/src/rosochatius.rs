//! The Rosochatius flow on a 3-axial ellipsoid: geodesic motion plus the
//! potential `V = j^2 / (2 x_s^2)`, its relation to the `SO(2)`-reduced
//! geodesic flow of a `(2,1,1)` ellipsoid, and the umbilic return experiment.
//!
//! Energy is `H = |y|^2 / 2 + V(x)`.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::flow::{csv_error, integrate_geodesic, join_state, split_state, ReturnDetector, Trajectory};
use crate::focal::umbilic_points_2d;
use crate::geometry::{Ellipsoid, PhasePoint};
use crate::ode::{integrate, Control, DenseStep, IntegratorOptions, OdeSystem, Termination};
use crate::sampling::{tangent_directions, DirectionPlan};

/// Barrier distance in units of the smallest semi-axis.
pub const BARRIER_FACTOR: f64 = 1e-4;
/// Largest angular-momentum drift accepted along a reduced orbit.
pub const J_DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RosochatiusSystem {
    pub base: Ellipsoid,
    pub j: f64,
    /// Coordinate carrying the inverse-square potential (0-based).
    pub singular_index: usize,
}

impl RosochatiusSystem {
    pub fn new(base: Ellipsoid, j: f64, singular_index: usize) -> Result<Self> {
        if base.dim() != 3 {
            return Err(FocalError::UnsupportedDimension(base.dim()));
        }
        if !j.is_finite() {
            return Err(FocalError::invalid("j must be finite"));
        }
        if singular_index >= 3 {
            return Err(FocalError::invalid("singular index must be 0, 1 or 2"));
        }
        Ok(Self {
            base,
            j,
            singular_index,
        })
    }

    /// Trajectories are halted once `|x_s|` drops below this.
    pub fn barrier_tol(&self) -> f64 {
        BARRIER_FACTOR * self.base.min_semi_axis()
    }

    pub fn barrier_distance(&self, x: &DVector<f64>) -> f64 {
        x[self.singular_index].abs()
    }

    pub fn potential(&self, x: &DVector<f64>) -> f64 {
        if self.j == 0.0 {
            0.0
        } else {
            self.j * self.j / (2.0 * x[self.singular_index].powi(2))
        }
    }

    pub fn energy(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * y.norm_squared() + self.potential(x)
    }

    fn check_barrier(&self, x: &DVector<f64>, t: f64) -> Result<()> {
        let d = self.barrier_distance(x);
        if self.j != 0.0 && d < self.barrier_tol() {
            return Err(FocalError::BarrierProximity { t, distance: d });
        }
        Ok(())
    }
}

fn accel(sys: &RosochatiusSystem, x: &[f64], y: &[f64], out: &mut [f64]) {
    let a = sys.base.alphas();
    let s = sys.singular_index;
    let mut ax2 = 0.0;
    let mut ayy = 0.0;
    for i in 0..3 {
        ax2 += (x[i] / a[i]).powi(2);
        ayy += y[i] * y[i] / a[i];
    }
    // grad V = -j^2 / x_s^3 e_s
    let grad_s = if sys.j == 0.0 { 0.0 } else { -sys.j * sys.j / x[s].powi(3) };
    let mu = (x[s] / a[s] * grad_s - ayy) / ax2;
    for i in 0..3 {
        out[i] = mu * x[i] / a[i];
    }
    out[s] -= grad_s;
}

/// `(dx, dy) = (y, -grad V + mu A^{-1} x)` with `mu` chosen so that the second
/// derivative of `<A^{-1}x, x>` vanishes.
pub fn rosochatius_rhs(
    sys: &RosochatiusSystem,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    sys.base.check_on(x)?;
    sys.base.check_dim(y)?;
    sys.check_barrier(x, f64::NAN)?;
    let mut dy = DVector::zeros(3);
    accel(sys, x.as_slice(), y.as_slice(), dy.as_mut_slice());
    Ok((y.clone(), dy))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosochatiusOptions {
    pub integrator: IntegratorOptions,
    /// Rescale the speed after each step so that `H` keeps its initial value
    /// (for `j = 0` this is the geodesic speed normalization).
    pub project_energy: bool,
}

impl Default for RosochatiusOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            project_energy: true,
        }
    }
}

struct Flow<'a> {
    sys: &'a RosochatiusSystem,
    energy: f64,
    project_energy: bool,
}

impl OdeSystem for Flow<'_> {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let (x, y) = state.split_at(3);
        out[..3].copy_from_slice(y);
        accel(self.sys, x, y, &mut out[3..]);
    }

    fn project(&self, state: &mut [f64]) {
        let a = self.sys.base.alphas();
        let (x, y) = state.split_at_mut(3);
        let q: f64 = (0..3).map(|i| x[i] * x[i] / a[i]).sum();
        let s = q.sqrt();
        x.iter_mut().for_each(|v| *v /= s);
        let normal: Vec<f64> = (0..3).map(|i| x[i] / a[i]).collect();
        let nn: f64 = normal.iter().map(|v| v * v).sum();
        let c = (0..3).map(|i| y[i] * normal[i]).sum::<f64>() / nn;
        for i in 0..3 {
            y[i] -= c * normal[i];
        }
        if self.project_energy {
            let v = if self.sys.j == 0.0 {
                0.0
            } else {
                self.sys.j * self.sys.j / (2.0 * x[self.sys.singular_index].powi(2))
            };
            let kinetic = self.energy - v;
            let speed = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if kinetic > 0.0 && speed > 0.0 {
                let scale = (2.0 * kinetic).sqrt() / speed;
                y.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }

    fn halt(&self, state: &[f64]) -> Option<String> {
        let d = state[self.sys.singular_index].abs();
        (self.sys.j != 0.0 && d < self.sys.barrier_tol())
            .then(|| format!("barrier proximity |x_s| = {d:.3e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosochatiusSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub energy: f64,
    pub barrier_distance: f64,
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedTrajectory {
    pub alphas: Vec<f64>,
    pub j: f64,
    pub singular_index: usize,
    pub samples: Vec<RosochatiusSample>,
    /// Dense steps; empty for curves obtained by reduction.
    pub steps: Vec<DenseStep>,
}

impl ReducedTrajectory {
    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn initial_energy(&self) -> f64 {
        self.samples[0].energy
    }

    /// Largest `|H - H(0)| / |H(0)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.initial_energy();
        let scale = h0.abs().max(f64::MIN_POSITIVE);
        self.samples
            .iter()
            .map(|s| (s.energy - h0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn min_barrier_distance(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.barrier_distance)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.constraint_residual)
            .fold(0.0, f64::max)
    }

    /// `(x, y)` at time `t` from the dense output.
    pub fn at(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.steps.is_empty() || !(0.0..=self.t_end()).contains(&t) {
            return Err(FocalError::invalid(format!(
                "no dense output at t = {t} (range [0, {}])",
                self.t_end()
            )));
        }
        if t == 0.0 {
            return Ok((self.samples[0].x.clone(), self.samples[0].y.clone()));
        }
        let k = self.steps.partition_point(|s| s.t1() < t).min(self.steps.len() - 1);
        Ok(split_state(&self.steps[k].eval(t), 3))
    }

    /// CSV with columns `t, x_1..x_3, y_1..y_3, energy, barrier_distance, constraint_residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "x_1",
            "x_2",
            "x_3",
            "y_1",
            "y_2",
            "y_3",
            "energy",
            "barrier_distance",
            "constraint_residual",
        ])
        .map_err(csv_error)?;
        for s in &self.samples {
            let mut row = vec![format!("{:.17e}", s.t)];
            row.extend(s.x.iter().chain(s.y.iter()).map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", s.energy));
            row.push(format!("{:.17e}", s.barrier_distance));
            row.push(format!("{:.6e}", s.constraint_residual));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample(sys: &RosochatiusSystem, t: f64, x: DVector<f64>, y: DVector<f64>) -> RosochatiusSample {
    RosochatiusSample {
        t,
        energy: sys.energy(&x, &y),
        barrier_distance: sys.barrier_distance(&x),
        constraint_residual: sys.base.constraint_residual(&x),
        x,
        y,
    }
}

fn check_initial(sys: &RosochatiusSystem, x0: &DVector<f64>, y0: &DVector<f64>) -> Result<()> {
    sys.base.check_on(x0)?;
    sys.base.check_dim(y0)?;
    let n = sys.base.unit_normal(x0)?;
    let tol = sys.base.tolerance() * y0.norm().max(1.0);
    if n.dot(y0).abs() > tol {
        return Err(FocalError::invalid("initial velocity is not tangent to the ellipsoid"));
    }
    sys.check_barrier(x0, 0.0)
}

/// Integrates the Rosochatius flow from `(x0, y0)` up to `opts.integrator.t_max`.
/// Reaching the barrier is an error carrying the time and distance.
pub fn integrate_rosochatius(
    sys: &RosochatiusSystem,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    opts: &RosochatiusOptions,
) -> Result<ReducedTrajectory> {
    opts.integrator.validate()?;
    check_initial(sys, x0, y0)?;
    let flow = Flow {
        sys,
        energy: sys.energy(x0, y0),
        project_energy: opts.project_energy,
    };
    let mut traj = ReducedTrajectory {
        alphas: sys.base.alphas().to_vec(),
        j: sys.j,
        singular_index: sys.singular_index,
        samples: vec![sample(sys, 0.0, x0.clone(), y0.clone())],
        steps: Vec::new(),
    };
    let summary = integrate(&flow, &join_state(x0, y0), &opts.integrator, |step, state| {
        let (x, y) = split_state(state, 3);
        traj.samples.push(sample(sys, step.t1(), x, y));
        traj.steps.push(step.clone());
        Control::Continue
    })
    .map_err(|f| FocalError::IntegrationFailure {
        t: f.t,
        reason: f.reason,
        partial: None,
    })?;
    if let Termination::Halted(_) = summary.termination {
        // The step that crossed the barrier was discarded; this is the last accepted state.
        let x = DVector::from_column_slice(&summary.state[..3]);
        let distance = sys.barrier_distance(&x);
        return Err(FocalError::BarrierProximity {
            t: summary.t_end,
            distance,
        });
    }
    Ok(traj)
}

/// Coordinates of a `(2,1,1)` ellipsoid and the 3-axial base it reduces to.
#[derive(Debug, Clone)]
pub struct Reduction211 {
    pub base: Ellipsoid,
    /// The doubled block `(x_a, x_b)`, collapsed to `r` = base coordinate 0.
    pub pair: (usize, usize),
    /// The simple axes, mapped to base coordinates 1 and 2.
    pub others: (usize, usize),
}

impl Reduction211 {
    pub fn new(e4: &Ellipsoid) -> Result<Self> {
        let found = e4.multiplicities();
        if e4.dim() != 4 || found != [2, 1, 1] {
            return Err(FocalError::InvalidMultiplicities {
                found,
                expected: "(2, 1, 1) with the doubled axis largest".into(),
            });
        }
        let b = e4.blocks();
        let base = Ellipsoid::new(&[b[0].alpha, b[1].alpha, b[2].alpha])?.with_tolerance(e4.tolerance());
        Ok(Self {
            base,
            pair: (b[0].indices[0], b[0].indices[1]),
            others: (b[1].indices[0], b[2].indices[0]),
        })
    }

    /// `J = x_a y_b - x_b y_a`.
    pub fn angular_momentum(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (a, b) = self.pair;
        x[a] * y[b] - x[b] * y[a]
    }

    /// `(J, x_reduced, y_reduced)` with `r = |(x_a, x_b)|` first.
    pub fn reduce(&self, x: &DVector<f64>, y: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let (a, b) = self.pair;
        let (c, d) = self.others;
        let r = x[a].hypot(x[b]);
        let rdot = if r > 0.0 { (x[a] * y[a] + x[b] * y[b]) / r } else { 0.0 };
        (
            self.angular_momentum(x, y),
            DVector::from_vec(vec![r, x[c], x[d]]),
            DVector::from_vec(vec![rdot, y[c], y[d]]),
        )
    }

    /// A state of the `(2,1,1)` ellipsoid over `(xr, yr)` with angular momentum
    /// `j` and polar angle `phi` in the doubled plane. Needs `xr[0] > 0`.
    pub fn lift(&self, xr: &DVector<f64>, yr: &DVector<f64>, j: f64, phi: f64) -> (DVector<f64>, DVector<f64>) {
        let (a, b) = self.pair;
        let (c, d) = self.others;
        let (r, rdot) = (xr[0], yr[0]);
        let omega = j / (r * r);
        let (s, co) = phi.sin_cos();
        let mut x = DVector::zeros(4);
        let mut y = DVector::zeros(4);
        x[a] = r * co;
        x[b] = r * s;
        x[c] = xr[1];
        x[d] = xr[2];
        y[a] = rdot * co - r * omega * s;
        y[b] = rdot * s + r * omega * co;
        y[c] = yr[1];
        y[d] = yr[2];
        (x, y)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedOrbit {
    pub trajectory: ReducedTrajectory,
    /// Largest `|J(t) - J(0)|`.
    pub j_drift: f64,
    /// Base coordinate `k` comes from the listed coordinates of the `(2,1,1)` ellipsoid.
    pub coordinate_map: Vec<Vec<usize>>,
}

/// Reduces a geodesic of a `(2,1,1)` ellipsoid to a Rosochatius curve on the
/// 3-axial base, with `j` the conserved angular momentum in the doubled plane.
pub fn reduce_211_orbit(e4: &Ellipsoid, traj: &Trajectory) -> Result<ReducedOrbit> {
    let red = Reduction211::new(e4)?;
    let first = &traj.samples[0].point;
    let (j0, _, _) = red.reduce(&first.x, &first.xi);
    let sys = RosochatiusSystem::new(red.base.clone(), j0, 0)?;
    let mut j_drift: f64 = 0.0;
    let samples = traj
        .samples
        .iter()
        .map(|s| {
            let (j, x, y) = red.reduce(&s.point.x, &s.point.xi);
            j_drift = j_drift.max((j - j0).abs());
            sample(&sys, s.t, x, y)
        })
        .collect();
    if j_drift > J_DRIFT_TOL {
        return Err(FocalError::ReductionInconsistency(j_drift));
    }
    Ok(ReducedOrbit {
        trajectory: ReducedTrajectory {
            alphas: red.base.alphas().to_vec(),
            j: j0,
            singular_index: 0,
            samples,
            steps: Vec::new(),
        },
        j_drift,
        coordinate_map: vec![vec![red.pair.0, red.pair.1], vec![red.others.0], vec![red.others.1]],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionConsistency {
    pub j: f64,
    pub j_drift: f64,
    /// Largest `|x_reduced(t) - x_direct(t)|` over the geodesic's accepted steps.
    pub max_position_distance: f64,
    pub max_energy_drift: f64,
    pub samples: usize,
}

/// Integrates the geodesic of `e4` through `p0`, reduces it, integrates the
/// Rosochatius flow from the reduced initial data and compares the two curves.
pub fn reduction_consistency(
    e4: &Ellipsoid,
    p0: &PhasePoint,
    opts: &RosochatiusOptions,
) -> Result<ReductionConsistency> {
    let full = integrate_geodesic(e4, p0, &opts.integrator)?;
    let orbit = reduce_211_orbit(e4, &full)?;
    let red = &orbit.trajectory;
    let sys = RosochatiusSystem::new(Reduction211::new(e4)?.base, red.j, 0)?;
    let direct = integrate_rosochatius(&sys, &red.samples[0].x, &red.samples[0].y, opts)?;
    let mut max_position_distance: f64 = 0.0;
    for s in &red.samples {
        let t = s.t.min(direct.t_end());
        let (x, _) = direct.at(t)?;
        max_position_distance = max_position_distance.max((&x - &s.x).norm());
    }
    Ok(ReductionConsistency {
        j: red.j,
        j_drift: orbit.j_drift,
        max_position_distance,
        max_energy_drift: red.max_energy_drift().max(direct.max_energy_drift()),
        samples: red.samples.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub num_directions: usize,
    pub seed: u64,
    pub singular_index: usize,
    pub return_radius: f64,
    pub integrator: IntegratorOptions,
}

impl ExperimentOptions {
    /// Scan defaults of the focal module for the base ellipsoid.
    pub fn for_ellipsoid(e: &Ellipsoid, num_directions: usize, seed: u64) -> Self {
        Self {
            num_directions,
            seed,
            singular_index: 0,
            return_radius: crate::focal::RETURN_RADIUS_FACTOR * e.geometric_mean_semi_axis(),
            integrator: IntegratorOptions::default()
                .with_t_max(4.0 * std::f64::consts::PI * e.max_semi_axis()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub j: f64,
    pub direction_index: usize,
    pub return_time: Option<f64>,
    pub miss_distance: Option<f64>,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub j: f64,
    pub energy: f64,
    pub directions: usize,
    pub returned: usize,
    pub halted: usize,
    pub mean_time: Option<f64>,
    pub time_spread: Option<f64>,
    pub relative_spread: Option<f64>,
    pub max_miss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RosochatiusExperiment {
    pub alphas: Vec<f64>,
    pub umbilic: DVector<f64>,
    pub options: ExperimentOptions,
    pub rows: Vec<ExperimentRow>,
    pub records: Vec<ExperimentRecord>,
}

impl RosochatiusExperiment {
    /// CSV with columns `j, direction_index, return_time, miss_distance, halted_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "direction_index", "return_time", "miss_distance", "halted_flag"])
            .map_err(csv_error)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.17e}"));
        for r in &self.records {
            w.write_record([
                format!("{}", r.j),
                r.direction_index.to_string(),
                opt(r.return_time),
                opt(r.miss_distance),
                u8::from(r.halted).to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_direction(
    sys: &RosochatiusSystem,
    u: &DVector<f64>,
    xi: &DVector<f64>,
    opts: &ExperimentOptions,
    index: usize,
) -> Result<ExperimentRecord> {
    let flow = Flow {
        sys,
        energy: sys.energy(u, xi),
        project_energy: true,
    };
    let mut detector = ReturnDetector::new(&sys.base, u, opts.return_radius, true)?;
    let summary = integrate(&flow, &join_state(u, xi), &opts.integrator, |step, _| detector.observe(step))
        .map_err(|f| FocalError::IntegrationFailure {
            t: f.t,
            reason: f.reason,
            partial: None,
        })?;
    let event = detector.events.first();
    Ok(ExperimentRecord {
        j: sys.j,
        direction_index: index,
        return_time: event.map(|e| e.return_time),
        miss_distance: event.map(|e| e.miss_distance),
        halted: matches!(summary.termination, Termination::Halted(_)),
    })
}

/// For each `j`, launches unit-speed directions from the umbilic (so
/// `H = 1/2 + j^2 / (2 x_s^2)`) and records first returns to it. Reporting only.
pub fn umbilic_return_experiment(
    alphas3: &[f64],
    j_grid: &[f64],
    opts: &ExperimentOptions,
) -> Result<RosochatiusExperiment> {
    let base = Ellipsoid::new(alphas3)?;
    if j_grid.is_empty() || j_grid.iter().any(|j| !j.is_finite()) {
        return Err(FocalError::invalid("j grid must be non-empty and finite"));
    }
    opts.integrator.validate()?;
    let umbilics = umbilic_points_2d(&base)?;
    let u = umbilics
        .points
        .into_iter()
        .find(|p| p.iter().all(|v| *v >= 0.0))
        .expect("one umbilic has non-negative coordinates");
    let systems = j_grid
        .iter()
        .map(|&j| RosochatiusSystem::new(base.clone(), j, opts.singular_index))
        .collect::<Result<Vec<_>>>()?;
    if let Some(sys) = systems.iter().find(|s| s.j != 0.0) {
        if sys.barrier_distance(&u) < sys.barrier_tol() {
            return Err(FocalError::invalid("the umbilic lies on the barrier of the chosen coordinate"));
        }
    }
    let directions = tangent_directions(&base, &u, &DirectionPlan::new(opts.num_directions, opts.seed))?;
    let jobs: Vec<(usize, usize)> = (0..systems.len())
        .flat_map(|r| (0..directions.len()).map(move |d| (r, d)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(r, d)| run_direction(&systems[r], &u, &directions[d], opts, d))
        .collect::<Result<Vec<_>>>()?;

    let rows = systems
        .iter()
        .zip(records.chunks(directions.len()))
        .map(|(sys, recs)| {
            let times: Vec<f64> = recs.iter().filter_map(|r| r.return_time).collect();
            let stats = (!times.is_empty()).then(|| {
                let mean = times.iter().sum::<f64>() / times.len() as f64;
                let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (mean, hi - lo)
            });
            ExperimentRow {
                j: sys.j,
                energy: sys.energy(&u, &directions[0]),
                directions: recs.len(),
                returned: times.len(),
                halted: recs.iter().filter(|r| r.halted).count(),
                mean_time: stats.map(|s| s.0),
                time_spread: stats.map(|s| s.1),
                relative_spread: stats.map(|s| s.1 / s.0),
                max_miss: recs.iter().filter_map(|r| r.miss_distance).reduce(f64::max),
            }
        })
        .collect();
    Ok(RosochatiusExperiment {
        alphas: alphas3.to_vec(),
        umbilic: u,
        options: opts.clone(),
        rows,
        records,
    })
}
