//! The acceptance battery: fourteen numbered checks, each producing measured
//! values against fixed thresholds.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FocalError, Result};
use crate::flow::{integrate_geodesic, lax_equation_residual};
use crate::focal::{
    embed_slice, fixed_directions, isometry_orbit_check, moment_constancy_check, perturb_point,
    self_focality_scan, special_point_1_n2_1, twistedness_report, umbilic_points_2d, BlockRotation,
    ScanOptions, Verdict,
};
use crate::geometry::{vector, Ellipsoid};
use crate::lax::{
    admissible_basis, confocal_tangency_residual, contact_point_and_normal, eigenvalue_variation,
    eigenvalue_variation_fd, ellipsoidal_coordinates, lambda_jacobian, lax_spectrum, phi_identity_rhs,
    phi_z, smallest_singular_value,
};
use crate::ode::IntegratorOptions;
use crate::rosochatius::{
    integrate_rosochatius, reduction_consistency, umbilic_return_experiment, ExperimentOptions,
    RosochatiusOptions, RosochatiusSystem,
};
use crate::sampling::{tangent_directions, DirectionPlan};

pub const DEFAULT_J_GRID: [f64; 7] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

/// `(id, name, tags)`.
pub const CRITERIA: [(u32, &str, &[&str]); 14] = [
    (1, "sphere baseline", &["flow", "focal"]),
    (2, "umbilic self-focality", &["focal"]),
    (3, "return-map structure at the umbilic", &["focal"]),
    (4, "Lax isospectrality", &["lax", "flow"]),
    (5, "moment constancy and degeneracy at the umbilic", &["lax", "focal"]),
    (6, "no self-focal points on a 4-axial ellipsoid", &["focal"]),
    (7, "(1,n-2,1) self-focal point", &["focal"]),
    (8, "Phi_z identity", &["lax"]),
    (9, "confocal tangency and eigenvector normals", &["lax"]),
    (10, "ellipsoidal coordinate interlacing", &["lax"]),
    (11, "first variation and full rank", &["lax"]),
    (12, "isometry invariance", &["focal"]),
    (13, "Rosochatius flow and reduction", &["rosochatius"]),
    (14, "wall clock and determinism", &["suite"]),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub threads: usize,
    /// Criterion numbers, tags or names; empty runs everything.
    pub only: Vec<String>,
    pub j_grid: Vec<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 1,
            only: Vec::new(),
            j_grid: DEFAULT_J_GRID.to_vec(),
        }
    }
}

impl SuiteConfig {
    pub fn selects(&self, id: u32) -> bool {
        let Some(&(_, name, tags)) = CRITERIA.iter().find(|c| c.0 == id) else {
            return false;
        };
        self.only.is_empty()
            || self.only.iter().any(|tok| {
                let tok = tok.trim().to_lowercase();
                tok == id.to_string() || tags.contains(&tok.as_str()) || name.to_lowercase() == tok
            })
    }

    fn seed_for(&self, id: u32) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(u64::from(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Below,
    Above,
    AtLeast,
    Equals,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::Below => value < threshold,
            Relation::Above => value > threshold,
            Relation::AtLeast => value >= threshold,
            Relation::Equals => value == threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Below => "<",
            Relation::Above => ">",
            Relation::AtLeast => ">=",
            Relation::Equals => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl Measurement {
    pub fn new(label: &str, value: f64, relation: Relation, threshold: f64) -> Self {
        Self {
            label: label.to_string(),
            value,
            relation,
            threshold,
            passed: relation.holds(value, threshold),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub tags: Vec<String>,
    pub measurements: Vec<Measurement>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub runtime_s: f64,
    pub passed: bool,
}

impl CriterionResult {
    pub fn measurement(&self, label: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|m| m.label == label)
    }

    /// One line: `PASS 2 umbilic self-focality: relative_spread 7.2e-14 < 1e-5; ...`.
    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut parts: Vec<String> = self
            .measurements
            .iter()
            .map(|m| format!("{} {:.3e} {} {:.3e}", m.label, m.value, m.relation.symbol(), m.threshold))
            .collect();
        if let Some(e) = &self.error {
            parts.push(format!("error: {e}"));
        }
        format!("{status} {:>2} {}: {}", self.id, self.name, parts.join("; "))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub criteria: Vec<CriterionResult>,
    pub total_runtime_s: f64,
    pub passed: bool,
}

struct Outcome {
    measurements: Vec<Measurement>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            measurements: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, label: &str, value: f64, relation: Relation, threshold: f64) {
        self.measurements.push(Measurement::new(label, value, relation, threshold));
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn umbilic_321() -> DVector<f64> {
    vector(&[1.5f64.sqrt(), 0.0, 0.5f64.sqrt()])
}

fn e(alphas: &[f64]) -> Ellipsoid {
    Ellipsoid::new(alphas).expect("fixed test ellipsoid")
}

fn runtime_budget(id: u32) -> Option<f64> {
    match id {
        1 => Some(10.0),
        2 => Some(120.0),
        3 => Some(300.0),
        4 => Some(180.0),
        6 => Some(600.0),
        _ => None,
    }
}

fn c1(seed: u64) -> Result<Outcome> {
    let s = e(&[1.0; 4]);
    let x0 = s.random_point(seed);
    let r = self_focality_scan(&s, &x0, &ScanOptions::for_ellipsoid(&s, 64, seed))?;
    let mut o = Outcome::new();
    o.push("returned", r.returned as f64, Relation::Equals, 64.0);
    o.push(
        "max_time_error",
        max_of(r.times().iter().map(|t| (t - std::f64::consts::TAU).abs())),
        Relation::Below,
        1e-8,
    );
    o.push(
        "max_direction_deviation",
        max_of(r.deviations().iter().map(|d| d.unwrap_or(f64::INFINITY))),
        Relation::Below,
        1e-8,
    );
    Ok(o)
}

fn c2(seed: u64) -> Result<Outcome> {
    let e = e(&[3.0, 2.0, 1.0]);
    let r = self_focality_scan(&e, &umbilic_321(), &ScanOptions::for_ellipsoid(&e, 64, seed))?;
    let mut o = Outcome::new();
    o.push("returned", r.returned as f64, Relation::Equals, 64.0);
    o.push("relative_spread", r.relative_spread, Relation::Below, 1e-5);
    let far = r.deviations().iter().filter(|d| d.is_some_and(|d| d > 0.1)).count();
    o.push("directions_deviating_over_0.1rad", far as f64, Relation::AtLeast, 60.0);
    o.note(format!("common return time {:.12}", r.mean_time));
    Ok(o)
}

fn c3(seed: u64) -> Result<Outcome> {
    let e = e(&[3.0, 2.0, 1.0]);
    let u = umbilic_321();
    let opts = ScanOptions::for_ellipsoid(&e, 16, seed);
    let t = self_focality_scan(&e, &u, &opts)?.mean_time;
    let fixed = fixed_directions(&e, &u, t, 256, 1e-6, &opts)?;
    let mut o = Outcome::new();
    o.push("fixed_directions", fixed.angles.len() as f64, Relation::Equals, 2.0);
    o.push("flagged_grid_directions", fixed.flagged as f64, Relation::Equals, 0.0);
    let samples = tangent_directions(
        &e,
        &u,
        &DirectionPlan {
            total: 8,
            random: 8,
            seed,
        },
    )?;
    let tw = twistedness_report(&e, &u, t, &samples, 1e-3, &opts)?;
    let nearest = tw
        .samples
        .iter()
        .map(|s| s.distance_from_one)
        .fold(f64::INFINITY, f64::min);
    o.push("min_distance_of_dphi_from_identity", nearest, Relation::Above, 0.01);
    o.note(format!("fixed direction angles {:?}", fixed.angles));
    Ok(o)
}

fn c4(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let opts = IntegratorOptions::default().with_t_max(50.0);
    let mut drift: f64 = 0.0;
    let mut residual: f64 = 0.0;
    for k in 0..100 {
        let traj = integrate_geodesic(&e, &e.random_phase_point(seed.wrapping_add(k)), &opts)?;
        drift = drift.max(traj.max_lax_drift());
        for t in [5.0, 15.0, 25.0, 35.0, 45.0] {
            residual = residual.max(lax_equation_residual(&e, &traj, t, 1e-4)?);
        }
    }
    let mut o = Outcome::new();
    o.push("max_relative_eigenvalue_drift", drift, Relation::Below, 1e-8);
    o.push("max_lax_equation_residual", residual, Relation::Below, 1e-6);
    Ok(o)
}

fn c5(seed: u64) -> Result<Outcome> {
    let e = e(&[3.0, 2.0, 1.0]);
    let at_umbilic = moment_constancy_check(&e, &umbilic_321(), 128, seed)?;
    let generic = moment_constancy_check(&e, &e.random_point(seed), 128, seed)?;
    let lambda_error = max_of(
        at_umbilic
            .eigenvalue_ranges
            .iter()
            .flat_map(|[lo, hi]| [(lo - 2.0).abs(), (hi - 2.0).abs()]),
    );
    let mut o = Outcome::new();
    o.push("umbilic_moment_spread", at_umbilic.max_spread, Relation::Below, 1e-8);
    o.push("umbilic_eigenvalue_minus_alpha2", lambda_error, Relation::Below, 1e-8);
    o.push("generic_moment_spread", generic.max_spread, Relation::Above, 1e-3);
    Ok(o)
}

fn c6(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let mut points = Vec::new();
    for idx in [[0usize, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        let slice = embed_slice(&e, &idx)?;
        for p in umbilic_points_2d(&slice.sub)?.points {
            points.push(slice.embed(&p));
        }
    }
    let candidates = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while points.len() < 20 {
        points.push(e.sample_point(&mut rng));
    }
    let opts = ScanOptions::for_ellipsoid(&e, 32, seed);
    let mut min_spread = f64::INFINITY;
    let mut not_focal = 0;
    for p in &points {
        let r = self_focality_scan(&e, p, &opts)?;
        min_spread = min_spread.min(r.relative_spread);
        not_focal += usize::from(r.verdict == Verdict::NotSelfFocal);
    }
    let mut o = Outcome::new();
    o.push("base_points", points.len() as f64, Relation::Equals, 20.0);
    o.push("min_relative_spread", min_spread, Relation::Above, 1e-2);
    o.note(format!(
        "{candidates} slice-umbilic candidates, {} random points, {not_focal} not-self-focal verdicts",
        points.len() - candidates
    ));
    Ok(o)
}

fn c7(seed: u64) -> Result<Outcome> {
    let e = e(&[3.0, 2.0, 2.0, 1.0]);
    let u = special_point_1_n2_1(&e)?;
    let opts = ScanOptions::for_ellipsoid(&e, 64, seed);
    let at_u = self_focality_scan(&e, &u, &opts)?;
    let moved = perturb_point(&e, &u, 0.05, seed)?;
    let at_moved = self_focality_scan(&e, &moved, &opts)?;
    let mut o = Outcome::new();
    o.push("special_point_deviation", (&u - vector(&[1.5f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()])).norm(), Relation::Below, 1e-12);
    o.push("relative_spread_at_u", at_u.relative_spread, Relation::Below, 1e-5);
    o.push("relative_spread_perturbed", at_moved.relative_spread, Relation::Above, 1e-2);
    Ok(o)
}

fn c8(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 1000 {
        let p = e.random_phase_point(rng.random());
        let z: f64 = rng.random_range(-1.0..5.0);
        if z.abs() < 1e-3 || e.alphas().iter().any(|a| (a - z).abs() < 1e-3) {
            continue;
        }
        let phi = phi_z(&e, z, &p.x, &p.xi)?;
        let rhs = phi_identity_rhs(&e, z, &p.x, &p.xi)?;
        worst = worst.max((phi - rhs).abs() / phi.abs().max(1.0));
        count += 1;
    }
    let mut o = Outcome::new();
    o.push("max_scaled_identity_error", worst, Relation::Below, 1e-10);
    o.note("Phi_z = +|xi|^2 z prod(lambda - z) / prod(alpha - z)");
    Ok(o)
}

fn c9(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let mut tangency: f64 = 0.0;
    let mut alignment: f64 = 0.0;
    let mut unmatched = 0;
    for k in 0..100 {
        let p = e.random_phase_point(seed.wrapping_add(k));
        for &l in &lax_spectrum(&e, &p.x, &p.xi)?.nonzero {
            tangency = tangency.max(confocal_tangency_residual(&e, l, &p.x, &p.xi)?.normalized());
            match contact_point_and_normal(&e, l, &p.x, &p.xi)?.eigenvector_alignment {
                Some(a) => alignment = alignment.max((1.0 - a).abs()),
                None => unmatched += 1,
            }
        }
    }
    let mut o = Outcome::new();
    o.push("max_normalized_tangency_residual", tangency, Relation::Below, 1e-9);
    o.push("max_normal_misalignment", alignment, Relation::Below, 1e-7);
    o.push("eigenvalues_without_simple_eigenvector", unmatched as f64, Relation::Equals, 0.0);
    Ok(o)
}

fn c10(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = e.sample_point(&mut rng);
        worst = worst.max(ellipsoidal_coordinates(&e, &x)?.interlacing_violation(&e));
    }
    let mut o = Outcome::new();
    o.push("max_interlacing_violation", worst, Relation::Below, 1e-10);
    Ok(o)
}

fn c11(seed: u64) -> Result<Outcome> {
    let e = e(&[4.0, 3.0, 2.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut sigma = f64::INFINITY;
    for k in 0..40 {
        let p = e.random_phase_point(seed.wrapping_add(k));
        let basis = admissible_basis(&e, &p.x, &p.xi);
        for _ in 0..5 {
            let c: Vec<f64> = (0..basis.len()).map(|_| rng.sample(StandardNormal)).collect();
            let dx = basis.iter().zip(&c).fold(DVector::zeros(4), |acc, ((v, _), c)| acc + v * *c);
            let dxi = basis.iter().zip(&c).fold(DVector::zeros(4), |acc, ((_, v), c)| acc + v * *c);
            let exact = eigenvalue_variation(&e, &p.x, &p.xi, &dx, &dxi)?.rates;
            let fd = eigenvalue_variation_fd(&e, &p.x, &p.xi, &dx, &dxi, 1e-5)?;
            let err = max_of(exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()));
            let size = max_of(exact.iter().map(|a| a.abs()));
            worst = worst.max(err / size);
        }
        sigma = sigma.min(smallest_singular_value(&lambda_jacobian(&e, &p.x, &p.xi)?));
    }
    let mut o = Outcome::new();
    o.push("max_relative_variation_error", worst, Relation::Below, 1e-6);
    o.push("min_lambda_differential_singular_value", sigma, Relation::Above, 1e-6);
    o.note("200 variations: 5 random admissible directions at each of 40 phase points");
    Ok(o)
}

fn c12(seed: u64) -> Result<Outcome> {
    let e = e(&[3.0, 2.0, 2.0, 1.0]);
    let x0 = e.random_point(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = ScanOptions::for_ellipsoid(&e, 32, seed);
    let mut time_diff: f64 = 0.0;
    let mut agreeing = 0;
    for _ in 0..5 {
        let g = BlockRotation {
            rotations: vec![(1, 2, rng.random_range(0.0..std::f64::consts::TAU))],
        };
        let r = isometry_orbit_check(&e, &x0, &g, &opts)?;
        time_diff = time_diff.max(r.mean_time_difference);
        agreeing += usize::from(r.verdict_base == r.verdict_image);
    }
    let mut o = Outcome::new();
    o.push("matching_verdicts", agreeing as f64, Relation::Equals, 5.0);
    o.push("max_mean_time_difference", time_diff, Relation::Below, 1e-6);
    Ok(o)
}

fn c13(seed: u64, j_grid: &[f64]) -> Result<Outcome> {
    let base = e(&[3.0, 2.0, 1.0]);
    let mut o = Outcome::new();

    let sys = RosochatiusSystem::new(base.clone(), 0.3, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = loop {
        let p = base.random_phase_point(rng.random());
        if p.x[0].abs() > 0.2 {
            break p;
        }
    };
    let free = RosochatiusOptions {
        integrator: IntegratorOptions::default().with_t_max(50.0),
        project_energy: false,
    };
    let traj = integrate_rosochatius(&sys, &p.x, &p.xi, &free)?;
    o.push("energy_drift_j0.3", traj.max_energy_drift(), Relation::Below, 1e-8);

    let sys0 = RosochatiusSystem::new(base.clone(), 0.0, 0)?;
    let opts = RosochatiusOptions {
        integrator: IntegratorOptions::default().with_t_max(50.0),
        project_energy: true,
    };
    let roso = integrate_rosochatius(&sys0, &p.x, &p.xi, &opts)?;
    let geo = integrate_geodesic(&base, &p, &opts.integrator)?;
    let mut j0_distance: f64 = 0.0;
    for s in &geo.samples {
        let (x, _) = roso.at(s.t.min(roso.t_end()))?;
        j0_distance = j0_distance.max((x - &s.point.x).norm());
    }
    o.push("j0_distance_to_geodesic", j0_distance, Relation::Below, 1e-9);

    let e4 = e(&[3.0, 3.0, 2.0, 1.0]);
    let opts20 = RosochatiusOptions {
        integrator: IntegratorOptions::default().with_t_max(20.0),
        project_energy: true,
    };
    let mut j_drift: f64 = 0.0;
    let mut distance: f64 = 0.0;
    for k in 0..100 {
        let c = reduction_consistency(&e4, &e4.random_phase_point(seed.wrapping_add(k)), &opts20)?;
        j_drift = j_drift.max(c.j_drift);
        distance = distance.max(c.max_position_distance);
    }
    o.push("angular_momentum_drift", j_drift, Relation::Below, 1e-9);
    o.push("reduction_distance", distance, Relation::Below, 1e-7);

    let xo = ExperimentOptions::for_ellipsoid(&base, 32, seed);
    let exp = umbilic_return_experiment(base.alphas(), j_grid, &xo)?;
    let complete = exp
        .rows
        .iter()
        .filter(|r| r.directions == xo.num_directions)
        .count();
    o.push("complete_experiment_rows", complete as f64, Relation::Equals, 7.0);
    if let Some(row) = exp.rows.iter().find(|r| r.j == 0.0) {
        o.push(
            "j0_row_relative_spread",
            row.relative_spread.unwrap_or(f64::INFINITY),
            Relation::Below,
            1e-5,
        );
    }
    for r in &exp.rows {
        o.note(format!(
            "j = {}: returned {}/{}, halted {}, relative spread {}",
            r.j,
            r.returned,
            r.directions,
            r.halted,
            r.relative_spread.map_or("n/a".into(), |s| format!("{s:.3e}"))
        ));
    }
    Ok(o)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FocalError::NumericalFailure(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Re-runs a scan, a trajectory export and a Rosochatius experiment with one and
/// several threads and compares the serialized outputs byte for byte.
pub fn determinism_probe(seed: u64) -> Result<Vec<(String, bool)>> {
    let e3 = e(&[3.0, 2.0, 1.0]);
    let scan = |threads| {
        in_pool(threads, || {
            let r = self_focality_scan(&e3, &umbilic_321(), &ScanOptions::for_ellipsoid(&e3, 16, seed))?;
            Ok::<_, FocalError>(serde_json::to_string(&r)?)
        })?
    };
    let e4 = e(&[4.0, 3.0, 2.0, 1.0]);
    let csv = || -> Result<Vec<u8>> {
        let traj = integrate_geodesic(&e4, &e4.random_phase_point(42), &IntegratorOptions::default().with_t_max(20.0))?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        Ok(buf)
    };
    let experiment = |threads| {
        in_pool(threads, || {
            let mut xo = ExperimentOptions::for_ellipsoid(&e3, 8, seed);
            xo.integrator = xo.integrator.with_t_max(12.0);
            let r = umbilic_return_experiment(e3.alphas(), &[0.0, 0.1], &xo)?;
            Ok::<_, FocalError>(serde_json::to_string(&r)?)
        })?
    };
    Ok(vec![
        ("focal scan, 1 vs 4 threads".into(), scan(1)? == scan(4)?),
        ("trajectory csv, repeated".into(), csv()? == csv()?),
        ("rosochatius experiment, 1 vs 3 threads".into(), experiment(1)? == experiment(3)?),
    ])
}

fn c14(seed: u64, elapsed_before: f64, started: Instant) -> Result<Outcome> {
    let checks = determinism_probe(seed)?;
    let mut o = Outcome::new();
    let bad = checks.iter().filter(|(_, ok)| !ok).count();
    o.push("nondeterministic_reports", bad as f64, Relation::Equals, 0.0);
    for (name, ok) in &checks {
        o.note(format!("{name}: {}", if *ok { "identical" } else { "DIFFERENT" }));
    }
    o.push(
        "suite_wall_clock_s",
        elapsed_before + started.elapsed().as_secs_f64(),
        Relation::Below,
        900.0,
    );
    Ok(o)
}

fn finish(id: u32, outcome: Result<Outcome>, started: Instant) -> CriterionResult {
    let (name, tags): (&str, &[&str]) = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map_or(("unknown", &[]), |c| (c.1, c.2));
    let runtime_s = started.elapsed().as_secs_f64();
    let (mut measurements, notes, error) = match outcome {
        Ok(o) => (o.measurements, o.notes, None),
        Err(e) => (Vec::new(), Vec::new(), Some(e.to_string())),
    };
    if let Some(budget) = runtime_budget(id) {
        measurements.push(Measurement::new("runtime_s", runtime_s, Relation::Below, budget));
    }
    let passed = error.is_none() && !measurements.is_empty() && measurements.iter().all(|m| m.passed);
    CriterionResult {
        id,
        name: name.to_string(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        measurements,
        notes,
        error,
        runtime_s,
        passed,
    }
}

/// Runs criterion `id` (1..=13) on the current thread pool.
pub fn run_criterion(id: u32, cfg: &SuiteConfig) -> CriterionResult {
    let seed = cfg.seed_for(id);
    let started = Instant::now();
    let outcome = match id {
        1 => c1(seed),
        2 => c2(seed),
        3 => c3(seed),
        4 => c4(seed),
        5 => c5(seed),
        6 => c6(seed),
        7 => c7(seed),
        8 => c8(seed),
        9 => c9(seed),
        10 => c10(seed),
        11 => c11(seed),
        12 => c12(seed),
        13 => c13(seed, &cfg.j_grid),
        14 => c14(seed, 0.0, started),
        _ => Err(FocalError::invalid(format!("no criterion {id}"))),
    };
    finish(id, outcome, started)
}

/// Runs the selected criteria in order on a pool of `cfg.threads` workers.
/// Criterion 14 times everything that ran before it.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.threads == 0 {
        return Err(FocalError::invalid("threads must be at least 1"));
    }
    let started = Instant::now();
    let criteria = in_pool(cfg.threads, || {
        let mut out = Vec::new();
        for id in 1..=13 {
            if cfg.selects(id) {
                out.push(run_criterion(id, cfg));
            }
        }
        if cfg.selects(14) {
            let t14 = Instant::now();
            let before = started.elapsed().as_secs_f64();
            out.push(finish(14, c14(cfg.seed_for(14), before, t14), t14));
        }
        out
    })?;
    Ok(SuiteReport {
        config: cfg.clone(),
        passed: criteria.iter().all(|c| c.passed),
        criteria,
        total_runtime_s: started.elapsed().as_secs_f64(),
    })
}
