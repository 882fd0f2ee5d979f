use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use focal_core::flow::lax_equation_residual;
use focal_core::focal::{
    self, fixed_directions, special_point_1_n2_1, twistedness_report, FixedDirections, MomentConstancyReport,
    ReturnMapSample, TwistednessReport,
};
use focal_core::lax::{confocal_tangency_residual, lax_spectrum, phi_identity_rhs, phi_z, resolve_quadric_level};
use focal_core::report::Report;
use focal_core::rosochatius::{umbilic_return_experiment, ExperimentOptions};
use focal_core::sampling::{tangent_directions, DirectionPlan};
use focal_core::suite::{run_suite, SuiteConfig, DEFAULT_J_GRID};
use focal_core::{
    first_return, integrate_geodesic, moment_map, self_focality_scan, umbilic_points_2d, Ellipsoid, FocalError,
    IntegratorOptions, PhasePoint, ReturnEvent, ScanOptions, ShapeReport,
};

use crate::config::{parse_list, Resolver};
use crate::{CliError, Common, PointArgs};

type CliResult<T = ()> = Result<T, CliError>;

struct Setup {
    e: Ellipsoid,
    seed: u64,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    t_max: Option<f64>,
    max_steps: Option<usize>,
    out: Option<PathBuf>,
}

impl Setup {
    fn integrator(&self, base: IntegratorOptions) -> IntegratorOptions {
        IntegratorOptions {
            rel_tol: self.rel_tol.unwrap_or(base.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(base.abs_tol),
            t_max: self.t_max.unwrap_or(base.t_max),
            max_steps: self.max_steps.unwrap_or(base.max_steps),
            ..base
        }
    }

    fn stem(&self) -> Option<PathBuf> {
        self.out.as_deref().map(stem_of)
    }
}

/// `out` without a trailing `.json` / `.csv`.
fn stem_of(p: &Path) -> PathBuf {
    match p.extension().and_then(|x| x.to_str()) {
        Some("json" | "csv") => p.with_extension(""),
        _ => p.to_path_buf(),
    }
}

fn setup(r: &mut Resolver, common: Common, default_seed: u64) -> CliResult<Setup> {
    let axes = r
        .list("axes", common.axes)?
        .ok_or_else(|| CliError::Usage("missing --axes".into()))?;
    let squared = r.flag("squared", common.squared)?;
    let e = if squared {
        Ellipsoid::new(&axes)
    } else {
        Ellipsoid::from_semi_axes(&axes)
    }?;
    let seed = r.parsed("seed", common.seed, default_seed)?;
    let rel_tol = r.optional("rel-tol", common.rel_tol)?;
    let abs_tol = r.optional("abs-tol", common.abs_tol)?;
    let t_max = r.optional("t-max", common.t_max)?;
    let max_steps = r.optional("max-steps", common.max_steps)?;
    let threads = r.parsed("threads", common.threads, 1)?;
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    // Only fails if a pool already exists, which cannot happen in a fresh process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let out = r
        .string("out", common.out.map(|p| p.display().to_string()))
        .map(PathBuf::from);
    Ok(Setup {
        e,
        seed,
        rel_tol,
        abs_tol,
        t_max,
        max_steps,
        out,
    })
}

fn resolve_point(r: &mut Resolver, s: &Setup, point: PointArgs, default: &str) -> CliResult<(String, DVector<f64>)> {
    let spec = r.string("point", point.point).unwrap_or_else(|| default.to_string());
    let e = &s.e;
    let x = match spec.trim() {
        "random" => e.random_point(s.seed),
        "umbilic" => {
            let u = umbilic_points_2d(e)?;
            u.points
                .into_iter()
                .find(|p| p.iter().all(|v| *v >= 0.0))
                .expect("one umbilic has non-negative coordinates")
        }
        "special" => special_point_1_n2_1(e)?,
        coords => {
            let v = parse_list(coords).map_err(|m| CliError::Usage(format!("--point: {m}")))?;
            if v.len() != e.dim() {
                return Err(CliError::Usage(format!(
                    "--point has {} coordinates, the ellipsoid has {}",
                    v.len(),
                    e.dim()
                )));
            }
            e.project_to_ellipsoid(&DVector::from_vec(v))?
        }
    };
    Ok((spec, x))
}

fn write_json<T: Serialize>(stem: Option<PathBuf>, report: &Report<T>) -> CliResult {
    match stem {
        Some(stem) => report.write(&stem.with_extension("json"))?,
        None => println!("{}", report.to_json()?),
    }
    Ok(())
}

fn csv_file(stem: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(stem.with_extension("csv")).map_err(FocalError::from)?))
}

#[derive(Serialize)]
struct SimulateResult {
    point: String,
    status: String,
    initial: PhasePoint,
    final_point: PhasePoint,
    t_end: f64,
    samples: usize,
    accepted: usize,
    rejected: usize,
    max_constraint_residual: f64,
    max_speed_residual: f64,
    max_lax_drift: f64,
    initial_lax_eigenvalues: Vec<f64>,
    return_radius: f64,
    /// Passages through the initial point within the return radius.
    returns: Vec<ReturnEvent>,
}

pub fn simulate(r: &mut Resolver, common: Common, point: PointArgs, direction: Option<String>) -> CliResult {
    let mut s = setup(r, common, 0)?;
    if s.out.is_none() {
        s.out = Some(PathBuf::from("trajectory"));
    }
    let direction = r.list("direction", direction)?;
    let random = point.point.is_none() && direction.is_none();
    let (spec, p0) = if random && r.string("point", None).is_none() {
        ("random".to_string(), s.e.random_phase_point(s.seed))
    } else {
        let (spec, x) = resolve_point(r, &s, point, "random")?;
        let xi = match direction {
            Some(d) => {
                if d.len() != s.e.dim() {
                    return Err(CliError::Usage("--direction has the wrong length".into()));
                }
                let v = s.e.project_to_tangent(&x, &DVector::from_vec(d))?;
                if v.norm() < 1e-12 {
                    return Err(CliError::Usage("--direction is normal to the ellipsoid".into()));
                }
                v.normalize()
            }
            None => s.e.random_unit_tangent(&x, s.seed)?,
        };
        (spec, PhasePoint::normalized(&s.e, &x, &xi)?)
    };
    let opts = s.integrator(IntegratorOptions::default());
    let stem = s.stem().expect("simulate always has an output stem");
    let radius = focal::RETURN_RADIUS_FACTOR * s.e.geometric_mean_semi_axis();
    let (traj, failure) = match integrate_geodesic(&s.e, &p0, &opts) {
        Ok(t) => (t, None),
        Err(FocalError::IntegrationFailure { t, reason, partial: Some(p) }) => {
            (*p, Some(FocalError::IntegrationFailure { t, reason, partial: None }))
        }
        Err(e) => return Err(e.into()),
    };
    traj.write_csv(csv_file(&stem)?)?;
    let returns = match failure {
        None => first_return(&s.e, &p0.x, &p0.xi, &opts, radius)?,
        Some(_) => Vec::new(),
    };
    let result = SimulateResult {
        point: spec,
        status: failure.as_ref().map_or("ok".into(), |f| f.to_string()),
        initial_lax_eigenvalues: lax_spectrum(&s.e, &p0.x, &p0.xi)?.nonzero,
        initial: p0,
        final_point: traj.final_point().clone(),
        t_end: traj.t_end(),
        samples: traj.samples.len(),
        accepted: traj.accepted,
        rejected: traj.rejected,
        max_constraint_residual: traj.max_constraint_residual(),
        max_speed_residual: traj.max_speed_residual(),
        max_lax_drift: traj.max_lax_drift(),
        return_radius: radius,
        returns,
    };
    write_json(s.stem(), &Report::new("simulate", r.echo(), vec![s.seed], result))?;
    match failure {
        Some(f) => Err(f.into()),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct LaxResiduals {
    kernel_dim: usize,
    /// Largest `|Phi_z - rhs| / max(1, |rhs|)` over the probe values of `z`.
    phi_identity: f64,
    /// Largest normalized discriminant at the nonzero eigenvalues.
    tangency: f64,
    lax_drift: f64,
    lax_equation: f64,
}

#[derive(Serialize)]
struct LaxSample {
    x: DVector<f64>,
    xi: DVector<f64>,
    eigs: Vec<f64>,
    moment: Vec<f64>,
    residuals: LaxResiduals,
}

#[derive(Serialize)]
struct LaxVerifyResult {
    quadric_level: f64,
    worst_tangency_plus: f64,
    worst_tangency_minus: f64,
    max_phi_identity: f64,
    max_tangency: f64,
    max_lax_drift: f64,
    max_lax_equation: f64,
    anomalies: usize,
    samples: Vec<LaxSample>,
}

/// Probe values of `z`: midpoints between the axes and one point on each side.
fn probe_z(alphas: &[f64]) -> Vec<f64> {
    let mut a = alphas.to_vec();
    a.sort_by(f64::total_cmp);
    let mut z = vec![-0.5 * a[0], a[a.len() - 1] * 1.5];
    z.extend(a.windows(2).filter(|w| w[1] > w[0]).map(|w| 0.5 * (w[0] + w[1])));
    z
}

pub fn lax_verify(r: &mut Resolver, common: Common, samples: Option<usize>) -> CliResult {
    let s = setup(r, common, 0)?;
    let n = r.parsed("samples", samples, 16)?;
    if n == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let e = &s.e;
    let opts = s.integrator(IntegratorOptions::default().with_t_max(5.0));
    let zs = probe_z(e.alphas());
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let p = e.random_phase_point(s.seed.wrapping_add(k as u64));
        let spectrum = lax_spectrum(e, &p.x, &p.xi)?;
        let moment = moment_map(e, &p.x, &p.xi)?;
        let mut phi_identity: f64 = 0.0;
        for &z in &zs {
            let rhs = phi_identity_rhs(e, z, &p.x, &p.xi)?;
            phi_identity = phi_identity.max((phi_z(e, z, &p.x, &p.xi)? - rhs).abs() / rhs.abs().max(1.0));
        }
        let tangency = spectrum
            .nonzero
            .iter()
            .filter_map(|&l| confocal_tangency_residual(e, l, &p.x, &p.xi).ok())
            .map(|t| t.normalized())
            .fold(0.0, f64::max);
        let traj = integrate_geodesic(e, &p, &opts)?;
        let lax_equation = lax_equation_residual(e, &traj, 0.5 * traj.t_end(), 1e-4)?;
        out.push(LaxSample {
            residuals: LaxResiduals {
                kernel_dim: spectrum.kernel_dim(),
                phi_identity,
                tangency,
                lax_drift: traj.max_lax_drift(),
                lax_equation,
            },
            x: p.x,
            xi: p.xi,
            eigs: spectrum.nonzero,
            moment: moment.e,
        });
    }
    let convention = resolve_quadric_level(e, n, s.seed)?;
    let max = |f: fn(&LaxResiduals) -> f64| out.iter().map(|o| f(&o.residuals)).fold(0.0, f64::max);
    let result = LaxVerifyResult {
        quadric_level: convention.level,
        worst_tangency_plus: convention.worst_residual_plus,
        worst_tangency_minus: convention.worst_residual_minus,
        max_phi_identity: max(|r| r.phi_identity),
        max_tangency: max(|r| r.tangency),
        max_lax_drift: max(|r| r.lax_drift),
        max_lax_equation: max(|r| r.lax_equation),
        anomalies: out.iter().filter(|o| o.residuals.kernel_dim != 2).count(),
        samples: out,
    };
    eprintln!(
        "lax-verify: {n} samples, max phi identity {:.2e}, tangency {:.2e}, drift {:.2e}, anomalies {}",
        result.max_phi_identity, result.max_tangency, result.max_lax_drift, result.anomalies
    );
    let seeds = (0..n as u64).map(|k| s.seed.wrapping_add(k)).collect();
    write_json(s.stem(), &Report::new("lax-verify", r.echo(), seeds, result))
}

fn scan_options(r: &mut Resolver, s: &Setup, directions: Option<usize>, default: usize) -> CliResult<ScanOptions> {
    let n = r.parsed("directions", directions, default)?;
    let mut opts = ScanOptions::for_ellipsoid(&s.e, n, s.seed);
    opts.integrator = s.integrator(opts.integrator);
    Ok(opts)
}

pub fn focal_scan(r: &mut Resolver, common: Common, point: PointArgs, directions: Option<usize>) -> CliResult {
    let s = setup(r, common, 1)?;
    let (_, x) = resolve_point(r, &s, point, "random")?;
    let opts = scan_options(r, &s, directions, 64)?;
    let report = self_focality_scan(&s.e, &x, &opts)?;
    eprintln!(
        "focal-scan: {} ({} of {} returned, mean time {:.10}, relative spread {:.3e})",
        serde_json::to_value(report.verdict).map_err(FocalError::from)?.as_str().unwrap_or("?"),
        report.returned,
        report.results.len(),
        report.mean_time,
        report.relative_spread
    );
    write_json(s.stem(), &Report::new("focal-scan", r.echo(), vec![s.seed], report))
}

#[derive(Serialize)]
struct ReturnMapResult {
    base_point: DVector<f64>,
    t_common: f64,
    /// Set when the common time came from a scan that did not find self-focal evidence.
    warning: Option<String>,
    samples: Vec<ReturnMapSample>,
    max_deviation: f64,
    fixed: Option<FixedDirections>,
    twistedness: Option<TwistednessReport>,
}

pub fn return_map(
    r: &mut Resolver,
    common: Common,
    point: PointArgs,
    directions: Option<usize>,
    t_common: Option<f64>,
    twist: Option<f64>,
) -> CliResult {
    let s = setup(r, common, 1)?;
    let (_, x) = resolve_point(r, &s, point, "umbilic")?;
    let opts = scan_options(r, &s, directions, 64)?;
    let mut warning = None;
    let t_common = match r.optional("t-common", t_common)? {
        Some(t) => t,
        None => {
            let mut probe = opts.clone();
            probe.num_directions = 16;
            probe.random_directions = 2;
            let scan = self_focality_scan(&s.e, &x, &probe)?;
            if scan.verdict != focal_core::Verdict::SelfFocalEvidence {
                warning = Some(format!(
                    "no self-focal evidence at the base point (relative spread {:.3e})",
                    scan.relative_spread
                ));
            }
            scan.mean_time
        }
    };
    let grid = tangent_directions(&s.e, &x, &DirectionPlan::grid_only(opts.num_directions))?;
    let samples = focal::return_map(&s.e, &x, t_common, &grid, &opts)?;
    let fixed = if s.e.dim() == 3 {
        Some(fixed_directions(&s.e, &x, t_common, opts.num_directions, 1e-6, &opts)?)
    } else {
        None
    };
    let twistedness = match r.optional("twist", twist)? {
        Some(h) => Some(twistedness_report(&s.e, &x, t_common, &grid, h, &opts)?),
        None => None,
    };
    if let Some(stem) = s.stem() {
        write_return_map_csv(&stem, &samples)?;
    }
    let result = ReturnMapResult {
        base_point: x,
        t_common,
        warning,
        max_deviation: samples
            .iter()
            .filter(|p| !p.flagged)
            .map(|p| p.angular_deviation)
            .fold(0.0, f64::max),
        samples,
        fixed,
        twistedness,
    };
    if let Some(f) = &result.fixed {
        eprintln!("return-map: T = {t_common:.10}, {} fixed directions", f.angles.len());
    }
    write_json(s.stem(), &Report::new("return-map", r.echo(), vec![s.seed], result))
}

/// Columns `index, return_time, miss_distance, angular_deviation, flagged, xi_1..n, eta_1..n`
/// (`eta` the returning direction).
fn write_return_map_csv(stem: &Path, samples: &[ReturnMapSample]) -> CliResult {
    let n = samples.first().map_or(0, |p| p.initial_direction.len());
    let mut w = csv::Writer::from_writer(csv_file(stem)?);
    let io = |e: csv::Error| CliError::Core(FocalError::Io(std::io::Error::other(e)));
    let mut header: Vec<String> = ["index", "return_time", "miss_distance", "angular_deviation", "flagged"]
        .iter()
        .map(|h| h.to_string())
        .collect();
    header.extend((1..=n).map(|i| format!("xi_{i}")));
    header.extend((1..=n).map(|i| format!("eta_{i}")));
    w.write_record(&header).map_err(io)?;
    for (k, p) in samples.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            format!("{:.17e}", p.return_time),
            format!("{:.6e}", p.miss_distance),
            format!("{:.6e}", p.angular_deviation),
            u8::from(p.flagged).to_string(),
        ];
        row.extend(p.initial_direction.iter().map(|v| format!("{v:.17e}")));
        row.extend(p.terminal_direction.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(FocalError::from)?;
    Ok(())
}

#[derive(Serialize)]
struct UmbilicResult {
    kind: &'static str,
    points: Vec<DVector<f64>>,
    shape: Vec<ShapeReport>,
    closed_form_deviation: Option<f64>,
    moment_constancy: MomentConstancyReport,
}

pub fn umbilic(r: &mut Resolver, common: Common, samples: Option<usize>) -> CliResult {
    let s = setup(r, common, 1)?;
    let n = r.parsed("samples", samples, 64)?;
    let e = &s.e;
    let (kind, points, closed_form_deviation) = if e.dim() == 3 {
        let u = umbilic_points_2d(e)?;
        ("umbilic", u.points, Some(u.closed_form_deviation))
    } else {
        ("special", vec![special_point_1_n2_1(e)?], None)
    };
    let base = points
        .iter()
        .find(|p| p.iter().all(|v| *v >= 0.0))
        .unwrap_or(&points[0])
        .clone();
    let shape = points.iter().map(|p| e.shape_operator(p)).collect::<Result<Vec<_>, _>>()?;
    let moment_constancy = focal::moment_constancy_check(e, &base, n, s.seed)?;
    eprintln!(
        "umbilic: {} point(s), moment spread {:.3e} over {n} directions",
        points.len(),
        moment_constancy.max_spread
    );
    let result = UmbilicResult {
        kind,
        points,
        shape,
        closed_form_deviation,
        moment_constancy,
    };
    write_json(s.stem(), &Report::new("umbilic", r.echo(), vec![s.seed], result))
}

fn j_grid(r: &mut Resolver, flag: Option<String>) -> CliResult<Vec<f64>> {
    Ok(r.list("j-grid", flag)?.unwrap_or_else(|| DEFAULT_J_GRID.to_vec()))
}

pub fn rosochatius(r: &mut Resolver, common: Common, directions: Option<usize>, grid: Option<String>) -> CliResult {
    let s = setup(r, common, 1)?;
    if s.e.dim() != 3 {
        return Err(CliError::Usage("rosochatius needs three axes (the reduced base ellipsoid)".into()));
    }
    let grid = j_grid(r, grid)?;
    let n = r.parsed("directions", directions, 16)?;
    let mut opts = ExperimentOptions::for_ellipsoid(&s.e, n, s.seed);
    opts.integrator = s.integrator(opts.integrator);
    let experiment = umbilic_return_experiment(s.e.alphas(), &grid, &opts)?;
    for row in &experiment.rows {
        eprintln!(
            "j = {:<6} returned {:>3}/{:<3} halted {:>3} relative spread {}",
            row.j,
            row.returned,
            row.directions,
            row.halted,
            row.relative_spread.map_or("-".into(), |v| format!("{v:.3e}"))
        );
    }
    if let Some(stem) = s.stem() {
        experiment.write_csv(csv_file(&stem)?)?;
    }
    write_json(s.stem(), &Report::new("rosochatius", r.echo(), vec![s.seed], experiment))
}

pub fn suite(r: &mut Resolver, common: Common, only: Option<String>, grid: Option<String>) -> CliResult {
    let seed = r.parsed("seed", common.seed, 1)?;
    let threads = r.parsed("threads", common.threads, 1)?;
    if threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let only: Vec<String> = r
        .string("only", only)
        .map(|o| o.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
        .unwrap_or_default();
    let cfg = SuiteConfig {
        seed,
        threads,
        only,
        j_grid: j_grid(r, grid)?,
    };
    if !(1..=14).any(|id| cfg.selects(id)) {
        return Err(CliError::Usage(format!("--only {:?} selects no criterion", cfg.only)));
    }
    let out = r.string("out", common.out.map(|p| p.display().to_string()));
    let report = run_suite(&cfg)?;
    for c in &report.criteria {
        println!("{}", c.summary_line());
    }
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} criteria passed in {:.1} s",
        report.criteria.len() - failed,
        report.criteria.len(),
        report.total_runtime_s
    );
    if let Some(out) = out {
        let stem = stem_of(Path::new(&out));
        write_json(Some(stem), &Report::new("suite", r.echo(), vec![seed], report))?;
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} criteria failed")));
    }
    Ok(())
}
