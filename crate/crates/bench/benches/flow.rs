use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

use focal_bench::{ellipsoid, phase_points};
use focal_core::{integrate_geodesic, lax_spectrum, self_focality_scan, IntegratorOptions, ScanOptions};

fn geodesic(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate_geodesic");
    for alphas in [vec![3.0, 2.0, 1.0], vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]] {
        let e = ellipsoid(&alphas);
        let p = e.random_phase_point(7);
        let opts = IntegratorOptions::default().with_t_max(20.0);
        g.bench_with_input(BenchmarkId::from_parameter(alphas.len()), &p, |b, p| {
            b.iter(|| integrate_geodesic(&e, black_box(p), &opts).unwrap())
        });
    }
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let mut g = c.benchmark_group("lax_spectrum");
    for n in [3usize, 6, 12] {
        let alphas: Vec<f64> = (1..=n).rev().map(|k| k as f64).collect();
        let e = ellipsoid(&alphas);
        let points = phase_points(&e, 32);
        g.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, pts| {
            b.iter(|| {
                for p in pts {
                    black_box(lax_spectrum(&e, &p.x, &p.xi).unwrap());
                }
            })
        });
    }
    g.finish();
}

fn scan(c: &mut Criterion) {
    let e = ellipsoid(&[3.0, 2.0, 1.0]);
    let u = DVector::from_vec(vec![1.5f64.sqrt(), 0.0, 0.5f64.sqrt()]);
    let opts = ScanOptions::for_ellipsoid(&e, 16, 1);
    let mut g = c.benchmark_group("focal_scan");
    g.sample_size(10);
    g.bench_function("umbilic_321_16", |b| {
        b.iter(|| self_focality_scan(&e, black_box(&u), &opts).unwrap())
    });
    g.finish();
}

criterion_group!(benches, geodesic, spectrum, scan);
criterion_main!(benches);
