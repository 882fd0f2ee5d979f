use focal_core::flow::exp_map;
use focal_core::lax::{
    ellipsoidal_coordinates, lax_matrix, lax_spectrum, phi_identity_rhs, phi_z,
};
use focal_core::{first_return, Ellipsoid, IntegratorOptions};
use proptest::prelude::*;

fn axes(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.3f64..5.0, n)
}

fn ellipsoid() -> impl Strategy<Value = Ellipsoid> {
    (3usize..6).prop_flat_map(axes).prop_map(|a| Ellipsoid::new(&a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_lands_on_the_ellipsoid(e in ellipsoid(), seed in any::<u64>()) {
        let x = e.random_point(seed);
        prop_assert!(e.constraint_residual(&x) < 1e-13);
        let y = &x * 1.7;
        let back = e.project_to_ellipsoid(&y).unwrap();
        prop_assert!((back - &x).norm() < 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn lax_kernel_and_spectral_range(e in ellipsoid(), seed in any::<u64>()) {
        let p = e.random_phase_point(seed);
        let l = lax_matrix(&e, &p.x, &p.xi);
        let n = e.unit_normal(&p.x).unwrap();
        let scale = l.matrix().norm();
        prop_assert!((l.matrix() * &p.xi).norm() < 1e-12 * scale);
        prop_assert!((l.matrix() * e.inv_apply(&p.x)).norm() < 1e-12 * scale * e.inv_apply(&p.x).norm());
        prop_assert!((l.matrix() * &n).norm() < 1e-12 * scale);
        let s = lax_spectrum(&e, &p.x, &p.xi).unwrap();
        let a = e.sorted_alphas();
        for &v in &s.nonzero {
            prop_assert!(v >= a[0] - 1e-12 && v <= a[a.len() - 1] + 1e-12);
        }
    }

    #[test]
    fn phi_identity_on_random_ellipsoids(e in ellipsoid(), seed in any::<u64>(), z in -3.0f64..7.0) {
        prop_assume!(z.abs() > 1e-2 && e.alphas().iter().all(|a| (a - z).abs() > 1e-2));
        let p = e.random_phase_point(seed);
        let phi = phi_z(&e, z, &p.x, &p.xi).unwrap();
        let rhs = phi_identity_rhs(&e, z, &p.x, &p.xi).unwrap();
        prop_assert!((phi - rhs).abs() < 1e-9 * phi.abs().max(1.0), "{} vs {}", phi, rhs);
    }

    #[test]
    fn ellipsoidal_coordinates_interlace(e in ellipsoid(), seed in any::<u64>()) {
        let x = e.random_point(seed);
        let c = ellipsoidal_coordinates(&e, &x).unwrap();
        prop_assert_eq!(c.zeta.len(), e.dim() - 1);
        prop_assert!(c.interlacing_violation(&e) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exp_map_is_reversible(e in ellipsoid(), seed in any::<u64>(), t in 0.1f64..6.0) {
        let p = e.random_phase_point(seed);
        let opts = IntegratorOptions::default();
        let q = exp_map(&e, &p.x, &p.xi, t, &opts).unwrap();
        let back = exp_map(&e, &q.x, &q.xi, -t, &opts).unwrap();
        prop_assert!((back.x - &p.x).norm() < 1e-8);
        prop_assert!((back.xi - &p.xi).norm() < 1e-8);
    }

    #[test]
    fn spheres_return_at_two_pi_r(r in 0.3f64..3.0, seed in any::<u64>()) {
        let s = Ellipsoid::from_semi_axes(&[r, r, r]).unwrap();
        let p = s.random_phase_point(seed);
        let opts = IntegratorOptions::default().with_t_max(2.0 * std::f64::consts::TAU * r);
        let events = first_return(&s, &p.x, &p.xi, &opts, 1e-4 * r).unwrap();
        prop_assert!(!events.is_empty());
        prop_assert!((events[0].return_time - std::f64::consts::TAU * r).abs() < 1e-8 * r.max(1.0));
        prop_assert!((&events[0].terminal_direction - &p.xi).norm() < 1e-8);
    }
}
