use num_complex::Complex64;
use proptest::prelude::*;

use sg_thermal::cluster::{
    charge_integrand, corner_difference, f_and_z, generating_term, partition_count, sigma_integral, signed_integrand,
    Region, TestSource,
};
use sg_thermal::config::{ConfigLayer, ParamsSection, RunSection, Settings};
use sg_thermal::covariance::{
    excess_gram_min_eigenvalue, thermal_covariance, vacuum_covariance, vacuum_limit_bound,
};
use sg_thermal::dirichlet::{gamma_covariance, interpolated_covariance, BondSet, InterpolationVector};
use sg_thermal::gas::{cauchy_identity_check, CutoffFunction};
use sg_thermal::kernel::CovarianceModel;
use sg_thermal::params::{EuclideanPoint, RunConfig, ThermalParams};
use sg_thermal::record::{Cell, ResultRecord, Table};

fn params() -> impl Strategy<Value = ThermalParams> {
    (0.5f64..4.0, 0.5f64..8.0).prop_map(|(b, m)| ThermalParams::new(b, m))
}

fn pt(u: f64, x: f64) -> EuclideanPoint {
    EuclideanPoint::new(u, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn covariance_reflections_and_sign(p in params(), fu in 0.001f64..0.999, x in -10.0f64..10.0) {
        prop_assume!(x.abs() > 1e-3);
        let u = fu * p.beta;
        let c = thermal_covariance(&p, u, x).unwrap();
        prop_assert!((c - thermal_covariance(&p, u, -x).unwrap()).abs() < 1e-10);
        prop_assert!((c - thermal_covariance(&p, p.beta - u, x).unwrap()).abs() < 1e-10);
        prop_assert!(c > 0.0);
    }

    #[test]
    fn thermal_excess_within_vacuum_limit_bound(p in params(), fu in 0.0f64..0.5, x in 0.05f64..3.0) {
        let u = fu * p.beta;
        let d = thermal_covariance(&p, u, x).unwrap() - vacuum_covariance(&p, pt(u, x)).unwrap();
        prop_assert!(d.abs() <= vacuum_limit_bound(&p) * (1.0 + 1e-12));
    }

    #[test]
    fn thermal_dominates_vacuum_as_forms(p in params(), xs in prop::collection::vec(-3.0f64..3.0, 2..8)) {
        prop_assert!(excess_gram_min_eigenvalue(&p, &xs) >= -1e-10);
    }

    #[test]
    fn dirichlet_lies_below_free(
        p in params(),
        bonds in prop::collection::btree_set(-3i64..4, 1..4),
        fu in 0.01f64..0.99,
        x in -4.0f64..5.0,
        y in -4.0f64..5.0,
    ) {
        let g = BondSet::new(bonds.into_iter().collect()).unwrap();
        let d = gamma_covariance(&p, &g, pt(fu * p.beta, x), pt(0.0, y), 12).unwrap();
        prop_assert!(d <= thermal_covariance(&p, fu * p.beta, x - y).unwrap() + 1e-10);
        prop_assert!(d >= -1e-12);
    }

    #[test]
    fn interpolation_is_affine_with_exact_corners(
        s in prop::collection::vec(0.0f64..1.0, 3),
        which in 0usize..3,
        x in -2.0f64..3.0,
        y in -2.0f64..3.0,
    ) {
        let p = ThermalParams::default();
        let active = BondSet::new(vec![-1, 0, 2]).unwrap();
        let (a, b) = (pt(0.35, x), pt(0.0, y));
        let iv = InterpolationVector::new(active.clone(), s, BondSet::empty()).unwrap();
        let bond = active.as_slice()[which];
        let at = |v: f64| {
            let mut t = iv.clone();
            t.set(bond, v);
            interpolated_covariance(&p, &t, a, b, 12).unwrap()
        };
        prop_assert!((at(0.5) - 0.5 * (at(0.0) + at(1.0))).abs() < 1e-12);
        let dirichlet = InterpolationVector::uniform(active.clone(), 0.0);
        prop_assert_eq!(
            interpolated_covariance(&p, &dirichlet, a, b, 12).unwrap(),
            gamma_covariance(&p, &active, a, b, 12).unwrap()
        );
        let free = InterpolationVector::uniform(active, 1.0);
        prop_assert_eq!(
            interpolated_covariance(&p, &free, a, b, 12).unwrap(),
            gamma_covariance(&p, &BondSet::empty(), a, b, 12).unwrap()
        );
    }

    #[test]
    fn sigma_quadrature_matches_fundamental_theorem(
        k in 1usize..4,
        re in prop::collection::vec(-0.5f64..0.5, 8),
        im in prop::collection::vec(-0.5f64..0.5, 8),
    ) {
        let corners: Vec<Complex64> = (0..1 << k).map(|i| Complex64::new(re[i], im[i])).collect();
        let s = sigma_integral(&corners, 1e-13).unwrap();
        prop_assert!((s.value - corner_difference(&corners)).norm() < 1e-11);
    }

    #[test]
    fn cauchy_determinant_identity(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..7)) {
        let n = pts.len() / 2;
        let xs: Vec<[f64; 2]> = pts[..n].iter().map(|(t, s)| [*t, *s]).collect();
        let ys: Vec<[f64; 2]> = pts[n..2 * n].iter().map(|(t, s)| [*t, *s]).collect();
        if let Ok((l, r)) = cauchy_identity_check(&xs, &ys) {
            prop_assert!((l - r).abs() <= 1e-8 * l.abs());
        }
    }

    #[test]
    fn bond_partitions_obey_counting_bound(bonds in prop::collection::btree_set(0i64..12, 1..6)) {
        let g: Vec<i64> = bonds.into_iter().collect();
        prop_assert_eq!(partition_count(&g).violations, 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kms_reflection_and_charge_conjugation(
        raw in prop::collection::vec((0.01f64..0.99, -2.0f64..3.0, any::<bool>()), 1..4),
        psi in -1.0f64..1.0,
        psi_prime in -1.0f64..1.0,
    ) {
        let p = ThermalParams::default();
        let w = CovarianceModel::Thermal(p);
        let src = |a: f64, b: f64| TestSource::tent(0.0, 1.0, 5, a, b).unwrap();
        let pts: Vec<EuclideanPoint> = raw.iter().map(|(u, x, _)| pt(u * p.beta, *x)).collect();
        let refl: Vec<EuclideanPoint> = pts.iter().map(|q| pt(p.beta - q.u, q.x)).collect();
        let ch: Vec<f64> = raw.iter().map(|(_, _, s)| if *s { 1.0 } else { -1.0 }).collect();
        let flip: Vec<f64> = ch.iter().map(|c| -c).collect();
        let base = signed_integrand(&p, &w, &src(psi, psi_prime), &pts, &ch).unwrap();
        let tol = 1e-10 * base.norm().max(1.0);
        // u → β − u turns ∂_u C around, so ψ′ changes sign
        let r = signed_integrand(&p, &w, &src(psi, -psi_prime), &refl, &ch).unwrap();
        prop_assert!((r - base).norm() < tol);
        // with every charge flipped as well, ψ changes sign instead
        let rf = signed_integrand(&p, &w, &src(-psi, psi_prime), &refl, &flip).unwrap();
        prop_assert!((rf - base).norm() < tol);
        let avg = charge_integrand(&p, &w, &src(psi, psi_prime), &pts).unwrap();
        let conj = charge_integrand(&p, &w, &src(psi, -psi_prime), &pts).unwrap();
        prop_assert!((avg.conj() - conj).norm() < tol);
        let z = charge_integrand(&p, &w, &TestSource::zero(), &pts).unwrap();
        prop_assert!(z.im.abs() < 1e-14 && z.re > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn partition_function_is_positive(m in 1.0f64..6.0, lo in -2i64..1, len in 1i64..4, seed in any::<u64>()) {
        let p = ThermalParams::new(1.0, m);
        let cfg = RunConfig { seed, samples: 400, ..RunConfig::default() };
        let fz = f_and_z(&p, 1.0, &CovarianceModel::Thermal(p), &TestSource::zero(), Region::new(lo, lo + len).unwrap(), 2, &cfg).unwrap();
        for z in &fz.z {
            prop_assert!(z.value > -3.0 * z.std_error);
        }
        prop_assert!(fz.z_total.value > 0.0);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count(seed in any::<u64>(), n in 1usize..4) {
        let p = ThermalParams::default();
        let cfg = RunConfig { seed, samples: 3000, ..RunConfig::default() };
        let h = CutoffFunction::Interval { lo: 0.0, hi: 2.0 };
        let src = TestSource::tent(0.0, 1.0, 5, 0.5, 0.5).unwrap();
        let w = CovarianceModel::Thermal(p);
        let at = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| generating_term(&p, 1.0, &w, &src, &h, n, &cfg).unwrap())
        };
        prop_assert_eq!(at(1), at(3));
    }
}

proptest! {
    #[test]
    fn records_survive_json(
        vals in prop::collection::btree_map("[a-z_]{1,8}", prop_oneof![any::<f64>().prop_map(Cell::num), "[ -~]{0,12}".prop_map(Cell::Text)], 0..6),
        seed in any::<u64>(),
        workers in 1usize..64,
        row in prop::collection::vec(-1e300f64..1e300, 3),
    ) {
        let mut r = ResultRecord::new("gas smatrix", serde_json::json!({"seed": seed}), seed, workers);
        r.values = vals;
        r.table = Table::new(&["a", "b", "c"]);
        r.table.push(row.into_iter().map(Cell::num).collect());
        let back = ResultRecord::from_json(&r.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn flags_win_over_file(file_beta in 0.5f64..4.0, flag_beta in proptest::option::of(0.5f64..4.0), seed in any::<u64>()) {
        let file = ConfigLayer {
            params: ParamsSection { beta: Some(file_beta), ..Default::default() },
            run: RunSection { seed: Some(seed), ..Default::default() },
        };
        let flags = ConfigLayer { params: ParamsSection { beta: flag_beta, ..Default::default() }, ..Default::default() };
        let s = Settings::resolve(&file.overlay(&flags)).unwrap();
        prop_assert_eq!(s.params.beta, flag_beta.unwrap_or(file_beta));
        prop_assert_eq!(s.run.seed, seed);
    }
}
