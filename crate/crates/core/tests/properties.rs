use std::f64::consts::TAU;

use parabolic_core::disks::disk_radius;
use parabolic_core::maps::mobius_shift;
use parabolic_core::param::phi_n;
use parabolic_core::skew::example_family;
use parabolic_core::{
    mobius_n, BivariateFamily, ChartConstants, Complex64, PolynomialMap, SkewMap, SkewPoint,
};
use proptest::prelude::*;

fn complex(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Parameters with positive real part, where `1 + n t` stays away from 0.
fn right_half() -> impl Strategy<Value = Complex64> {
    (1e-3..4.0f64, -4.0..4.0f64).prop_map(|(re, im)| complex(re, im))
}

/// Points of `V_eps = {|z - eps| < eps}`.
fn in_domain(eps: f64) -> impl Strategy<Value = Complex64> {
    (0.0..0.999f64, 0.0..TAU)
        .prop_map(move |(r, a)| complex(eps, 0.0) + Complex64::from_polar(r * eps, a))
}

fn annulus(r: f64) -> impl Strategy<Value = Complex64> {
    (0.0..2.0f64, 0.0..TAU).prop_map(move |(e, a)| Complex64::from_polar(r * 10f64.powf(e), a))
}

fn small() -> impl Strategy<Value = Complex64> {
    (-0.5..0.5f64, -0.5..0.5f64).prop_map(|(re, im)| complex(re, im))
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #[test]
    fn mobius_composition(t in right_half(), a in 0u64..2000, b in 0u64..2000) {
        let lhs = mobius_n(mobius_n(t, b).unwrap(), a).unwrap();
        let rhs = mobius_n(t, a + b).unwrap();
        prop_assert!(rel(lhs, rhs) <= 8.0 * f64::EPSILON, "{lhs} vs {rhs}");
    }

    #[test]
    fn mobius_shift_inverts(t in right_half(), k in 1u64..100) {
        let back = mobius_shift(mobius_n(t, k).unwrap(), -(k as f64)).unwrap();
        prop_assert!(rel(back, t) <= 1e-12);
    }

    #[test]
    fn chart_round_trip_is_identical(w in annulus(8.0)) {
        let f = PolynomialMap::cubic();
        let chart = ChartConstants::for_map(&f).unwrap();
        let g = f.to_infinity(w, &chart).unwrap();
        let direct = Complex64::new(1.0, 0.0) / f.eval(Complex64::new(1.0, 0.0) / w).unwrap();
        prop_assert_eq!(g, direct);
    }

    #[test]
    fn disk_radius_law(n in 1u64..10_000_000) {
        // exp(-0.75 ln n) carries the rounding of ln n amplified by its size.
        let ln = (n as f64).ln();
        let expected = (-0.75 * ln).exp();
        let r = disk_radius(n);
        prop_assert!((r - expected).abs() <= f64::EPSILON * (1.0 + ln) * expected);
        let nf = n as f64;
        prop_assert!((r.powi(4) * nf * nf * nf - 1.0).abs() <= 8.0 * f64::EPSILON);
    }
}

/// The `A / |w|^2` remainder bound on 1000 seeded points of each annulus.
#[test]
fn chart_remainder_bound() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let (skew, _) = example_family();
    for f in [PolynomialMap::cubic(), skew.f0().clone()] {
        let chart = ChartConstants::for_map(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let m = chart.r * 10f64.powf(rng.random_range(0.0..2.0));
            let w = Complex64::from_polar(m, rng.random_range(0.0..TAU));
            let eta = f.to_infinity(w, &chart).unwrap() - w + 1.0;
            assert!(eta.norm() <= chart.a / w.norm_sqr(), "w = {w}: {eta}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn specialize_is_coherent(t in small(), z in small()) {
        let fam = example_family().0.family().clone();
        prop_assert_eq!(fam.specialize(t).eval(z).unwrap(), fam.eval(t, z).unwrap());
    }

    #[test]
    fn base_factorization(t in right_half(), z in small(), n in 0u64..200) {
        let (f, _) = example_family();
        let mut p = SkewPoint::new(t, z);
        for _ in 0..n {
            match f.step(p) {
                Ok(q) if q.z.norm() < 1e100 => p = q,
                _ => return Ok(()),
            }
        }
        let closed = mobius_n(t, n).unwrap();
        prop_assert!(rel(p.t, closed) <= 4.0 * n.max(1) as f64 * f64::EPSILON);
    }

    #[test]
    fn one_step_identity(t in in_domain(1.0 / 64.0), n in 0u64..1000) {
        let (f, x0) = example_family();
        let p = f.step(SkewPoint::new(mobius_n(t, n).unwrap(), x0)).unwrap();
        prop_assert!((p.t - mobius_n(t, n + 1).unwrap()).norm() < 1e-12);
        prop_assert!((p.z - mobius_n(t, n).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn reduction_to_one_variable(t in in_domain(1.0 / 16.0), n in 0u64..1000) {
        let cubic = PolynomialMap::cubic();
        let flat = SkewMap::new(BivariateFamily::constant(&cubic)).unwrap();
        prop_assert_eq!(flat.phi_n(t, n).unwrap(), phi_n(&cubic, t, n).unwrap());
    }

    #[test]
    fn finite_n_functional_identity(z in in_domain(1.0 / 16.0), n in 1u64..500) {
        let f = PolynomialMap::cubic();
        let lhs = phi_n(&f, mobius_shift(z, -1.0).unwrap(), n + 1).unwrap();
        let rhs = f.eval(phi_n(&f, z, n).unwrap()).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn mobius_map_parametrization_is_identity(z in in_domain(1.0 / 16.0), n in 0u64..10_000) {
        let f = PolynomialMap::mobius_special();
        prop_assert!((phi_n(&f, z, n).unwrap() - z).norm() <= 1e-12);
    }
}
