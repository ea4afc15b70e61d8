use proptest::prelude::*;
use smallcap_core::sharpness::{random_phase_coeffs, random_sign_coeffs};
use smallcap_core::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn disc_coeffs(max_n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((0.0f64..=1.0, 0.0f64..1.0), 1..=max_n).prop_map(|v| {
        v.into_iter()
            .map(|(r, t)| Complex64::from_polar(r, std::f64::consts::TAU * t))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_moment_is_real_and_nonnegative(c in disc_coeffs(14), s in 1usize..=3, sigma in 0.0f64..2.0, h0 in -2.0f64..2.0) {
        let spec = ExpSumSpec::new(c, sigma, h0).unwrap();
        let m = moment_exact(&spec, s, &Limits::default()).unwrap();
        prop_assert!(m.value >= -1e-12);
        prop_assert!(m.err_estimate <= 1e-9 * m.value.max(1.0));
    }

    #[test]
    fn grouped_equals_pairwise(c in disc_coeffs(8), s in 1usize..=3, sigma in 0.0f64..2.0, h0 in -1.0f64..1.0) {
        let spec = ExpSumSpec::new(c, sigma, h0).unwrap();
        let e = moment_exact(&spec, s, &Limits::default()).unwrap().value;
        let b = moment_brute(&spec, s, &Limits::default()).unwrap().value;
        prop_assert!((e - b).abs() <= 1e-10 * e.abs().max(b.abs()).max(1e-300), "{e} vs {b}");
    }

    #[test]
    fn full_period_counts_solutions(n in 1usize..=40, s in 1usize..=3) {
        let spec = ExpSumSpec::constant(n, 0.0, 0.0).unwrap();
        let m = moment_exact(&spec, s, &Limits::default()).unwrap().value;
        let count = vinogradov_count(n, s, &Limits::default()).unwrap() as f64;
        prop_assert!(rel(m, count) <= 1e-6);
    }

    #[test]
    fn coefficient_rescaling(c in disc_coeffs(12), s in 1usize..=3, lambda in 0.05f64..=1.0, sigma in 0.0f64..2.0) {
        let spec = ExpSumSpec::new(c, sigma, 0.3).unwrap();
        let m = moment_exact(&spec, s, &Limits::default()).unwrap().value;
        let ms = moment_exact(&spec.scaled(lambda).unwrap(), s, &Limits::default()).unwrap().value;
        prop_assert!((ms - lambda.powi(2 * s as i32) * m).abs() <= 1e-10 * m.max(1e-300));
    }

    #[test]
    fn quadrature_matches_even_moments(c in disc_coeffs(8), s in 1usize..=2, sigma in 0.0f64..2.0, h0 in -1.0f64..1.0) {
        let spec = ExpSumSpec::new(c, sigma, h0).unwrap();
        let e = moment_exact(&spec, s, &Limits::default()).unwrap().value;
        let p = 2.0 * s as f64;
        let grid = QuadratureGrid::for_spec(&spec, p, 4.0).unwrap();
        let q = moment_quadrature(&spec, p, &grid, &Limits::default()).unwrap();
        // round-off floor: both estimates can land at machine precision
        prop_assert!((q.value - e).abs() <= 3.0 * q.err_estimate + 1e-12 * e.max(1.0), "{} vs {e} (err {})", q.value, q.err_estimate);
    }

    #[test]
    fn refinement_does_not_increase_error(seed in 0u64..1000, n in 2usize..=10, s in 1usize..=2, sigma in 0.2f64..2.0) {
        let spec = ExpSumSpec::new(random_phase_coeffs(n, seed), sigma, 0.1).unwrap();
        let p = 2.0 * s as f64;
        let coarse = QuadratureGrid::for_spec(&spec, p, 1.0).unwrap();
        let fine = QuadratureGrid::for_spec(&spec, p, 2.0).unwrap();
        let a = moment_quadrature(&spec, p, &coarse, &Limits::default()).unwrap();
        let b = moment_quadrature(&spec, p, &fine, &Limits::default()).unwrap();
        prop_assert!(b.err_estimate <= a.err_estimate + 1e-12 * b.value.max(1.0));
    }

    #[test]
    fn holder_between_second_and_fourth(seed in 0u64..1000, n in 1usize..=12, sigma in 0.0f64..2.0, p in 1.0f64..3.0) {
        let spec = ExpSumSpec::new(random_phase_coeffs(n, seed), sigma, 0.0).unwrap();
        let vol = spec.h_len();
        let avg = |q: f64| {
            let g = QuadratureGrid::for_spec(&spec, q, 4.0).unwrap();
            moment_quadrature(&spec, q, &g, &Limits::default()).unwrap().value / vol
        };
        let (m2, m4, mp) = (avg(2.0), avg(4.0), avg(p));
        prop_assert!(m2.sqrt() <= m4.powf(0.25) * (1.0 + 1e-9));
        // log-convexity in the exponent places p between its neighbours
        if p <= 2.0 {
            prop_assert!(mp.powf(1.0 / p) <= m2.sqrt() * (1.0 + 1e-6));
        } else {
            prop_assert!(m2.sqrt() <= mp.powf(1.0 / p) * (1.0 + 1e-6));
        }
    }
}

#[test]
fn h_translation_envelope() {
    for (n, s, sigma) in [(8usize, 2usize, 1.0), (12, 3, 2.0), (20, 2, 0.5)] {
        for seed in [1u64, 2] {
            let coeffs = random_sign_coeffs(n, seed);
            let vals: Vec<f64> = (0..10)
                .map(|i| {
                    let h0 = 0.137 * i as f64 - 0.6;
                    let spec = ExpSumSpec::new(coeffs.clone(), sigma, h0).unwrap();
                    moment_exact(&spec, s, &Limits::default()).unwrap().value
                })
                .collect();
            let hi = vals.iter().copied().fold(f64::MIN, f64::max);
            let lo = vals.iter().copied().fold(f64::MAX, f64::min);
            assert!(hi / lo < 10.0, "N={n} s={s} sigma={sigma}: {vals:?}");
        }
    }
}

#[test]
fn envelope_sandwich() {
    for n in [4usize, 8, 16] {
        for s in 1..=3 {
            let spec = ExpSumSpec::constant(n, 1.0, 0.0).unwrap();
            let full = moment_exact(&spec, s, &Limits::default()).unwrap().value;
            let part = sharpness::interference_lower_bound(&spec, s, &Limits::default()).unwrap();
            assert!(part.value <= full * (1.0 + 1e-9), "N={n} s={s}");
            assert!(part.ratio >= part.floor);
        }
    }
}

#[test]
fn periodicity_identity_small_cases() {
    for n in 1..=2 {
        for sigma in [0.0, 1.0] {
            let spec = ExpSumSpec::new(random_sign_coeffs(n, 5), sigma, 0.0).unwrap();
            let r = periodicity_identity_check(&spec, 1, 4.0, &Limits::default()).unwrap();
            assert!(r <= 1e-3, "N={n} sigma={sigma}: {r}");
        }
    }
    let too_big = ExpSumSpec::constant(5, 0.0, 0.0).unwrap();
    assert!(periodicity_identity_check(&too_big, 1, 4.0, &Limits::default()).is_err());
}
