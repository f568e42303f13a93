mod common;

use approx::assert_relative_eq;
use beltrami::field::ComplexField;
use beltrami::TransformPlan;
use common::{c, disk_indicator, grid};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// `(1/π) ∬ h(z)/(ζ - z)` by brute-force midpoint subsampling of every cell.
fn dense_cauchy(h: &ComplexField, zeta: Complex64, sub: usize) -> Complex64 {
    let spec = h.spec();
    let step = spec.spacing() / sub as f64;
    let mut acc = c(0.0, 0.0);
    for (idx, &v) in h.values().iter().enumerate() {
        if v == c(0.0, 0.0) {
            continue;
        }
        let corner = spec.point(idx) - c(0.5, 0.5) * spec.spacing();
        for a in 0..sub {
            for b in 0..sub {
                let z = corner + c((a as f64 + 0.5) * step, (b as f64 + 0.5) * step);
                acc += v / (zeta - z);
            }
        }
    }
    acc * step * step / PI
}

fn sample_points(rng: &mut ChaCha8Rng, inside: bool, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|_| {
            let r = if inside { rng.gen_range(0.05..0.85) } else { rng.gen_range(1.2..2.5) };
            Complex64::from_polar(r, rng.gen_range(0.0..2.0 * PI))
        })
        .collect()
}

#[test]
fn zero_density_transforms_to_zero() {
    let spec = grid(32);
    let plan = TransformPlan::new(spec);
    let zero = ComplexField::zeros(spec);
    assert_eq!(plan.cauchy_t(&zero).unwrap().sup_norm(), 0.0);
    assert_eq!(plan.beurling_s(&zero).unwrap().sup_norm(), 0.0);
}

#[test]
fn cauchy_of_disk_matches_analytic_and_dense_quadrature() {
    let spec = grid(128);
    let h = spec.spacing();
    let plan = TransformPlan::new(spec);
    let chi = disk_indicator(spec, c(1.0, 0.0));
    let t = plan.cauchy_t(&chi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (inside, points) in [(true, sample_points(&mut rng, true, 10)), (false, sample_points(&mut rng, false, 10))] {
        for zeta in points {
            let analytic = if inside { zeta.conj() } else { zeta.inv() };
            let direct = plan.cauchy_t_at(&chi, zeta).unwrap();
            assert!((direct - analytic).norm() <= 5.0 * h, "{zeta}: {direct} vs {analytic}");
            let dense = dense_cauchy(&chi, zeta, 4);
            assert!((direct - dense).norm() <= 5.0 * h, "{zeta}: {direct} vs dense {dense}");
            // The FFT transform at cell centers agrees with the direct sum.
            let idx = nearest_cell(&spec, zeta);
            let center = spec.point(idx);
            let at_center = plan.cauchy_t_at(&chi, center).unwrap();
            assert!((t.values()[idx] - at_center).norm() < 1e-10);
        }
    }
}

fn nearest_cell(spec: &beltrami::GridSpec, z: Complex64) -> usize {
    (0..spec.len()).min_by(|&a, &b| (spec.point(a) - z).norm().total_cmp(&(spec.point(b) - z).norm())).unwrap()
}

#[test]
fn beurling_of_disk_is_zero_inside_and_minus_inverse_square_outside() {
    let spec = grid(256);
    let h = spec.spacing();
    let plan = TransformPlan::new(spec);
    let s = plan.beurling_s(&disk_indicator(spec, c(1.0, 0.0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for zeta in sample_points(&mut rng, true, 5).into_iter().chain(sample_points(&mut rng, false, 5)) {
        let idx = nearest_cell(&spec, zeta);
        let z = spec.point(idx);
        let oracle = if z.norm() < 1.0 { c(0.0, 0.0) } else { -z.powi(-2) };
        let distance_to_rim = (z.norm() - 1.0).abs();
        // Discrete derivative of a jump: the error decays away from the rim.
        let tol = 2.0 * h / distance_to_rim.max(h);
        assert!((s.values()[idx] - oracle).norm() <= tol, "{z}: {} vs {oracle}", s.values()[idx]);
    }
}

#[test]
fn beurling_is_an_isometry_on_mean_zero_data() {
    let spec = grid(64);
    let plan = TransformPlan::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values: Vec<Complex64> =
        (0..spec.len()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let h = ComplexField::from_values(spec, values).unwrap();
    let support =
        ComplexField::make(spec, |z| if (z - spec.center()).norm() < 1.5 { c(1.0, 0.0) } else { c(0.0, 0.0) }).unwrap();
    let h = h.mul(&support).unwrap();
    let mean = h.integrate() / support.integrate();
    let h = h.sub(&support.scale(mean)).unwrap();
    assert!(h.integrate().norm() < 1e-12);
    let s = plan.beurling_s_padded(&h).unwrap();
    assert_relative_eq!(s.l2_norm(), h.l2_norm(), max_relative = 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn transforms_are_linear(a_re in -2.0..2.0f64, a_im in -2.0..2.0f64, b_re in -2.0..2.0f64, seed in 0u64..1000) {
        let spec = grid(16);
        let plan = TransformPlan::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || {
            let values: Vec<Complex64> = (0..spec.len()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = ComplexField::from_values(spec, values).unwrap();
            f.zip_with(&disk_indicator(spec, c(1.0, 0.0)), |u, m| u * m).unwrap()
        };
        let (u, v) = (random(), random());
        let (a, b) = (c(a_re, a_im), c(b_re, 0.0));
        let combo = u.scale(a).add(&v.scale(b)).unwrap();
        for op in [TransformPlan::cauchy_t, TransformPlan::beurling_s] {
            let lhs = op(&plan, &combo).unwrap();
            let rhs = op(&plan, &u).unwrap().scale(a).add(&op(&plan, &v).unwrap().scale(b)).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn cfld_round_trip_is_exact(seed in 0u64..1000) {
        let spec = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Complex64> = (0..spec.len()).map(|_| c(rng.gen(), rng.gen::<f64>() * 1e300)).collect();
        let f = ComplexField::from_values(spec, values).unwrap();
        let mut bytes = Vec::new();
        f.write_cfld(&mut bytes).unwrap();
        prop_assert_eq!(ComplexField::read_cfld(bytes.as_slice()).unwrap(), f);
    }
}
