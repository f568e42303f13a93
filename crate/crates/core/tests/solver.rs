mod common;

use beltrami::solver::{chain_rule_check, ComposedSamples};
use beltrami::{solve, Coefficient, ComplexField, SolveOptions, TransformPlan};
use common::{c, disk_indicator, grid, interior_sup_error, radial_stretch_map, radial_stretch_mu};
use num_complex::Complex64;
use std::f64::consts::PI;

fn opts() -> SolveOptions {
    SolveOptions { tol: 1e-12, max_terms: 400 }
}

#[test]
fn zero_coefficient_is_identity() {
    let spec = grid(64);
    let sol = solve(&TransformPlan::new(spec), &Coefficient::zero(spec), opts()).unwrap();
    assert!(interior_sup_error(sol.f(), |z| z) <= 1e-12);
    let j = sol.jacobian();
    assert!(j.values().iter().all(|&v| (v - 1.0).abs() <= 1e-12));
}

#[test]
fn radial_stretch_matches_closed_form_and_refines() {
    let k = 1.5;
    let errors: Vec<(f64, f64)> = [64, 128]
        .into_iter()
        .map(|n| {
            let spec = grid(n);
            let coeff = Coefficient::new(radial_stretch_mu(spec, k)).unwrap();
            let sol = solve(&TransformPlan::new(spec), &coeff, opts()).unwrap();
            assert!(sol.jacobian().min() > 0.0);
            (spec.spacing(), interior_sup_error(sol.f(), |z| radial_stretch_map(z, k)))
        })
        .collect();
    for &(h, err) in &errors {
        // max |∇f| of the radial stretch is (K+1)/2 at the rim
        assert!(err <= 0.5 * h * (k + 1.0) / 2.0 * 2.0, "h = {h}: {err}");
    }
    assert!(errors[0].1 / errors[1].1 >= 1.4, "{errors:?}");
}

/// Same discretization, assembled independently: naive separable DFTs on the
/// padded grid for `S`, and brute-force subsampled quadrature for `T`.
fn dense_principal_solution(mu: &ComplexField, points: &[Complex64]) -> Vec<Complex64> {
    let spec = mu.spec();
    let n = spec.n();
    let m = 2 * n;
    let dft = |buf: &mut Vec<Complex64>, sign: f64| {
        let twiddle: Vec<Complex64> =
            (0..m).map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / m as f64)).collect();
        for pass in 0..2 {
            let mut out = vec![c(0.0, 0.0); m * m];
            for a in 0..m {
                for k in 0..m {
                    let mut acc = c(0.0, 0.0);
                    for j in 0..m {
                        let v = if pass == 0 { buf[a * m + j] } else { buf[j * m + a] };
                        acc += v * twiddle[(j * k) % m];
                    }
                    if pass == 0 {
                        out[a * m + k] = acc
                    } else {
                        out[k * m + a] = acc
                    }
                }
            }
            *buf = out;
        }
    };
    let beurling = |h: &[Complex64]| -> Vec<Complex64> {
        let mut buf = vec![c(0.0, 0.0); m * m];
        for row in 0..n {
            for col in 0..n {
                buf[row * m + col] = h[row * n + col];
            }
        }
        dft(&mut buf, -1.0);
        let signed = |p: usize| if p < n { p as f64 } else { p as f64 - m as f64 };
        for row in 0..m {
            for col in 0..m {
                let xi = c(signed(col), signed(row));
                buf[row * m + col] =
                    if row == 0 && col == 0 { c(0.0, 0.0) } else { buf[row * m + col] * xi.conj() / xi };
            }
        }
        dft(&mut buf, 1.0);
        (0..n * n).map(|i| buf[(i / n) * m + i % n] / (m * m) as f64).collect()
    };
    let mut h = mu.values().to_vec();
    for _ in 0..200 {
        let s = beurling(&h);
        let next: Vec<Complex64> = mu.values().iter().zip(&s).map(|(m, s)| m * (1.0 + s)).collect();
        let change: f64 = next.iter().zip(&h).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        h = next;
        if change < 1e-14 {
            break;
        }
    }
    let sub = 128;
    let step = spec.spacing() / sub as f64;
    let cauchy = |zeta: Complex64| {
        let mut acc = c(0.0, 0.0);
        for (idx, &v) in h.iter().enumerate() {
            if v == c(0.0, 0.0) {
                continue;
            }
            let corner = spec.point(idx) - c(0.5, 0.5) * spec.spacing();
            for a in 0..sub {
                for b in 0..sub {
                    acc += v / (zeta - corner - c((a as f64 + 0.5) * step, (b as f64 + 0.5) * step));
                }
            }
        }
        acc * step * step / PI
    };
    let raw = |z: Complex64| z + cauchy(z);
    let (f0, f1) = (raw(c(0.0, 0.0)), raw(c(1.0, 0.0)));
    points.iter().map(|&z| (raw(z) - f0) / (f1 - f0)).collect()
}

#[test]
fn disk_indicator_solution_is_regular_and_matches_dense_solve() {
    let spec = grid(32);
    let mu = disk_indicator(spec, c(0.3, 0.0));
    let sol = solve(&TransformPlan::new(spec), &Coefficient::new(mu.clone()).unwrap(), opts()).unwrap();
    assert!(sol.residual() <= 1e-12, "residual {}", sol.residual());
    assert!(*sol.increments().last().unwrap() <= 1e-12);
    assert!(sol.jacobian().min() > 0.0);
    let points = [c(2.0, 0.0), c(-1.5, 1.5), c(0.5, -2.0), c(0.3, 0.4), c(-0.6, -0.2)];
    let dense = dense_principal_solution(&mu, &points);
    for (z, want) in points.iter().zip(dense) {
        let got = sol.eval(*z).unwrap();
        // the oracle's own midpoint error is about 1e-4 at interior points
        assert!((got - want).norm() < 2e-3 * spec.spacing(), "{z}: {got} vs {want}");
    }
}

#[test]
fn eval_pins_normalization_points() {
    let spec = grid(64);
    let coeff = Coefficient::new(radial_stretch_mu(spec, 2.0)).unwrap();
    let sol = solve(&TransformPlan::new(spec), &coeff, opts()).unwrap();
    assert!(sol.eval(c(0.0, 0.0)).unwrap().norm() < 1e-14);
    assert!((sol.eval(c(1.0, 0.0)).unwrap() - 1.0).norm() < 1e-14);
}

#[test]
fn chain_rule_defect_is_a_discretization_error() {
    let spec = grid(64);
    let h = spec.spacing();
    let plan = TransformPlan::new(spec);
    let identity = solve(&plan, &Coefficient::zero(spec), opts()).unwrap();
    let one = |_| c(1.0, 0.0);
    let zero = |_| c(0.0, 0.0);
    let id = ComposedSamples::from_map(&identity, |w| w, one, zero);
    assert!(chain_rule_check(&id, &identity).unwrap() <= h);
    let (a, b) = (c(2.0, -1.0), c(0.5, 0.5));
    let affine = ComposedSamples::from_map(&identity, |w| a * w + b, |_| a, zero);
    assert!(chain_rule_check(&affine, &identity).unwrap() <= h);

    let defects: Vec<f64> = [64, 128, 256]
        .into_iter()
        .map(|n| {
            let spec = grid(n);
            let inner =
                solve(&TransformPlan::new(spec), &Coefficient::new(radial_stretch_mu(spec, 1.5)).unwrap(), opts())
                    .unwrap();
            let square = ComposedSamples::from_map(&inner, |w| w * w, |w| 2.0 * w, zero);
            chain_rule_check(&square, &inner).unwrap()
        })
        .collect();
    assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
}
