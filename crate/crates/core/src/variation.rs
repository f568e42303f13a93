//! First-order variations of a solution inside the constrained class.
//!
//! Moving the coefficient along `μ_ε = (1 - ε) μ + ε ν` changes the
//! normalized solution by
//!
//! ```text
//! f_ε(ζ) = f(ζ) - (ε/π) ∬ (ν - μ)(z) φ(f(z), f(ζ)) f_z(z)² dm_z + o(ε)
//! φ(w, w') = 1/(w - w') · w'/w · (w' - 1)/(w - 1)
//! ```
//!
//! This module evaluates that integral, the direction field `κ`, the series
//! `κ_ε` with its sup bound, and the algebra that recovers `μ_ε` from the
//! characteristic of the outer factor `g_ε` in `f_ε = g_ε ∘ f`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constraints::ConstraintFamily;
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::solver::{solve, Coefficient, Solution, SolveOptions};
use crate::transforms::TransformPlan;

/// Largest admissible variation parameter.
pub const MAX_EPSILON: f64 = 0.5;
/// Distance from a pole of the kernel treated as a hit.
pub const POLE_TOL: f64 = 1e-14;
/// Masking radius around kernel poles, in units of `h · max |f_z|`.
pub const MASK_CELLS: f64 = 3.0;
/// Pointwise tolerance for the composition identity.
pub const COMPOSITION_TOL: f64 = 1e-10;

/// An admissible direction `ν - μ` together with `κ = (ν - μ)/(1 - |μ|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationDirection {
    mu: ComplexField,
    nu: ComplexField,
    kappa: ComplexField,
    k_inf: f64,
}

impl VariationDirection {
    pub fn new(mu: &ComplexField, nu: &ComplexField, family: Option<&ConstraintFamily>) -> Result<Self> {
        mu.ensure_same_grid(nu)?;
        if mu.sup_norm() >= 1.0 {
            return Err(Error::Coefficient("sup |mu| must be below 1".into()));
        }
        let kappa = nu.zip_with(mu, |n, m| (n - m) / (1.0 - m.norm_sqr()))?;
        let k_inf = kappa.sup_norm();
        if k_inf >= 1.0 {
            return Err(Error::InadmissibleDirection { k_inf });
        }
        if let Some(fam) = family {
            let mut cells = fam.violations(mu)?;
            cells.extend(fam.violations(nu)?);
            if !cells.is_empty() {
                cells.sort_unstable();
                cells.dedup();
                return Err(Error::Constraint { reason: "mu or nu outside M(z)".into(), cells });
            }
        }
        Ok(VariationDirection { mu: mu.clone(), nu: nu.clone(), kappa, k_inf })
    }

    pub fn mu(&self) -> &ComplexField {
        &self.mu
    }

    pub fn nu(&self) -> &ComplexField {
        &self.nu
    }

    pub fn kappa(&self) -> &ComplexField {
        &self.kappa
    }

    /// `sup |κ|`.
    pub fn k_inf(&self) -> f64 {
        self.k_inf
    }

    /// `ν - μ`.
    pub fn delta(&self) -> ComplexField {
        self.nu.sub(&self.mu).expect("same grid")
    }

    /// `μ_ε = (1 - ε) μ + ε ν` for `ε ∈ [0, 1/2]`.
    pub fn mu_epsilon(&self, epsilon: f64) -> Result<ComplexField> {
        check_epsilon(epsilon)?;
        self.mu.zip_with(&self.nu, |m, n| m * (1.0 - epsilon) + n * epsilon)
    }

    /// `κ_ε = εκ / (1 - εκ conj(μ))`, plus the truncated geometric series
    /// `Σ_{m ≤ terms} εκ (εκ conj(μ))^m` when `terms > 0`.
    pub fn kappa_epsilon(&self, epsilon: f64, terms: usize) -> Result<KappaEpsilon> {
        check_epsilon(epsilon)?;
        let closed = self.kappa.zip_with(&self.mu, |k, m| {
            let ek = k * epsilon;
            ek / (1.0 - ek * m.conj())
        })?;
        let series = (terms > 0).then(|| {
            self.kappa
                .zip_with(&self.mu, |k, m| {
                    let ek = k * epsilon;
                    let ratio = ek * m.conj();
                    let mut power = Complex64::new(1.0, 0.0);
                    let mut sum = Complex64::new(0.0, 0.0);
                    for _ in 0..=terms {
                        sum += power;
                        power *= ratio;
                    }
                    ek * sum
                })
                .expect("same grid")
        });
        Ok(KappaEpsilon { closed, series })
    }

    /// `γ_ε ∘ f = κ_ε f_z / conj(f_z)`.
    pub fn gamma_along(&self, sol: &Solution, epsilon: f64) -> Result<ComplexField> {
        let kappa_eps = self.kappa_epsilon(epsilon, 0)?.closed;
        let rotation = rotation_field(sol)?;
        kappa_eps.mul(&rotation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaEpsilon {
    pub closed: ComplexField,
    pub series: Option<ComplexField>,
}

/// The sup bound `εk / (1 - εk)` on `|κ_ε|`.
pub fn kappa_epsilon_bound(k_inf: f64, epsilon: f64) -> f64 {
    epsilon * k_inf / (1.0 - epsilon * k_inf)
}

/// The ε-uniform bound `k / (2 - k)` on `|κ_ε|`, `ε ∈ [0, 1/2]`.
pub fn kappa_uniform_bound(k_inf: f64) -> f64 {
    k_inf / (2.0 - k_inf)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if (0.0..=MAX_EPSILON).contains(&epsilon) {
        Ok(())
    } else {
        Err(Error::Range(format!("epsilon {epsilon} outside [0, 1/2]")))
    }
}

/// The variation kernel `φ(w, w') = 1/(w - w') · w'/w · (w' - 1)/(w - 1)`.
pub fn kernel_phi(w: Complex64, w_prime: Complex64) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    if (w - w_prime).norm() < POLE_TOL || w.norm() < POLE_TOL || (w - one).norm() < POLE_TOL {
        return Err(Error::Singularity { w, w_prime });
    }
    Ok(phi_unchecked(w, w_prime))
}

pub(crate) fn phi_unchecked(w: Complex64, w_prime: Complex64) -> Complex64 {
    (w_prime / (w - w_prime)) * ((w_prime - 1.0) / (w * (w - 1.0)))
}

/// Masking radius `3 h max |f_z|` around the poles of the kernel in the
/// image plane.
pub fn mask_radius(sol: &Solution) -> f64 {
    MASK_CELLS * sol.spec().spacing() * sol.f_z().sup_norm()
}

fn rotation_field(sol: &Solution) -> Result<ComplexField> {
    let spec = *sol.spec();
    let mut bad = Vec::new();
    let values = sol
        .f_z()
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &fz)| {
            if fz.norm() < 1e-12 {
                bad.push(spec.cell_of_index(idx));
                Complex64::new(0.0, 0.0)
            } else {
                fz / fz.conj()
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::Regularity { cells: bad });
    }
    ComplexField::from_values(spec, values)
}

/// `V(ζ) = -(1/π) Σ (ν - μ)(z) φ(f(z), f(ζ)) f_z(z)² h²` at each target, so that
/// `f_ε(ζ) ≈ f(ζ) + ε V(ζ)`. Cells whose image lies within
/// [`mask_radius`] of `f(ζ)`, `0` or `1` are left out.
pub fn variation_field(sol: &Solution, dir: &VariationDirection, targets: &[Complex64]) -> Result<Vec<Complex64>> {
    if sol.spec() != dir.mu.spec() {
        return Err(Error::GridMismatch);
    }
    let images = targets.iter().map(|&zeta| sol.eval(zeta)).collect::<Result<Vec<_>>>()?;
    let spec = *sol.spec();
    let h2 = spec.spacing().powi(2);
    let radius = mask_radius(sol);
    let delta = dir.delta();
    // weight(z) = (ν - μ) f_z² h² on the support of ν - μ
    let support: Vec<(Complex64, Complex64)> = delta
        .values()
        .iter()
        .zip(sol.f().values().iter().zip(sol.f_z().values()))
        .filter(|(d, _)| d.norm() > 0.0)
        .map(|(&d, (&w, &fz))| (w, d * fz * fz * h2))
        .collect();
    Ok(images
        .par_iter()
        .map(|&w_prime| {
            let one = Complex64::new(1.0, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(w, weight) in &support {
                if (w - w_prime).norm() < radius || w.norm() < radius || (w - one).norm() < radius {
                    continue;
                }
                acc += weight * phi_unchecked(w, w_prime);
            }
            -acc / PI
        })
        .collect())
}

/// One row of a finite-difference convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub zeta: Complex64,
    /// `(f_ε(ζ) - f(ζ)) / ε` from a re-solve.
    pub finite_difference: Complex64,
    /// The predicted first variation `V(ζ)`.
    pub predicted: Complex64,
    pub abs_err: f64,
}

/// Re-solves with `μ_ε` for each `ε` and compares difference quotients with
/// the predicted first variation.
pub fn finite_difference_variation(
    plan: &TransformPlan,
    base: &Solution,
    dir: &VariationDirection,
    epsilons: &[f64],
    targets: &[Complex64],
    opts: SolveOptions,
) -> Result<Vec<ConvergenceRow>> {
    if let Some(&bad) = epsilons.iter().find(|&&e| !(e > 0.0 && e <= MAX_EPSILON)) {
        return Err(Error::Range(format!("epsilon {bad} outside (0, 1/2]")));
    }
    let predicted = variation_field(base, dir, targets)?;
    let base_values = targets.iter().map(|&z| base.eval(z)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(epsilons.len() * targets.len());
    for &epsilon in epsilons {
        let varied = solve(plan, &Coefficient::new(dir.mu_epsilon(epsilon)?)?, opts)?;
        for ((&zeta, &f0), &v) in targets.iter().zip(&base_values).zip(&predicted) {
            let fd = (varied.eval(zeta)? - f0) / epsilon;
            rows.push(ConvergenceRow { epsilon, zeta, finite_difference: fd, predicted: v, abs_err: (fd - v).norm() });
        }
    }
    Ok(rows)
}

/// Writes the table as CSV with columns
/// `epsilon,zeta_re,zeta_im,fd_re,fd_im,v_re,v_im,abs_err`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut out: W) -> Result<()> {
    writeln!(out, "epsilon,zeta_re,zeta_im,fd_re,fd_im,v_re,v_im,abs_err")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epsilon,
            r.zeta.re,
            r.zeta.im,
            r.finite_difference.re,
            r.finite_difference.im,
            r.predicted.re,
            r.predicted.im,
            r.abs_err
        )?;
    }
    Ok(())
}

/// Recovers `μ_{f_ε}` from the characteristic of the outer factor sampled
/// along `f`:
/// `μ_{f_ε} = (μ + (conj(f_z)/f_z) γ) / (1 + conj(μ) (conj(f_z)/f_z) γ)`.
pub fn composed_characteristic(gamma_along_f: &ComplexField, sol: &Solution) -> Result<ComplexField> {
    let rotation = rotation_field(sol)?;
    let spec = *sol.spec();
    let values = (0..spec.len())
        .map(|idx| {
            let mu = sol.mu().values()[idx];
            let g = rotation.values()[idx].conj() * gamma_along_f.values()[idx];
            (mu + g) / (1.0 + mu.conj() * g)
        })
        .collect();
    ComplexField::from_values(spec, values)
}

/// Largest pointwise gap between the composed characteristic built from
/// `γ_ε ∘ f` and `μ + εκ(1 - |μ|²)`; fails above [`COMPOSITION_TOL`].
pub fn composition_defect(sol: &Solution, dir: &VariationDirection, epsilon: f64) -> Result<f64> {
    if sol.mu() != dir.mu() {
        return Err(Error::Coefficient("direction is not based at the solution's coefficient".into()));
    }
    let composed = composed_characteristic(&dir.gamma_along(sol, epsilon)?, sol)?;
    let expected = dir.mu.zip_with(&dir.kappa, |m, k| m + k * epsilon * (1.0 - m.norm_sqr()))?;
    let gap = composed.sub(&expected)?.sup_norm();
    if gap > COMPOSITION_TOL {
        return Err(Error::Coefficient(format!("composition identity violated by {gap:e}")));
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec() -> GridSpec {
        GridSpec::new(c(0.5, 0.0), 4.0, 32).unwrap()
    }

    fn disk_field(s: GridSpec, v: Complex64) -> ComplexField {
        ComplexField::make(s, |z| if z.norm() < 1.0 { v } else { c(0.0, 0.0) }).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_phi(c(2.0, 0.0), c(-1.0, 0.0)).unwrap() - 1.0 / 3.0).norm() < 1e-16);
        assert_eq!(kernel_phi(c(0.3, 0.7), c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(kernel_phi(c(0.3, 0.7), c(1.0, 0.0)).unwrap(), c(0.0, 0.0));
        for w in [c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.5)] {
            assert!(matches!(kernel_phi(w, c(0.5, 0.5)), Err(Error::Singularity { .. })));
        }
    }

    #[test]
    fn zero_direction() {
        let mu = disk_field(spec(), c(0.2, 0.1));
        let dir = VariationDirection::new(&mu, &mu, None).unwrap();
        assert_eq!(dir.k_inf(), 0.0);
        assert_eq!(dir.mu_epsilon(0.0).unwrap(), mu);
    }

    #[test]
    fn kappa_from_zero_base() {
        let s = spec();
        let dir = VariationDirection::new(&ComplexField::zeros(s), &disk_field(s, c(0.4, 0.0)), None).unwrap();
        assert!((dir.k_inf() - 0.4).abs() < 1e-15);
        let half = dir.mu_epsilon(0.5).unwrap();
        assert!(half.values().iter().all(|v| v.norm() == 0.0 || (v - 0.2).norm() < 1e-15));
        let ke = dir.kappa_epsilon(0.3, 5).unwrap();
        // μ ≡ 0: the series is a single term
        let expected = dir.kappa().scale(c(0.3, 0.0));
        assert!(ke.closed.sub(&expected).unwrap().sup_norm() < 1e-16);
        assert!(ke.series.unwrap().sub(&expected).unwrap().sup_norm() < 1e-16);
        assert!(dir.kappa_epsilon(0.0, 0).unwrap().closed.sup_norm() == 0.0);
    }

    #[test]
    fn direction_outside_unit_ball_is_rejected() {
        let s = spec();
        let err =
            VariationDirection::new(&disk_field(s, c(0.5, 0.0)), &disk_field(s, c(-0.25, 0.0)), None).unwrap_err();
        match err {
            Error::InadmissibleDirection { k_inf } => assert!((k_inf - 1.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn epsilon_range() {
        let mu = disk_field(spec(), c(0.1, 0.0));
        let dir = VariationDirection::new(&mu, &mu, None).unwrap();
        assert!(matches!(dir.mu_epsilon(0.6), Err(Error::Range(_))));
        assert!(matches!(dir.mu_epsilon(-0.1), Err(Error::Range(_))));
        assert!(dir.kappa_epsilon(0.51, 0).is_err());
    }

    #[test]
    fn mu_epsilon_matches_kappa_form() {
        let s = spec();
        let mu = ComplexField::make(s, |z| if z.norm() < 1.0 { z * 0.3 } else { c(0.0, 0.0) }).unwrap();
        let nu = ComplexField::make(s, |z| if z.norm() < 1.0 { c(-0.2, 0.1) * z.conj() } else { c(0.0, 0.0) }).unwrap();
        let dir = VariationDirection::new(&mu, &nu, None).unwrap();
        for eps in [0.0, 0.1, 0.37, 0.5] {
            let direct = dir.mu_epsilon(eps).unwrap();
            let via_kappa = mu.zip_with(dir.kappa(), |m, k| m + k * eps * (1.0 - m.norm_sqr())).unwrap();
            assert!(direct.sub(&via_kappa).unwrap().sup_norm() < 1e-15);
        }
    }

    #[test]
    fn membership_checked_against_family() {
        let s = spec();
        let fam = ConstraintFamily::constant_disks(s, c(0.0, 0.0), 0.3, c(0.0, 0.0), 1.0).unwrap();
        let mu = ComplexField::zeros(s);
        assert!(VariationDirection::new(&mu, &disk_field(s, c(0.25, 0.0)), Some(&fam)).is_ok());
        let err = VariationDirection::new(&mu, &disk_field(s, c(0.35, 0.0)), Some(&fam)).unwrap_err();
        assert!(matches!(err, Error::Constraint { .. }));
    }
}
