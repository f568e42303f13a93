//! Normalized regular solutions of `f_zbar = μ f_z` for compactly supported
//! coefficients.
//!
//! The principal solution `z + T h` is built from the Neumann fixed point
//! `h = μ (1 + S h)` and then post-composed with the affine map pinning
//! `f(0) = 0` and `f(1) = 1`, which leaves the complex characteristic alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, GridSpec, RealField};
use crate::transforms::{cauchy_t_at, TransformPlan};

/// Largest accepted `sup |μ|`.
pub const MAX_K_SUP: f64 = 1.0 - 1e-6;

/// Smallest accepted `|f_raw(1) - f_raw(0)|`.
const MIN_NORMALIZATION_GAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    mu: ComplexField,
    k_sup: f64,
}

impl Coefficient {
    pub fn new(mu: ComplexField) -> Result<Self> {
        let k_sup = mu.sup_norm();
        if k_sup > MAX_K_SUP {
            return Err(Error::Coefficient(format!("sup |mu| = {k_sup} is not below 1 (limit {MAX_K_SUP})")));
        }
        mu.ensure_compact_support()?;
        Ok(Coefficient { mu, k_sup })
    }

    pub fn zero(spec: GridSpec) -> Self {
        Coefficient { mu: ComplexField::zeros(spec), k_sup: 0.0 }
    }

    pub fn mu(&self) -> &ComplexField {
        &self.mu
    }

    pub fn k_sup(&self) -> f64 {
        self.k_sup
    }

    pub fn spec(&self) -> &GridSpec {
        self.mu.spec()
    }

    /// Pointwise dilatation `(1 + |μ|) / (1 - |μ|)`.
    pub fn dilatation_field(&self) -> RealField {
        self.mu.map(|m| (1.0 + m.norm()) / (1.0 - m.norm()))
    }
}

/// Solver stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Relative stopping tolerance on `‖h^{m+1} - h^m‖₂ / ‖μ‖₂`.
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-12, max_terms: 400 }
    }
}

/// A normalized regular solution with its Wirtinger derivatives.
#[derive(Debug, Clone)]
pub struct Solution {
    coeff: Coefficient,
    f: ComplexField,
    f_z: ComplexField,
    f_zbar: ComplexField,
    density: ComplexField,
    origin: Complex64,
    scale: Complex64,
    neumann_terms: usize,
    increments: Vec<f64>,
    residual: f64,
    fd_residual: f64,
}

/// Scalar summary of a solve, written next to the field files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub k_sup: f64,
    pub neumann_terms: usize,
    pub residual: f64,
    pub fd_residual: f64,
    pub neumann_increment: f64,
    pub min_jacobian: f64,
}

impl Solution {
    pub fn coeff(&self) -> &Coefficient {
        &self.coeff
    }

    pub fn mu(&self) -> &ComplexField {
        self.coeff.mu()
    }

    pub fn spec(&self) -> &GridSpec {
        self.coeff.spec()
    }

    /// Map values at cell centers.
    pub fn f(&self) -> &ComplexField {
        &self.f
    }

    pub fn f_z(&self) -> &ComplexField {
        &self.f_z
    }

    pub fn f_zbar(&self) -> &ComplexField {
        &self.f_zbar
    }

    pub fn neumann_terms(&self) -> usize {
        self.neumann_terms
    }

    /// Relative Neumann increments, one per iteration.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Discrete L² norm of `f_zbar - μ f_z` over interior cells.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// The same defect with both derivatives taken by finite differences of
    /// `f`; a discretization diagnostic.
    pub fn fd_residual(&self) -> f64 {
        self.fd_residual
    }

    pub fn jacobian(&self) -> RealField {
        self.f_z.zip_with(&self.f_zbar, |a, b| a.norm_sqr() - b.norm_sqr()).expect("derivatives share a grid")
    }

    /// `f(z)` at an arbitrary point of the grid square, from the Cauchy
    /// integral of the solution's density. Exact at the normalization points.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if !self.spec().contains(z) {
            return Err(Error::OutsideGrid(z));
        }
        Ok((z + cauchy_t_at(&self.density, z) - self.origin) * self.scale)
    }

    /// `f(z)` by bilinear interpolation of the cell values.
    pub fn interpolate(&self, z: Complex64) -> Result<Complex64> {
        self.f.interpolate(z)
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            k_sup: self.coeff.k_sup(),
            neumann_terms: self.neumann_terms,
            residual: self.residual,
            fd_residual: self.fd_residual,
            neumann_increment: self.increments.last().copied().unwrap_or(0.0),
            min_jacobian: interior_min(&self.jacobian()),
        }
    }

    /// Writes `f`, `f_z` and `f_zbar` as CFLD files plus a JSON sidecar.
    pub fn save(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.f.save(dir.join(format!("{stem}_f.cfld")))?;
        self.f_z.save(dir.join(format!("{stem}_f_z.cfld")))?;
        self.f_zbar.save(dir.join(format!("{stem}_f_zbar.cfld")))?;
        let json = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(dir.join(format!("{stem}_summary.json")), json + "\n")?;
        Ok(())
    }
}

fn interior_min(field: &RealField) -> f64 {
    let n = field.spec().n();
    let mut min = f64::INFINITY;
    for row in 1..n - 1 {
        for col in 1..n - 1 {
            min = min.min(field.get(row, col));
        }
    }
    min
}

fn l2_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    a.sub(b).expect("same grid").l2_norm()
}

/// Solves `f_zbar = μ f_z` for the normalized principal solution.
pub fn solve(plan: &TransformPlan, coeff: &Coefficient, opts: SolveOptions) -> Result<Solution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Range(format!("solver tolerance must be positive, got {}", opts.tol)));
    }
    let spec = *coeff.spec();
    if plan.spec() != &spec {
        return Err(Error::GridMismatch);
    }
    let mu = coeff.mu();
    let mu_norm = mu.l2_norm();
    let one = Complex64::new(1.0, 0.0);

    // h^{m+1} = μ (1 + S h^m), h^0 = μ
    let mut h = mu.clone();
    let mut s_h = ComplexField::zeros(spec);
    let mut increments = Vec::new();
    if mu_norm > 0.0 {
        loop {
            s_h = plan.beurling_s(&h)?;
            let next = mu.zip_with(&s_h, |m, s| m * (one + s))?;
            let increment = l2_diff(&next, &h) / mu_norm;
            increments.push(increment);
            h = next;
            if increment <= opts.tol {
                break;
            }
            if increments.len() >= opts.max_terms {
                return Err(Error::Convergence { history: increments });
            }
        }
    }

    let z = ComplexField::coordinates(spec);
    let f_raw = z.add(&plan.cauchy_t(&h)?)?;
    // The normalization points may sit where f is not smooth, so evaluate the
    // principal solution there by direct quadrature rather than interpolation.
    let zero = Complex64::new(0.0, 0.0);
    let origin = plan.cauchy_t_at(&h, zero)?;
    let gap = one + plan.cauchy_t_at(&h, one)? - origin;
    if gap.norm() < MIN_NORMALIZATION_GAP {
        return Err(Error::DegenerateNormalization(gap.norm()));
    }
    let scale = gap.inv();
    let f = f_raw.map(|v| (v - origin) * scale);

    // ∂̄(z + T h) = h and ∂(z + T h) = 1 + S h, both rescaled by the
    // normalizing affine map.
    if mu_norm > 0.0 {
        s_h = plan.beurling_s(&h)?;
    }
    let f_z = s_h.map(|s| (one + s) * scale);
    let f_zbar = h.scale(scale);

    let (fd_z, fd_zbar) = f.fd_derivatives();
    let residual = f_zbar.sub(&mu.mul(&f_z)?)?.interior_l2_norm();
    let fd_residual = fd_zbar.sub(&mu.mul(&fd_z)?)?.interior_l2_norm();

    let solution = Solution {
        coeff: coeff.clone(),
        f,
        f_z,
        f_zbar,
        density: h,
        origin,
        scale,
        neumann_terms: increments.len(),
        increments,
        residual,
        fd_residual,
    };
    let jac = solution.jacobian();
    let bad: Vec<_> = (0..spec.len())
        .map(|idx| spec.cell_of_index(idx))
        .filter(|&(row, col)| spec.is_interior(row, col) && !(jac.get(row, col) > 0.0))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Regularity { cells: bad });
    }
    Ok(solution)
}

/// An outer map `g` seen through an inner solution: samples of `g∘f` and of
/// its Wirtinger derivatives at `f(z)`.
#[derive(Debug, Clone)]
pub struct ComposedSamples {
    pub values: ComplexField,
    pub g_w: ComplexField,
    pub g_wbar: ComplexField,
}

impl ComposedSamples {
    /// Samples a smooth outer map with known derivatives along `inner`.
    pub fn from_map(
        inner: &Solution,
        g: impl Fn(Complex64) -> Complex64,
        g_w: impl Fn(Complex64) -> Complex64,
        g_wbar: impl Fn(Complex64) -> Complex64,
    ) -> Self {
        let f = inner.f();
        ComposedSamples { values: f.map(&g), g_w: f.map(&g_w), g_wbar: f.map(&g_wbar) }
    }
}

/// Discrete L² norm over interior cells of
/// `(g∘f)_z - [(g_w∘f) f_z + (g_wbar∘f) conj(f_zbar)]`.
pub fn chain_rule_check(outer: &ComposedSamples, inner: &Solution) -> Result<f64> {
    let (composed_z, _) = outer.values.fd_derivatives();
    let predicted = outer.g_w.mul(inner.f_z())?.add(&outer.g_wbar.mul(&inner.f_zbar().conj())?)?;
    Ok(composed_z.sub(&predicted)?.interior_l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(Complex64::new(0.5, 0.0), 4.0, n).unwrap()
    }

    #[test]
    fn dilatation_arithmetic() {
        let s = spec(16);
        let zero = Coefficient::zero(s).dilatation_field();
        assert!(zero.values().iter().all(|&k| k == 1.0));
        let third = ComplexField::make(s, |z| {
            if z.norm() < 1.0 {
                Complex64::new(0.0, 1.0 / 3.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        let k = Coefficient::new(third).unwrap().dilatation_field();
        assert!(k.values().iter().any(|&v| (v - 2.0).abs() < 1e-14));
        let nine =
            ComplexField::make(s, |z| if z.norm() < 1.0 { Complex64::new(0.9, 0.0) } else { Complex64::new(0.0, 0.0) })
                .unwrap();
        let k = Coefficient::new(nine).unwrap().dilatation_field();
        assert!((k.max() - 19.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unit_modulus() {
        let s = spec(16);
        let mu =
            ComplexField::make(s, |z| if z.norm() < 1.0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
                .unwrap();
        assert!(matches!(Coefficient::new(mu), Err(Error::Coefficient(_))));
    }

    #[test]
    fn rejects_margin_support() {
        let s = spec(16);
        let mu = ComplexField::constant(s, Complex64::new(0.1, 0.0));
        assert!(matches!(Coefficient::new(mu), Err(Error::Support { .. })));
    }

    #[test]
    fn zero_coefficient_gives_identity() {
        let s = spec(32);
        let plan = TransformPlan::new(s);
        let sol = solve(&plan, &Coefficient::zero(s), SolveOptions::default()).unwrap();
        let z = ComplexField::coordinates(s);
        assert!(sol.f().sub(&z).unwrap().sup_norm() < 1e-13);
        assert!(sol.jacobian().values().iter().all(|j| (j - 1.0).abs() < 1e-13));
        assert_eq!(sol.neumann_terms(), 0);
    }

    #[test]
    fn non_convergence_reports_history() {
        let s = spec(32);
        let plan = TransformPlan::new(s);
        let mu =
            ComplexField::make(s, |z| if z.norm() < 1.0 { Complex64::new(0.5, 0.0) } else { Complex64::new(0.0, 0.0) })
                .unwrap();
        let err = solve(&plan, &Coefficient::new(mu).unwrap(), SolveOptions { tol: 1e-14, max_terms: 3 }).unwrap_err();
        match err {
            Error::Convergence { history } => assert_eq!(history.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_positive_tolerance() {
        let s = spec(16);
        let plan = TransformPlan::new(s);
        assert!(solve(&plan, &Coefficient::zero(s), SolveOptions { tol: 0.0, max_terms: 5 }).is_err());
    }
}
