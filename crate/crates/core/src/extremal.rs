//! Functionals given by finite atomic measures, the gradient densities
//! `A(w)` and `B(z) = A(f(z)) f_z²`, the necessary conditions an extremal of
//! `max Ω` must satisfy, and a damped fixed-point search for disk families.
//!
//! A functional `Ω(f) = Re Σ c_j f(ζ_j)` changes under a variation
//! `f_ε = f + ε V + o(ε)` by `ε Re Σ c_j V(ζ_j)`, which rewrites as
//! `-ε h² Re Σ_z (ν - μ)(z) B(z)`. At a maximum this is never positive, so
//! `Re ω B(z) ≥ 0` for every admissible direction `ω` and `μ(z)` sits on
//! `∂M(z)` wherever `B ≠ 0`. For disks that pins
//! `μ = c - k conj(B)/|B|`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintFamily;
use crate::error::{CellId, Error, Result};
use crate::field::{ComplexField, MaskedField, RealField};
use crate::solver::{solve, Coefficient, Solution, SolveOptions};
use crate::transforms::TransformPlan;
use crate::variation::{mask_radius, phi_unchecked, variation_field, VariationDirection};

/// `|A| ≤ DEGENERACY_FLOOR · max|A|` counts as vanishing.
pub const DEGENERACY_FLOOR: f64 = 1e-12;
/// Fraction of vanishing cells above which a functional is degenerate.
pub const DEGENERACY_FRACTION: f64 = 0.01;
/// Allowed relative gap between the two forms of the Euler defect.
pub const EULER_FORM_TOL: f64 = 1e-9;
/// Consecutive step-change increases treated as oscillation.
const OSCILLATION_RUN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub zeta: Complex64,
    pub weight: Complex64,
}

/// `Ω(f) = Re Σ c_j f(ζ_j)`, whose derivative measure is `Σ c_j δ_{ζ_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    atoms: Vec<Atom>,
}

impl Functional {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Functional("at least one atom is required".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            let finite = [a.zeta.re, a.zeta.im, a.weight.re, a.weight.im].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Functional(format!("atom {i} is not finite")));
            }
            if atoms[..i].iter().any(|b| b.zeta == a.zeta) {
                return Err(Error::Functional(format!("atom {i} repeats point {}", a.zeta)));
            }
        }
        Ok(Functional { atoms })
    }

    pub fn single(zeta: Complex64, weight: Complex64) -> Self {
        Functional { atoms: vec![Atom { zeta, weight }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Atoms sitting on a normalization point, where every variation vanishes.
    pub fn pinned_atoms(&self) -> Vec<usize> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.zeta == Complex64::new(0.0, 0.0) || a.zeta == Complex64::new(1.0, 0.0))
            .map(|(i, _)| i)
            .collect()
    }

    /// Flips the sign of every weight, turning `min Ω` into `max (-Ω)`.
    pub fn negated(&self) -> Self {
        Functional { atoms: self.atoms.iter().map(|a| Atom { zeta: a.zeta, weight: -a.weight }).collect() }
    }

    pub fn evaluate(&self, sol: &Solution) -> Result<f64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &self.atoms {
            acc += a.weight * sol.eval(a.zeta)?;
        }
        Ok(acc.re)
    }

    /// `Re Σ c_j V(ζ_j)`: the predicted rate of change of `Ω` along `dir`.
    pub fn gateaux_derivative(&self, sol: &Solution, dir: &VariationDirection) -> Result<f64> {
        let targets: Vec<_> = self.atoms.iter().map(|a| a.zeta).collect();
        let v = variation_field(sol, dir, &targets)?;
        Ok(self.atoms.iter().zip(v).map(|(a, v)| a.weight * v).sum::<Complex64>().re)
    }

    /// `A(w) = (1/π) Σ c_j φ(w, f(ζ_j))` at the points `w`; cells within the
    /// masking radius of `0`, `1` or any `f(ζ_j)` are excluded.
    pub fn field_a(&self, sol: &Solution, w: &ComplexField) -> Result<MaskedField> {
        let images: Vec<(Complex64, Complex64)> =
            self.atoms.iter().map(|a| Ok((sol.eval(a.zeta)?, a.weight))).collect::<Result<_>>()?;
        let radius = mask_radius(sol);
        let one = Complex64::new(1.0, 0.0);
        let (values, valid): (Vec<Complex64>, Vec<bool>) = w
            .values()
            .par_iter()
            .map(|&w| {
                let near_pole = w.norm() < radius
                    || (w - one).norm() < radius
                    || images.iter().any(|(img, _)| (w - img).norm() < radius);
                if near_pole {
                    (Complex64::new(0.0, 0.0), false)
                } else {
                    let sum: Complex64 = images.iter().map(|&(img, c)| c * phi_unchecked(w, img)).sum();
                    (sum / PI, true)
                }
            })
            .unzip();
        MaskedField::new(ComplexField::from_values(*w.spec(), values)?, valid)
    }

    /// `B(z) = A(f(z)) f_z(z)²`, masked where `A∘f` is masked or `f_z`
    /// vanishes.
    pub fn field_b(&self, sol: &Solution) -> Result<MaskedField> {
        let a = self.field_a(sol, sol.f())?;
        Ok(b_from_a(&a, sol))
    }
}

fn b_from_a(a_on_f: &MaskedField, sol: &Solution) -> MaskedField {
    let spec = *sol.spec();
    let mut valid = a_on_f.valid().to_vec();
    let values = (0..spec.len())
        .map(|idx| {
            let fz = sol.f_z().values()[idx];
            if fz.norm() < 1e-12 {
                valid[idx] = false;
            }
            a_on_f.field().values()[idx] * fz * fz
        })
        .collect();
    MaskedField::new(ComplexField::from_values(spec, values).expect("finite"), valid).expect("same grid")
}

/// Whether `|A| ≤ 1e-12 max|A|` on more than 1% of the unmasked cells.
pub fn is_degenerate(a: &MaskedField) -> bool {
    let floor = DEGENERACY_FLOOR * a.max_abs();
    let (mut unmasked, mut vanishing) = (0usize, 0usize);
    for idx in 0..a.spec().len() {
        if let Some(v) = a.get(idx) {
            unmasked += 1;
            if v.norm() <= floor {
                vanishing += 1;
            }
        }
    }
    unmasked == 0 || vanishing as f64 > DEGENERACY_FRACTION * unmasked as f64
}

/// Cells where the necessary conditions bind: unmasked with
/// `|B| > active_tol · max|B|`.
pub fn active_cells(b: &MaskedField, active_tol: f64) -> Vec<usize> {
    let threshold = active_tol * b.max_abs();
    (0..b.spec().len()).filter(|&idx| b.get(idx).is_some_and(|v| v.norm() > threshold)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxPrincipleReport {
    pub active_cells: usize,
    pub max_distance: f64,
    pub mean_distance: f64,
    pub passed: bool,
}

/// Distance from `μ(z)` to `∂M(z)` over active cells; passes when the
/// largest is at most `boundary_tol`.
pub fn check_max_principle(
    mu: &ComplexField,
    fam: &ConstraintFamily,
    b: &MaskedField,
    active_tol: f64,
    boundary_tol: f64,
) -> Result<MaxPrincipleReport> {
    ensure_grids(mu, fam, b)?;
    let active = active_cells(b, active_tol);
    let mut max_distance: f64 = 0.0;
    let mut total = 0.0;
    for &idx in &active {
        let d = fam.cell(idx).boundary_distance(mu.values()[idx]);
        max_distance = max_distance.max(d);
        total += d;
    }
    let mean_distance = if active.is_empty() { 0.0 } else { total / active.len() as f64 };
    Ok(MaxPrincipleReport {
        active_cells: active.len(),
        max_distance,
        mean_distance,
        passed: max_distance <= boundary_tol,
    })
}

fn ensure_grids(mu: &ComplexField, fam: &ConstraintFamily, b: &MaskedField) -> Result<()> {
    if mu.spec() != fam.spec() || mu.spec() != b.spec() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    /// `min Re(ω B(z))` over active cells and sampled admissible `ω`;
    /// `+∞` when no direction was tested.
    pub min_value: f64,
    pub worst_cell: Option<CellId>,
    pub worst_direction: Option<[f64; 2]>,
    pub max_abs_b: f64,
    pub tested: usize,
    pub passed: bool,
}

/// Worst case of `Re(ω B(z))` over sampled admissible directions; passes
/// when it is at least `-direction_tol · max|B|`.
pub fn check_directions(
    mu: &ComplexField,
    fam: &ConstraintFamily,
    b: &MaskedField,
    samples: usize,
    active_tol: f64,
    direction_tol: f64,
) -> Result<DirectionReport> {
    ensure_grids(mu, fam, b)?;
    fam.ensure_contains(mu)?;
    let spec = *mu.spec();
    let mut min_value = f64::INFINITY;
    let mut worst = None;
    let mut tested = 0;
    for idx in active_cells(b, active_tol) {
        let bz = b.field().values()[idx];
        for omega in fam.cone_directions(idx, mu.values()[idx], samples)? {
            tested += 1;
            let v = (omega * bz).re;
            if v < min_value {
                min_value = v;
                worst = Some((spec.cell_of_index(idx), omega));
            }
        }
    }
    let max_abs_b = b.max_abs();
    Ok(DirectionReport {
        min_value,
        worst_cell: worst.map(|w| w.0),
        worst_direction: worst.map(|w| [w.1.re, w.1.im]),
        max_abs_b,
        tested,
        passed: min_value >= -direction_tol * max_abs_b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerDefect {
    /// Pointwise defect on active cells, zero elsewhere.
    pub field: RealField,
    /// Discrete L² norm over active cells.
    pub l2: f64,
    pub max: f64,
    /// Largest `|form₁ - form₂| / |f_z|` between the derivative form and the
    /// coefficient form of the defect.
    pub form_gap: f64,
    pub active_cells: usize,
}

/// Defect of `f_zbar = c f_z - k (conj(A∘f)/|A∘f|) conj(f_z)` on active
/// cells; requires a disk family.
pub fn euler_defect(
    mu: &ComplexField,
    fam: &ConstraintFamily,
    sol: &Solution,
    b: &MaskedField,
    active_tol: f64,
) -> Result<EulerDefect> {
    ensure_grids(mu, fam, b)?;
    let ConstraintFamily::Disks { centers, radii } = fam else {
        return Err(Error::Constraint { reason: "the Euler equation needs a disk family".into(), cells: vec![] });
    };
    let spec = *mu.spec();
    if b.max_abs() == 0.0 {
        return Err(Error::Degeneracy("B vanishes identically".into()));
    }
    let mut field = vec![0.0; spec.len()];
    let mut sum_sq = 0.0;
    let mut max: f64 = 0.0;
    let mut form_gap: f64 = 0.0;
    let active = active_cells(b, active_tol);
    for &idx in &active {
        let (c, k) = (centers.values()[idx], radii.values()[idx]);
        let bz = b.field().values()[idx];
        let fz = sol.f_z().values()[idx];
        let a = bz / (fz * fz);
        let from_derivatives = (sol.f_zbar().values()[idx] - c * fz + k * (a.conj() / a.norm()) * fz.conj()).norm();
        let from_coefficient = (mu.values()[idx] - c + k * bz.conj() / bz.norm()).norm() * fz.norm();
        form_gap = form_gap.max((from_derivatives - from_coefficient).abs() / fz.norm());
        field[idx] = from_coefficient;
        sum_sq += from_coefficient * from_coefficient;
        max = max.max(from_coefficient);
    }
    if form_gap > EULER_FORM_TOL {
        return Err(Error::Coefficient(format!(
            "Euler defect forms disagree by {form_gap:e}; mu is not the solution's coefficient"
        )));
    }
    let h = spec.spacing();
    Ok(EulerDefect {
        field: RealField::from_values(spec, field)?,
        l2: (h * h * sum_sq).sqrt(),
        max,
        form_gap,
        active_cells: active.len(),
    })
}

/// Per-iteration record of a fixed-point run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub iteration: usize,
    pub omega_value: f64,
    pub boundary_residual: f64,
    pub euler_residual: f64,
    pub step_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointOptions {
    /// Damping `θ ∈ (0, 1]`.
    pub theta: f64,
    /// Converged once the L² step change is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { theta: 0.5, tol: 1e-6, max_iter: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointRun {
    /// The last coefficient whose solve produced a report.
    pub mu: ComplexField,
    pub solution: Solution,
    pub b: MaskedField,
    pub reports: Vec<ExtremalReport>,
    pub converged: bool,
}

/// Damped iteration `μ ← (1 - θ) μ + θ (c - k conj(B)/|B|)` from `μ⁰ = c`.
/// Cells where `B` is masked or below `1e-12 max|B|` keep their value. Once a
/// step is at most `tol`, one undamped step is taken and its solution closes
/// the run.
pub fn run_fixed_point(
    plan: &TransformPlan,
    fam: &ConstraintFamily,
    functional: &Functional,
    opts: FixedPointOptions,
    solve_opts: SolveOptions,
) -> Result<FixedPointRun> {
    let ConstraintFamily::Disks { centers, radii } = fam else {
        return Err(Error::Constraint {
            reason: "the fixed-point iteration needs a disk family".into(),
            cells: vec![],
        });
    };
    if !(opts.theta > 0.0 && opts.theta <= 1.0) {
        return Err(Error::Range(format!("damping {} outside (0, 1]", opts.theta)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Range("fixed-point tolerance must be positive".into()));
    }
    let spec = *fam.spec();
    let h = spec.spacing();
    let mut mu = centers.clone();
    let mut reports: Vec<ExtremalReport> = Vec::new();
    let fail = |source: Error, reports: &[ExtremalReport]| Error::FixedPoint {
        source: Box::new(source),
        reports: reports.to_vec(),
    };

    let mut polished = false;
    for iteration in 0.. {
        let step = (|| -> Result<_> {
            let sol = solve(plan, &Coefficient::new(mu.clone())?, solve_opts)?;
            let a = functional.field_a(&sol, sol.f())?;
            if is_degenerate(&a) {
                return Err(Error::Degeneracy("A(f(z)) vanishes on more than 1% of cells".into()));
            }
            let b = b_from_a(&a, &sol);
            let omega = functional.evaluate(&sol)?;
            let boundary = check_max_principle(&mu, fam, &b, DEGENERACY_FLOOR, 0.0)?;
            let euler = euler_defect(&mu, fam, &sol, &b, DEGENERACY_FLOOR)?;
            Ok((sol, b, omega, boundary.max_distance, euler.l2))
        })();
        let (sol, b, omega_value, boundary_residual, euler_residual) = step.map_err(|e| fail(e, &reports))?;

        let next = damped_step(&mu, centers, radii, &b, opts.theta);
        let step_change = (h * h * next.iter().zip(mu.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()).sqrt();
        reports.push(ExtremalReport { iteration, omega_value, boundary_residual, euler_residual, step_change });

        if polished {
            return Ok(FixedPointRun { mu, solution: sol, b, reports, converged: true });
        }
        if step_change <= opts.tol {
            // The damped iterates approach ∂M(z) only geometrically. One
            // undamped step from the converged B lands on the boundary
            // exactly; it is solved and reported as the final iterate.
            mu = ComplexField::from_values(spec, damped_step(&mu, centers, radii, &b, 1.0))?;
            polished = true;
            continue;
        }
        if oscillating(&reports) {
            return Err(Error::Oscillation { reports });
        }
        if iteration + 1 >= opts.max_iter {
            return Ok(FixedPointRun { mu, solution: sol, b, reports, converged: false });
        }
        mu = ComplexField::from_values(spec, next)?;
    }
    unreachable!("the iteration count is unbounded")
}

/// `(1 - θ) μ + θ (c - k conj(B)/|B|)` on cells where `B` is unmasked and
/// above `1e-12 max|B|`; other cells keep their value.
fn damped_step(
    mu: &ComplexField,
    centers: &ComplexField,
    radii: &RealField,
    b: &MaskedField,
    theta: f64,
) -> Vec<Complex64> {
    let threshold = DEGENERACY_FLOOR * b.max_abs();
    (0..mu.spec().len())
        .map(|idx| {
            let current = mu.values()[idx];
            let target = match b.get(idx) {
                Some(bz) if bz.norm() > threshold => {
                    centers.values()[idx] - radii.values()[idx] * bz.conj() / bz.norm()
                }
                Some(_) => return current,
                // Masked cells carry no usable direction; relaxing them to the
                // starting value keeps the update free of iteration history.
                None => centers.values()[idx],
            };
            current * (1.0 - theta) + target * theta
        })
        .collect()
}

fn oscillating(reports: &[ExtremalReport]) -> bool {
    reports.len() > OSCILLATION_RUN
        && reports[reports.len() - OSCILLATION_RUN - 1..].windows(2).all(|w| w[1].step_change > w[0].step_change)
}

/// Writes `iter,omega,boundary_residual,euler_residual,step_change`.
pub fn write_run_log<W: Write>(reports: &[ExtremalReport], mut out: W) -> Result<()> {
    writeln!(out, "iter,omega,boundary_residual,euler_residual,step_change")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.omega_value, r.boundary_residual, r.euler_residual, r.step_change
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateauxRow {
    pub epsilon: f64,
    /// `(Ω(f_ε) - Ω(f)) / ε` from a re-solve.
    pub finite_difference: f64,
    /// `Re Σ c_j V(ζ_j)`.
    pub predicted: f64,
    pub abs_err: f64,
}

/// Compares difference quotients of `Ω` along `μ_ε` with the predicted
/// Gateaux derivative.
pub fn gateaux_check(
    plan: &TransformPlan,
    functional: &Functional,
    base: &Solution,
    dir: &VariationDirection,
    epsilons: &[f64],
    opts: SolveOptions,
) -> Result<Vec<GateauxRow>> {
    if let Some(&bad) = epsilons.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
        return Err(Error::Range(format!("epsilon {bad} outside (0, 1/2]")));
    }
    let predicted = functional.gateaux_derivative(base, dir)?;
    let omega = functional.evaluate(base)?;
    epsilons
        .iter()
        .map(|&epsilon| {
            let varied = solve(plan, &Coefficient::new(dir.mu_epsilon(epsilon)?)?, opts)?;
            let finite_difference = (functional.evaluate(&varied)? - omega) / epsilon;
            Ok(GateauxRow { epsilon, finite_difference, predicted, abs_err: (finite_difference - predicted).abs() })
        })
        .collect()
}

/// Writes `epsilon,fd,predicted,abs_err`.
pub fn write_gateaux_csv<W: Write>(rows: &[GateauxRow], mut out: W) -> Result<()> {
    writeln!(out, "epsilon,fd,predicted,abs_err")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.epsilon, r.finite_difference, r.predicted, r.abs_err)?;
    }
    Ok(())
}

/// For each of `samples` equispaced angles `α`, the coefficient
/// `ν = μ + fraction · ρ_α(z) e^{iα}` where `ρ_α` is the ray distance from
/// `μ(z)` to `∂M(z)` along `α`. Each `ν` stays in `M(z)` cellwise.
pub fn ray_probes(
    mu: &ComplexField,
    fam: &ConstraintFamily,
    samples: usize,
    fraction: f64,
) -> Result<Vec<ComplexField>> {
    if mu.spec() != fam.spec() {
        return Err(Error::GridMismatch);
    }
    (0..samples)
        .map(|s| {
            let alpha = 2.0 * PI * s as f64 / samples as f64;
            let e = Complex64::from_polar(1.0, alpha);
            let values = (0..mu.spec().len())
                .map(|idx| {
                    let m = mu.values()[idx];
                    Ok(m + e * (fraction * fam.ray_distance(idx, m, alpha)?))
                })
                .collect::<Result<Vec<_>>>()?;
            ComplexField::from_values(*mu.spec(), values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::variation::kernel_phi;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn identity() -> (TransformPlan, Solution) {
        let spec = GridSpec::new(c(0.5, 0.0), 4.0, 32).unwrap();
        let plan = TransformPlan::new(spec);
        let sol = solve(&plan, &Coefficient::zero(spec), SolveOptions::default()).unwrap();
        (plan, sol)
    }

    #[test]
    fn functional_validation() {
        assert!(Functional::new(vec![]).is_err());
        let a = Atom { zeta: c(2.0, 0.0), weight: c(1.0, 0.0) };
        assert!(Functional::new(vec![a, a]).is_err());
        let pinned = Functional::new(vec![a, Atom { zeta: c(1.0, 0.0), weight: c(1.0, 0.0) }]).unwrap();
        assert_eq!(pinned.pinned_atoms(), vec![1]);
    }

    #[test]
    fn evaluate_on_identity() {
        let (_, sol) = identity();
        assert!((Functional::single(c(2.0, 0.0), c(1.0, 0.0)).evaluate(&sol).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(Functional::single(c(0.0, 0.0), c(1.0, 0.0)).evaluate(&sol).unwrap(), 0.0);
        assert!(Functional::single(c(9.0, 0.0), c(1.0, 0.0)).evaluate(&sol).is_err());
    }

    #[test]
    fn field_a_single_atom() {
        let (_, sol) = identity();
        let fun = Functional::single(c(2.0, 0.0), c(1.0, 0.0));
        let a = fun.field_a(&sol, sol.f()).unwrap();
        let spec = *sol.spec();
        for idx in (0..spec.len()).step_by(37) {
            if let Some(v) = a.get(idx) {
                let expected = kernel_phi(spec.point(idx), c(2.0, 0.0)).unwrap() / PI;
                assert!((v - expected).norm() < 1e-12 * expected.norm().max(1.0));
            }
        }
        let w = ComplexField::constant(spec, c(-1.0, 0.0));
        let at = fun.field_a(&sol, &w).unwrap();
        assert!((at.get(0).unwrap() + 1.0 / (3.0 * PI)).norm() < 1e-15);
        assert!(!is_degenerate(&a));
    }

    #[test]
    fn cancelling_atoms_are_degenerate() {
        let (_, sol) = identity();
        // 2 and the nearby grid value map to the same image under the identity
        let fun = Functional::new(vec![
            Atom { zeta: c(2.0, 0.0), weight: c(1.0, 0.0) },
            Atom { zeta: c(2.0, 1e-300), weight: c(-1.0, 0.0) },
        ])
        .unwrap();
        let a = fun.field_a(&sol, sol.f()).unwrap();
        assert!(is_degenerate(&a));
    }

    #[test]
    fn b_masks_poles() {
        let (_, sol) = identity();
        let fun = Functional::single(c(2.0, 0.0), c(1.0, 0.0));
        let b = fun.field_b(&sol).unwrap();
        let r = mask_radius(&sol);
        let spec = *sol.spec();
        for idx in 0..spec.len() {
            let z = spec.point(idx);
            let near = z.norm() < r || (z - 1.0).norm() < r || (z - 2.0).norm() < r;
            assert_eq!(b.is_valid(idx), !near);
        }
    }

    #[test]
    fn run_log_format() {
        let reports = vec![ExtremalReport {
            iteration: 0,
            omega_value: 2.5,
            boundary_residual: 0.3,
            euler_residual: 1e-3,
            step_change: 0.125,
        }];
        let mut out = Vec::new();
        write_run_log(&reports, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "iter,omega,boundary_residual,euler_residual,step_change\n0,2.5,0.3,0.001,0.125\n"
        );
    }

    #[test]
    fn oscillation_needs_five_increases() {
        let mk = |s: f64| ExtremalReport {
            iteration: 0,
            omega_value: 0.0,
            boundary_residual: 0.0,
            euler_residual: 0.0,
            step_change: s,
        };
        let rising: Vec<_> = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().map(|&s| mk(s)).collect();
        assert!(oscillating(&rising));
        assert!(!oscillating(&rising[..5]));
        let broken: Vec<_> = [1.0, 2.0, 3.0, 2.5, 5.0, 6.0].iter().map(|&s| mk(s)).collect();
        assert!(!oscillating(&broken));
    }
}
