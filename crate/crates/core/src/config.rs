//! Run configuration: a TOML file with one section per concern. Unknown keys
//! are rejected so that a typo can never silently change a run.
//!
//! Complex numbers are written as `[re, im]`. Relative paths are resolved
//! against the directory of the configuration file.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintFamily, ConvexPolygon};
use crate::error::{Error, Result};
use crate::extremal::{Atom, FixedPointOptions, Functional};
use crate::field::{ComplexField, GridSpec};
use crate::solver::{Coefficient, SolveOptions};
use crate::variation::MAX_EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    VariationCheck,
    GateauxCheck,
    Extremal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub grid: GridConfig,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub solver: SolveOptions,
    pub constraint: Option<ConstraintSpec>,
    pub direction: Option<DirectionSpec>,
    pub variation: Option<VariationConfig>,
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    /// Directory that relative paths refer to; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center: [f64; 2],
    pub half_width: f64,
    pub n: usize,
}

/// The coefficient `μ` of the base solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    // A struct variant so that stray keys are still rejected.
    Zero {},
    /// `((K - 1)/(K + 1)) z / conj(z)` on `|z| < radius`, the coefficient of
    /// `z |z|^{K-1}` inside the disk.
    RadialStretch {
        dilatation: f64,
        #[serde(default = "unit")]
        radius: f64,
    },
    /// The constant `k` on `|z| < radius`.
    DiskIndicator {
        k: [f64; 2],
        #[serde(default = "unit")]
        radius: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec::Zero {}
    }
}

fn unit() -> f64 {
    1.0
}

fn origin() -> [f64; 2] {
    [0.0, 0.0]
}

/// The constraint family `M(z)`: a fixed set on a support disk, `{0}`
/// outside it, or a disk family read from files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    Disk {
        center: [f64; 2],
        radius: f64,
        #[serde(default = "origin")]
        support_center: [f64; 2],
        #[serde(default = "unit")]
        support_radius: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
        #[serde(default = "origin")]
        support_center: [f64; 2],
        #[serde(default = "unit")]
        support_radius: f64,
    },
    DiskFiles {
        centers: PathBuf,
        radii: PathBuf,
    },
}

/// The perturbed coefficient `ν`, given as `μ` plus a smooth bump or read
/// from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    /// `amplitude · (1 - |z - center|²/radius²)³` on the disk.
    Bump {
        center: [f64; 2],
        radius: f64,
        amplitude: [f64; 2],
    },
    /// `amplitude · (1 - t²)³` with `t` the signed distance of `|z - center|`
    /// from the mid radius, relative to the half thickness.
    Annulus {
        #[serde(default = "origin")]
        center: [f64; 2],
        inner: f64,
        outer: f64,
        amplitude: [f64; 2],
    },
    File {
        nu: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationConfig {
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub zeta: [f64; 2],
    pub weight: [f64; 2],
}

/// Fixed-point parameters and the tolerances of the final checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointConfig {
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Directions sampled per cell by the admissible-direction check.
    pub direction_samples: usize,
    /// Cells with `|B| > active_tol · max|B|` are checked.
    pub active_tol: f64,
    pub boundary_tol: f64,
    /// Relative to `max |B|`.
    pub direction_tol: f64,
    /// Relative to `max |f_z|`.
    pub euler_tol: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        let fp = FixedPointOptions::default();
        FixedPointConfig {
            theta: fp.theta,
            tol: fp.tol,
            max_iter: fp.max_iter,
            direction_samples: 16,
            active_tol: 1e-12,
            boundary_tol: 1e-8,
            direction_tol: 1e-6,
            euler_tol: 1e-4,
        }
    }
}

impl FixedPointConfig {
    pub fn options(&self) -> FixedPointOptions {
        FixedPointOptions { theta: self.theta, tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn complex([re, im]: [f64; 2]) -> Complex64 {
    Complex64::new(re, im)
}

/// Whether any diagnostic blocks a run.
pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(complex(self.grid.center), self.grid.half_width, self.grid.n)
    }

    pub fn coefficient(&self, spec: GridSpec) -> Result<Coefficient> {
        let zero = Complex64::new(0.0, 0.0);
        let mu = match &self.coefficient {
            CoefficientSpec::Zero {} => return Ok(Coefficient::zero(spec)),
            CoefficientSpec::RadialStretch { dilatation, radius } => {
                let kappa = (dilatation - 1.0) / (dilatation + 1.0);
                ComplexField::make(spec, |z| if z.norm() < *radius { z / z.conj() * kappa } else { zero })?
            }
            CoefficientSpec::DiskIndicator { k, radius } => {
                let k = complex(*k);
                ComplexField::make(spec, |z| if z.norm() < *radius { k } else { zero })?
            }
            CoefficientSpec::File { path } => {
                let mu = ComplexField::load(self.resolve(path))?;
                if mu.spec() != &spec {
                    return Err(Error::Config("coefficient file grid differs from [grid]".into()));
                }
                mu
            }
        };
        Coefficient::new(mu)
    }

    pub fn constraint_family(&self, spec: GridSpec) -> Result<Option<ConstraintFamily>> {
        let Some(constraint) = &self.constraint else { return Ok(None) };
        let fam = match constraint {
            ConstraintSpec::Disk { center, radius, support_center, support_radius } => {
                ConstraintFamily::constant_disks(
                    spec,
                    complex(*center),
                    *radius,
                    complex(*support_center),
                    *support_radius,
                )?
            }
            ConstraintSpec::Polygon { vertices, support_center, support_radius } => {
                let polygon = ConvexPolygon::new(vertices.iter().copied().map(complex).collect())?;
                let support = complex(*support_center);
                let mask: Vec<bool> =
                    (0..spec.len()).map(|idx| (spec.point(idx) - support).norm() < *support_radius).collect();
                ConstraintFamily::constant_polygon(spec, polygon, &mask)?
            }
            ConstraintSpec::DiskFiles { centers, radii } => {
                let fam = ConstraintFamily::load_disks(&self.resolve(centers), &self.resolve(radii))?;
                if fam.spec() != &spec {
                    return Err(Error::Config("constraint file grid differs from [grid]".into()));
                }
                fam
            }
        };
        Ok(Some(fam))
    }

    /// The perturbed coefficient `ν` for a base coefficient `μ`.
    pub fn direction_nu(&self, mu: &ComplexField) -> Result<ComplexField> {
        let spec = *mu.spec();
        let bump = match &self.direction {
            None => return Err(Error::Config("this mode needs a [direction] section".into())),
            Some(DirectionSpec::File { nu }) => {
                let nu = ComplexField::load(self.resolve(nu))?;
                if nu.spec() != &spec {
                    return Err(Error::Config("direction file grid differs from [grid]".into()));
                }
                return Ok(nu);
            }
            Some(DirectionSpec::Bump { center, radius, amplitude }) => {
                let (c, r, a) = (complex(*center), *radius, complex(*amplitude));
                ComplexField::make(spec, |z| {
                    let s = (z - c).norm_sqr() / (r * r);
                    if s < 1.0 {
                        a * (1.0 - s).powi(3)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })?
            }
            Some(DirectionSpec::Annulus { center, inner, outer, amplitude }) => {
                let (c, a) = (complex(*center), complex(*amplitude));
                let (mid, half) = (0.5 * (inner + outer), 0.5 * (outer - inner));
                ComplexField::make(spec, |z| {
                    let t = ((z - c).norm() - mid) / half;
                    if t.abs() < 1.0 {
                        a * (1.0 - t * t).powi(3)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })?
            }
        };
        mu.add(&bump)
    }

    pub fn functional(&self) -> Result<Functional> {
        let Some(fc) = &self.functional else {
            return Err(Error::Config("this mode needs a [functional] section".into()));
        };
        Functional::new(fc.atoms.iter().map(|a| Atom { zeta: complex(a.zeta), weight: complex(a.weight) }).collect())
    }

    pub fn epsilons(&self) -> Result<&[f64]> {
        self.variation
            .as_ref()
            .map(|v| v.epsilons.as_slice())
            .ok_or_else(|| Error::Config("this mode needs a [variation] section".into()))
    }

    pub fn targets(&self) -> Vec<Complex64> {
        self.variation.as_ref().map(|v| v.targets.iter().copied().map(complex).collect()).unwrap_or_default()
    }

    /// Full, non-mutating validation. Files named by the configuration are
    /// read; nothing is written. An empty list means the run can start;
    /// warnings alone do not block it.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let spec = match self.grid_spec() {
            Ok(spec) => Some(spec),
            Err(e) => {
                out.push(Diagnostic::error(e.to_string()));
                None
            }
        };

        if !(self.solver.tol > 0.0) {
            out.push(Diagnostic::error(format!("solver tol must be positive, got {}", self.solver.tol)));
        }
        if self.solver.max_terms == 0 {
            out.push(Diagnostic::error("solver max_terms must be positive"));
        }
        self.validate_coefficient(spec, &mut out);

        let needs = |section: bool, name: &str, out: &mut Vec<Diagnostic>| {
            if !section {
                out.push(Diagnostic::error(format!("mode {:?} needs a [{name}] section", self.mode)));
            }
        };
        match self.mode {
            Mode::Solve => {}
            Mode::VariationCheck => {
                needs(self.direction.is_some(), "direction", &mut out);
                needs(self.variation.is_some(), "variation", &mut out);
                if self.variation.as_ref().is_some_and(|v| v.targets.is_empty()) {
                    out.push(Diagnostic::error("variation targets must not be empty"));
                }
            }
            Mode::GateauxCheck => {
                needs(self.direction.is_some(), "direction", &mut out);
                needs(self.variation.is_some(), "variation", &mut out);
                needs(self.functional.is_some(), "functional", &mut out);
            }
            Mode::Extremal => {
                needs(self.constraint.is_some(), "constraint", &mut out);
                needs(self.functional.is_some(), "functional", &mut out);
                if matches!(self.constraint, Some(ConstraintSpec::Polygon { .. })) {
                    out.push(Diagnostic::error("the extremal search needs a disk constraint family"));
                }
                self.validate_fixed_point(&mut out);
            }
        }

        if let Some(v) = &self.variation {
            if v.epsilons.is_empty() {
                out.push(Diagnostic::error("epsilon list must not be empty"));
            }
            for &e in &v.epsilons {
                if e > MAX_EPSILON {
                    out.push(Diagnostic::error(format!("epsilon {e} exceeds 1/2 (admissible variation range)")));
                } else if !(e > 0.0) {
                    out.push(Diagnostic::error(format!("epsilon {e} must be positive")));
                }
            }
            if let Some(spec) = spec {
                for &t in &v.targets {
                    if !spec.contains(complex(t)) {
                        out.push(Diagnostic::error(format!("target {} lies outside the grid", complex(t))));
                    }
                }
            }
        }
        self.validate_constraint(spec, &mut out);
        self.validate_functional(spec, &mut out);
        if let (Some(spec), Some(_), true) = (spec, &self.direction, out.iter().all(|d| d.severity != Severity::Error))
        {
            self.validate_direction(spec, &mut out);
        }
        out
    }

    fn validate_coefficient(&self, spec: Option<GridSpec>, out: &mut Vec<Diagnostic>) {
        match &self.coefficient {
            CoefficientSpec::RadialStretch { dilatation, radius } => {
                if !(*dilatation > 0.0 && dilatation.is_finite()) {
                    out.push(Diagnostic::error(format!("dilatation must be positive, got {dilatation}")));
                }
                if !(*radius > 0.0) {
                    out.push(Diagnostic::error("radial_stretch radius must be positive"));
                }
            }
            CoefficientSpec::DiskIndicator { k, radius } => {
                if complex(*k).norm() >= 1.0 {
                    out.push(Diagnostic::error(format!("|k| = {} must be below 1", complex(*k).norm())));
                }
                if !(*radius > 0.0) {
                    out.push(Diagnostic::error("disk_indicator radius must be positive"));
                }
            }
            CoefficientSpec::Zero {} | CoefficientSpec::File { .. } => {}
        }
        if self.mode == Mode::Extremal && !matches!(self.coefficient, CoefficientSpec::Zero {}) {
            out.push(Diagnostic::warning(
                "the extremal search starts from the constraint centers; [coefficient] is ignored",
            ));
        }
        if let Some(spec) = spec {
            if !out.iter().any(|d| d.severity == Severity::Error) {
                if let Err(e) = self.coefficient(spec) {
                    out.push(Diagnostic::error(format!("coefficient: {e}")));
                }
            }
        }
    }

    fn validate_constraint(&self, spec: Option<GridSpec>, out: &mut Vec<Diagnostic>) {
        let Some(constraint) = &self.constraint else { return };
        let leaves = match constraint {
            ConstraintSpec::Disk { center, radius, .. } => {
                if !(*radius >= 0.0) {
                    out.push(Diagnostic::error("constraint radius must be non-negative"));
                }
                complex(*center).norm() + radius >= 1.0
            }
            ConstraintSpec::Polygon { vertices, .. } => vertices.iter().any(|&v| complex(v).norm() >= 1.0),
            ConstraintSpec::DiskFiles { .. } => false,
        };
        if leaves {
            out.push(Diagnostic::error("constraint family leaves unit disk"));
            return;
        }
        if let Some(spec) = spec {
            if let Err(e) = self.constraint_family(spec) {
                let message = match e {
                    Error::Constraint { ref reason, .. } if reason.contains("unit disk") => reason.clone(),
                    e => format!("constraint: {e}"),
                };
                out.push(Diagnostic::error(message));
            }
        }
    }

    fn validate_functional(&self, spec: Option<GridSpec>, out: &mut Vec<Diagnostic>) {
        let Some(fc) = &self.functional else { return };
        match self.functional() {
            Err(e) => out.push(Diagnostic::error(e.to_string())),
            Ok(functional) => {
                for i in functional.pinned_atoms() {
                    out.push(Diagnostic::warning(format!(
                        "atom {i} at normalization point contributes zero derivative"
                    )));
                }
            }
        }
        if let Some(spec) = spec {
            for a in &fc.atoms {
                if !spec.contains(complex(a.zeta)) {
                    out.push(Diagnostic::error(format!("atom at {} lies outside the grid", complex(a.zeta))));
                }
            }
        }
    }

    fn validate_fixed_point(&self, out: &mut Vec<Diagnostic>) {
        let fp = &self.fixed_point;
        if !(fp.theta > 0.0 && fp.theta <= 1.0) {
            out.push(Diagnostic::error(format!("theta must lie in (0, 1], got {}", fp.theta)));
        }
        for (name, value) in [
            ("fixed_point tol", fp.tol),
            ("active_tol", fp.active_tol),
            ("boundary_tol", fp.boundary_tol),
            ("direction_tol", fp.direction_tol),
            ("euler_tol", fp.euler_tol),
        ] {
            if !(value > 0.0) {
                out.push(Diagnostic::error(format!("{name} must be positive, got {value}")));
            }
        }
        if fp.max_iter == 0 || fp.direction_samples == 0 {
            out.push(Diagnostic::error("max_iter and direction_samples must be positive"));
        }
    }

    fn validate_direction(&self, spec: GridSpec, out: &mut Vec<Diagnostic>) {
        let result = (|| -> Result<()> {
            let coeff = self.coefficient(spec)?;
            let nu = self.direction_nu(coeff.mu())?;
            nu.ensure_compact_support()?;
            let fam = self.constraint_family(spec)?;
            crate::variation::VariationDirection::new(coeff.mu(), &nu, fam.as_ref())?;
            Ok(())
        })();
        if let Err(e) = result {
            out.push(Diagnostic::error(format!("direction: {e}")));
        }
    }
}
