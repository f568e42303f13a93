//! Families `M(z)` of compact convex sets inside the unit disk, one per cell,
//! with the geometric queries the extremal conditions need.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CellId, Error, Result};
use crate::field::{ComplexField, GridSpec, RealField};

/// Every set must stay this far inside the unit circle.
pub const UNIT_DISK_MARGIN: f64 = 1e-9;
/// Membership slack.
pub const CONTAINS_TOL: f64 = 1e-12;
/// Rays shorter than this do not count as admissible directions.
pub const MIN_RAY: f64 = 1e-9;
/// How far from the boundary `inner_normal` accepts its argument.
pub const NORMAL_TOL: f64 = 1e-6;

/// A strictly convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Complex64>,
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Complex64>) -> Result<Self> {
        let mut deduped: Vec<Complex64> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::DegenerateSet(format!("non-finite vertex {v}")));
            }
            if deduped.last().is_none_or(|&last| (last - v).norm() > CONTAINS_TOL) {
                deduped.push(v);
            }
        }
        while deduped.len() > 1 && (deduped[0] - deduped[deduped.len() - 1]).norm() <= CONTAINS_TOL {
            deduped.pop();
        }
        let m = deduped.len();
        if m < 3 {
            return Err(Error::DegenerateSet(format!("polygon needs 3 distinct vertices, got {m}")));
        }
        for i in 0..m {
            let (a, b, c) = (deduped[i], deduped[(i + 1) % m], deduped[(i + 2) % m]);
            if cross(b - a, c - b) <= 0.0 {
                return Err(Error::DegenerateSet(
                    "polygon vertices must be strictly convex and counterclockwise".into(),
                ));
            }
        }
        Ok(ConvexPolygon { vertices: deduped })
    }

    pub fn vertices(&self) -> &[Complex64] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        let m = self.vertices.len();
        (0..m).map(move |i| (self.vertices[i], self.vertices[(i + 1) % m]))
    }
}

/// The set `M(z)` at one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellSet<'a> {
    /// Closed disk; a zero radius is a single point.
    Disk {
        center: Complex64,
        radius: f64,
    },
    Polygon(&'a ConvexPolygon),
}

fn nearest_on_segment(a: Complex64, b: Complex64, p: Complex64) -> Complex64 {
    let d = b - a;
    let t = ((p - a) * d.conj()).re / d.norm_sqr();
    a + d * t.clamp(0.0, 1.0)
}

impl CellSet<'_> {
    pub fn max_modulus(&self) -> f64 {
        match self {
            CellSet::Disk { center, radius } => center.norm() + radius,
            CellSet::Polygon(poly) => poly.vertices.iter().fold(0.0, |m, v| m.max(v.norm())),
        }
    }

    pub fn contains(&self, nu: Complex64) -> bool {
        match self {
            CellSet::Disk { center, radius } => (nu - center).norm() <= radius + CONTAINS_TOL,
            CellSet::Polygon(poly) => poly.edges().all(|(a, b)| cross(b - a, nu - a) >= -CONTAINS_TOL * (b - a).norm()),
        }
    }

    /// Nearest point of the boundary. From a disk center the tie is broken
    /// toward direction `+1`.
    pub fn project_boundary(&self, nu: Complex64) -> Complex64 {
        match *self {
            CellSet::Disk { center, radius } => {
                let d = nu - center;
                if d.norm() == 0.0 {
                    center + radius
                } else {
                    center + d * (radius / d.norm())
                }
            }
            CellSet::Polygon(poly) => poly
                .edges()
                .map(|(a, b)| nearest_on_segment(a, b, nu))
                .min_by(|p, q| (p - nu).norm().total_cmp(&(q - nu).norm()))
                .expect("polygon has edges"),
        }
    }

    pub fn boundary_distance(&self, nu: Complex64) -> f64 {
        match *self {
            CellSet::Disk { center, radius } => ((nu - center).norm() - radius).abs(),
            CellSet::Polygon(_) => (self.project_boundary(nu) - nu).norm(),
        }
    }

    /// Largest `t ≥ 0` with `mu + t e^{iα}` in the set.
    pub fn ray_distance(&self, mu: Complex64, alpha: f64) -> Result<f64> {
        if !self.contains(mu) {
            return Err(Error::Constraint { reason: format!("{mu} lies outside the set"), cells: vec![] });
        }
        let e = Complex64::from_polar(1.0, alpha);
        Ok(match *self {
            CellSet::Disk { center, radius } => {
                // |d + t e|² = r²  →  t² + 2 b t + (|d|² - r²) = 0
                let d = mu - center;
                let b = (e.conj() * d).re;
                let c = d.norm_sqr() - radius * radius;
                (-b + (b * b - c).max(0.0).sqrt()).max(0.0)
            }
            CellSet::Polygon(poly) => {
                let mut t_max = f64::INFINITY;
                for (a, b) in poly.edges() {
                    let inward = Complex64::i() * (b - a) / (b - a).norm();
                    let slack = (inward.conj() * (mu - a)).re.max(0.0);
                    let rate = (inward.conj() * e).re;
                    if rate < 0.0 {
                        t_max = t_max.min(slack / -rate);
                    }
                }
                t_max
            }
        })
    }

    /// Unit inner normal at a smooth boundary point.
    pub fn inner_normal(&self, boundary_point: Complex64) -> Result<Complex64> {
        let distance = self.boundary_distance(boundary_point);
        if distance > NORMAL_TOL {
            return Err(Error::NotOnBoundary { point: boundary_point, distance });
        }
        match *self {
            CellSet::Disk { center, radius } => {
                let d = center - boundary_point;
                if radius == 0.0 || d.norm() == 0.0 {
                    return Err(Error::NonSmooth(boundary_point));
                }
                Ok(d / d.norm())
            }
            CellSet::Polygon(poly) => {
                let (a, b) = poly
                    .edges()
                    .min_by(|(a1, b1), (a2, b2)| {
                        let d1 = (nearest_on_segment(*a1, *b1, boundary_point) - boundary_point).norm();
                        let d2 = (nearest_on_segment(*a2, *b2, boundary_point) - boundary_point).norm();
                        d1.total_cmp(&d2)
                    })
                    .expect("polygon has edges");
                let at_vertex = poly.vertices.iter().any(|v| (v - boundary_point).norm() <= NORMAL_TOL);
                if at_vertex {
                    return Err(Error::NonSmooth(boundary_point));
                }
                Ok(Complex64::i() * (b - a) / (b - a).norm())
            }
        }
    }

    /// Directions among `samples` equispaced angles along which `mu` can move
    /// a positive distance inside the set.
    pub fn cone_directions(&self, mu: Complex64, samples: usize) -> Result<Vec<Complex64>> {
        let mut out = Vec::new();
        for s in 0..samples {
            let alpha = 2.0 * PI * s as f64 / samples as f64;
            if self.ray_distance(mu, alpha)? > MIN_RAY {
                out.push(Complex64::from_polar(1.0, alpha));
            }
        }
        Ok(out)
    }
}

/// `M(z)` sampled per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintFamily {
    Disks {
        centers: ComplexField,
        radii: RealField,
    },
    /// Cells index into a shape table; `None` cells hold the single point 0.
    Polygons {
        spec: GridSpec,
        shapes: Vec<ConvexPolygon>,
        cells: Vec<Option<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintStats {
    /// `max |ν|` over `M(z)`.
    pub q: RealField,
    /// `(1 + q) / (1 - q)`.
    pub dilatation_bound: RealField,
}

const ORIGIN: CellSet<'static> = CellSet::Disk { center: Complex64 { re: 0.0, im: 0.0 }, radius: 0.0 };

impl ConstraintFamily {
    pub fn disks(centers: ComplexField, radii: RealField) -> Result<Self> {
        centers.ensure_same_grid(&radii)?;
        let fam = ConstraintFamily::Disks { centers, radii };
        fam.validate()?;
        Ok(fam)
    }

    /// Disks `|ν - center| ≤ radius` on cells with `|z - support_center| <
    /// support_radius`, the point `{0}` elsewhere.
    pub fn constant_disks(
        spec: GridSpec,
        center: Complex64,
        radius: f64,
        support_center: Complex64,
        support_radius: f64,
    ) -> Result<Self> {
        let inside = |z: Complex64| (z - support_center).norm() < support_radius;
        let centers = ComplexField::from_fn(spec, |z| if inside(z) { center } else { Complex64::new(0.0, 0.0) })?;
        let radii = RealField::from_fn(spec, |z| if inside(z) { radius } else { 0.0 })?;
        Self::disks(centers, radii)
    }

    pub fn polygons(spec: GridSpec, shapes: Vec<ConvexPolygon>, cells: Vec<Option<usize>>) -> Result<Self> {
        if cells.len() != spec.len() {
            return Err(Error::Grid("polygon cell table does not match the grid".into()));
        }
        if let Some(bad) = cells.iter().flatten().find(|&&s| s >= shapes.len()) {
            return Err(Error::DegenerateSet(format!("cell refers to missing polygon {bad}")));
        }
        let fam = ConstraintFamily::Polygons { spec, shapes, cells };
        fam.validate()?;
        Ok(fam)
    }

    /// One polygon on the cells where `mask` is true, `{0}` elsewhere.
    pub fn constant_polygon(spec: GridSpec, polygon: ConvexPolygon, mask: &[bool]) -> Result<Self> {
        if mask.len() != spec.len() {
            return Err(Error::Grid("mask does not match the grid".into()));
        }
        let cells = mask.iter().map(|&m| m.then_some(0)).collect();
        Self::polygons(spec, vec![polygon], cells)
    }

    pub fn spec(&self) -> &GridSpec {
        match self {
            ConstraintFamily::Disks { centers, .. } => centers.spec(),
            ConstraintFamily::Polygons { spec, .. } => spec,
        }
    }

    pub fn cell(&self, idx: usize) -> CellSet<'_> {
        match self {
            ConstraintFamily::Disks { centers, radii } => {
                CellSet::Disk { center: centers.values()[idx], radius: radii.values()[idx] }
            }
            ConstraintFamily::Polygons { shapes, cells, .. } => match cells[idx] {
                Some(s) => CellSet::Polygon(&shapes[s]),
                None => ORIGIN,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let spec = *self.spec();
        let mut negative = Vec::new();
        let mut outside = Vec::new();
        for idx in 0..spec.len() {
            if let ConstraintFamily::Disks { radii, .. } = self {
                if radii.values()[idx] < 0.0 {
                    negative.push(spec.cell_of_index(idx));
                }
            }
            if self.cell(idx).max_modulus() > 1.0 - UNIT_DISK_MARGIN {
                outside.push(spec.cell_of_index(idx));
            }
        }
        if !negative.is_empty() {
            return Err(Error::Constraint { reason: "negative disk radius".into(), cells: negative });
        }
        if !outside.is_empty() {
            return Err(Error::Constraint { reason: "constraint family leaves unit disk".into(), cells: outside });
        }
        Ok(())
    }

    pub fn stats(&self) -> ConstraintStats {
        let spec = *self.spec();
        let q: Vec<f64> = (0..spec.len()).map(|idx| self.cell(idx).max_modulus()).collect();
        let q = RealField::from_values(spec, q).expect("finite");
        let dilatation_bound = q.map(|q| (1.0 + q) / (1.0 - q));
        ConstraintStats { q, dilatation_bound }
    }

    pub fn contains(&self, idx: usize, nu: Complex64) -> bool {
        self.cell(idx).contains(nu)
    }

    pub fn project_boundary(&self, idx: usize, nu: Complex64) -> Complex64 {
        self.cell(idx).project_boundary(nu)
    }

    pub fn ray_distance(&self, idx: usize, mu: Complex64, alpha: f64) -> Result<f64> {
        self.cell(idx).ray_distance(mu, alpha).map_err(|e| self.locate(e, idx))
    }

    pub fn inner_normal(&self, idx: usize, boundary_point: Complex64) -> Result<Complex64> {
        self.cell(idx).inner_normal(boundary_point)
    }

    pub fn cone_directions(&self, idx: usize, mu: Complex64, samples: usize) -> Result<Vec<Complex64>> {
        self.cell(idx).cone_directions(mu, samples).map_err(|e| self.locate(e, idx))
    }

    fn locate(&self, err: Error, idx: usize) -> Error {
        match err {
            Error::Constraint { reason, .. } => {
                Error::Constraint { reason, cells: vec![self.spec().cell_of_index(idx)] }
            }
            other => other,
        }
    }

    /// Cells where `field` leaves `M(z)`.
    pub fn violations(&self, field: &ComplexField) -> Result<Vec<CellId>> {
        if field.spec() != self.spec() {
            return Err(Error::GridMismatch);
        }
        let spec = *self.spec();
        Ok((0..spec.len())
            .filter(|&idx| !self.contains(idx, field.values()[idx]))
            .map(|idx| spec.cell_of_index(idx))
            .collect())
    }

    pub fn ensure_contains(&self, field: &ComplexField) -> Result<()> {
        let cells = self.violations(field)?;
        if cells.is_empty() {
            Ok(())
        } else {
            Err(Error::Constraint { reason: "value outside M(z)".into(), cells })
        }
    }

    /// Writes a disk family as `<stem>_c.cfld` and `<stem>_k.cfld`, a polygon
    /// family as `<stem>.json`.
    pub fn save(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        match self {
            ConstraintFamily::Disks { centers, radii } => {
                centers.save(dir.join(format!("{stem}_c.cfld")))?;
                radii.to_complex().save(dir.join(format!("{stem}_k.cfld")))?;
            }
            ConstraintFamily::Polygons { .. } => {
                let doc = PolygonFamilyDoc::from_family(self);
                std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string(&doc)? + "\n")?;
            }
        }
        Ok(())
    }

    /// Reads a disk family stored as two CFLD files; the radius file must have
    /// zero imaginary parts.
    pub fn load_disks(centers: &std::path::Path, radii: &std::path::Path) -> Result<Self> {
        let centers = ComplexField::load(centers)?;
        let radii = ComplexField::load(radii)?;
        if radii.values().iter().any(|v| v.im != 0.0) {
            return Err(Error::Format("disk radii must be real".into()));
        }
        Self::disks(centers, radii.map(|v| v.re))
    }
}

/// JSON layout of a polygon family: the grid, a table of polygons, and per
/// cell an index into the table (`-1` for the point `{0}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonFamilyDoc {
    pub center: [f64; 2],
    pub half_width: f64,
    pub n: usize,
    pub polygons: Vec<Vec<[f64; 2]>>,
    pub cells: Vec<i64>,
}

impl PolygonFamilyDoc {
    pub fn from_family(fam: &ConstraintFamily) -> Self {
        let spec = fam.spec();
        let (polygons, cells) = match fam {
            ConstraintFamily::Polygons { shapes, cells, .. } => (
                shapes.iter().map(|p| p.vertices.iter().map(|v| [v.re, v.im]).collect()).collect(),
                cells.iter().map(|c| c.map_or(-1, |s| s as i64)).collect(),
            ),
            ConstraintFamily::Disks { .. } => (Vec::new(), vec![-1; spec.len()]),
        };
        PolygonFamilyDoc {
            center: [spec.center().re, spec.center().im],
            half_width: spec.half_width(),
            n: spec.n(),
            polygons,
            cells,
        }
    }

    pub fn into_family(self) -> Result<ConstraintFamily> {
        let spec = GridSpec::new(Complex64::new(self.center[0], self.center[1]), self.half_width, self.n)?;
        let shapes = self
            .polygons
            .into_iter()
            .map(|vs| ConvexPolygon::new(vs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let cells = self
            .cells
            .into_iter()
            .map(|c| match c {
                -1 => Ok(None),
                c if c >= 0 => Ok(Some(c as usize)),
                c => Err(Error::Format(format!("bad polygon index {c}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        ConstraintFamily::polygons(spec, shapes, cells)
    }
}
