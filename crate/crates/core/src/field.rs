//! Square grids covering a truncation of the plane and the complex fields
//! sampled on them.
//!
//! Samples sit at cell centers: `value[j][k]` is the sample at
//! `center + (-half_width + (k + 1/2) h) + i (-half_width + (j + 1/2) h)`
//! with `h = 2 half_width / n`. Rows run along the imaginary axis.

use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{CellId, Error, Result};

/// Smallest admissible number of samples per axis.
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    center: Complex64,
    half_width: f64,
    n: usize,
}

impl GridSpec {
    pub fn new(center: Complex64, half_width: f64, n: usize) -> Result<Self> {
        if !(center.re.is_finite() && center.im.is_finite()) {
            return Err(Error::Grid("center must be finite".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Grid(format!("half_width must be positive, got {half_width}")));
        }
        if n < MIN_SAMPLES || n % 2 != 0 {
            return Err(Error::Grid(format!("samples per axis must be even and at least {MIN_SAMPLES}, got {n}")));
        }
        let spec = GridSpec { center, half_width, n };
        for p in [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)] {
            if !spec.strictly_inside(p) {
                return Err(Error::Grid(format!("normalization point {p} must lie strictly inside the grid")));
            }
        }
        Ok(spec)
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Cell side length.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    pub fn cell_of_index(&self, idx: usize) -> CellId {
        (idx / self.n, idx % self.n)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Complex64 {
        let h = self.spacing();
        self.center
            + Complex64::new(-self.half_width + (col as f64 + 0.5) * h, -self.half_width + (row as f64 + 0.5) * h)
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        let (row, col) = self.cell_of_index(idx);
        self.cell_center(row, col)
    }

    fn strictly_inside(&self, z: Complex64) -> bool {
        let d = z - self.center;
        d.re.abs() < self.half_width && d.im.abs() < self.half_width
    }

    /// Whether `z` lies in the closed square covered by the grid.
    pub fn contains(&self, z: Complex64) -> bool {
        let d = z - self.center;
        d.re.abs() <= self.half_width && d.im.abs() <= self.half_width
    }

    /// Cells off the boundary row/column ring; the ones where central
    /// differences apply.
    pub fn is_interior(&self, row: usize, col: usize) -> bool {
        row > 0 && col > 0 && row + 1 < self.n && col + 1 < self.n
    }

    /// Whether the cell lies on the outer margin of width `half_width / 2`,
    /// where compactly supported data must vanish.
    pub fn in_margin(&self, row: usize, col: usize) -> bool {
        let d = self.cell_center(row, col) - self.center;
        let inner = 0.5 * self.half_width;
        d.re.abs() > inner || d.im.abs() > inner
    }

    /// The grid that holds this one in its lower-left quarter, used for the
    /// zero-padded transforms.
    pub fn padded(&self) -> GridSpec {
        let lower_left = self.center - Complex64::new(self.half_width, self.half_width);
        GridSpec {
            center: lower_left + Complex64::new(2.0 * self.half_width, 2.0 * self.half_width),
            half_width: 2.0 * self.half_width,
            n: 2 * self.n,
        }
    }

    /// Fractional cell coordinates of `z`, where integer values land on
    /// cell centers.
    fn fractional(&self, z: Complex64) -> (f64, f64) {
        let h = self.spacing();
        let d = z - self.center;
        ((d.im + self.half_width) / h - 0.5, (d.re + self.half_width) / h - 0.5)
    }
}

/// Samples of a scalar quantity on every cell of a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    spec: GridSpec,
    values: Vec<T>,
}

pub type ComplexField = Field<Complex64>;
pub type RealField = Field<f64>;

/// Scalar types a field can hold.
pub trait Sample: Copy + Default + Send + Sync {
    fn is_finite_sample(&self) -> bool;
    fn modulus(&self) -> f64;
}

impl Sample for Complex64 {
    fn is_finite_sample(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.norm()
    }
}

impl Sample for f64 {
    fn is_finite_sample(&self) -> bool {
        self.is_finite()
    }
    fn modulus(&self) -> f64 {
        self.abs()
    }
}

impl<T: Sample> Field<T> {
    pub fn from_values(spec: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Grid(format!("expected {} samples, got {}", spec.len(), values.len())));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite_sample()) {
            let (row, col) = spec.cell_of_index(idx);
            return Err(Error::NonFinite { row, col });
        }
        Ok(Field { spec, values })
    }

    /// Builds a field by evaluating `generator` at every cell center.
    pub fn from_fn(spec: GridSpec, generator: impl Fn(Complex64) -> T) -> Result<Self> {
        let values = (0..spec.len()).map(|idx| generator(spec.point(idx))).collect();
        Self::from_values(spec, values)
    }

    pub fn constant(spec: GridSpec, value: T) -> Self {
        Field { spec, values: vec![value; spec.len()] }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, T::default())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[self.spec.index(row, col)]
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<U: Sample, V: Sample>(&self, other: &Field<U>, f: impl Fn(T, U) -> V) -> Result<Field<V>> {
        self.ensure_same_grid(other)?;
        Ok(Field { spec: self.spec, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn ensure_same_grid<U>(&self, other: &Field<U>) -> Result<()> {
        if self.spec == other.spec {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// Discrete L² norm `sqrt(h² Σ |v|²)`, summed in cell order.
    pub fn l2_norm(&self) -> f64 {
        let h = self.spec.spacing();
        (h * h * self.values.iter().map(|v| v.modulus().powi(2)).sum::<f64>()).sqrt()
    }

    /// Discrete L² norm restricted to interior cells.
    pub fn interior_l2_norm(&self) -> f64 {
        let h = self.spec.spacing();
        let n = self.spec.n;
        let mut acc = 0.0;
        for row in 1..n - 1 {
            for col in 1..n - 1 {
                acc += self.get(row, col).modulus().powi(2);
            }
        }
        (h * h * acc).sqrt()
    }

    /// Cells on the outer margin holding a nonzero value.
    pub fn margin_violations(&self) -> Vec<CellId> {
        let n = self.spec.n;
        let mut cells = Vec::new();
        for row in 0..n {
            for col in 0..n {
                if self.spec.in_margin(row, col) && self.get(row, col).modulus() != 0.0 {
                    cells.push((row, col));
                }
            }
        }
        cells
    }

    pub fn ensure_compact_support(&self) -> Result<()> {
        let cells = self.margin_violations();
        if cells.is_empty() {
            Ok(())
        } else {
            Err(Error::Support { cells })
        }
    }
}

impl<T> Field<T>
where
    T: Sample + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    /// Bilinear interpolation between the four surrounding cell centers.
    /// Points in the outer half-cell ring use the nearest edge values.
    pub fn interpolate(&self, z: Complex64) -> Result<T> {
        if !self.spec.contains(z) {
            return Err(Error::OutsideGrid(z));
        }
        let n = self.spec.n;
        let (u, v) = self.spec.fractional(z);
        let max = (n - 1) as f64;
        let (u, v) = (u.clamp(0.0, max), v.clamp(0.0, max));
        let row = (u.floor() as usize).min(n - 2);
        let col = (v.floor() as usize).min(n - 2);
        let (tu, tv) = (u - row as f64, v - col as f64);
        let lower = self.get(row, col) * (1.0 - tv) + self.get(row, col + 1) * tv;
        let upper = self.get(row + 1, col) * (1.0 - tv) + self.get(row + 1, col + 1) * tv;
        Ok(lower * (1.0 - tu) + upper * tu)
    }
}

impl ComplexField {
    /// Samples `generator` at every cell center; fails on the first
    /// non-finite value.
    pub fn make(spec: GridSpec, generator: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        Self::from_fn(spec, generator)
    }

    /// The identity map `z ↦ z` sampled on the grid.
    pub fn coordinates(spec: GridSpec) -> Self {
        Field { spec, values: (0..spec.len()).map(|idx| spec.point(idx)).collect() }
    }

    /// Midpoint quadrature `h² Σ values`.
    pub fn integrate(&self) -> Complex64 {
        let h = self.spec.spacing();
        self.values.iter().sum::<Complex64>() * (h * h)
    }

    pub fn scale(&self, s: Complex64) -> ComplexField {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ComplexField) -> Result<ComplexField> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|v| v.conj())
    }

    pub fn abs(&self) -> RealField {
        self.map(|v| v.norm())
    }

    /// Central-difference Wirtinger derivatives `(f_z, f_zbar)`.
    ///
    /// Interior cells use central differences (exact for affine maps); the
    /// boundary ring falls back to one-sided first-order differences.
    pub fn fd_derivatives(&self) -> (ComplexField, ComplexField) {
        let n = self.spec.n;
        let h = self.spec.spacing();
        let diff = |lo: Complex64, hi: Complex64, steps: f64| (hi - lo) / (steps * h);
        let mut dz = Vec::with_capacity(self.spec.len());
        let mut dzbar = Vec::with_capacity(self.spec.len());
        for row in 0..n {
            for col in 0..n {
                let f_x = match col {
                    0 => diff(self.get(row, 0), self.get(row, 1), 1.0),
                    c if c == n - 1 => diff(self.get(row, n - 2), self.get(row, n - 1), 1.0),
                    c => diff(self.get(row, c - 1), self.get(row, c + 1), 2.0),
                };
                let f_y = match row {
                    0 => diff(self.get(0, col), self.get(1, col), 1.0),
                    r if r == n - 1 => diff(self.get(n - 2, col), self.get(n - 1, col), 1.0),
                    r => diff(self.get(r - 1, col), self.get(r + 1, col), 2.0),
                };
                let i_f_y = Complex64::i() * f_y;
                dz.push((f_x - i_f_y) * 0.5);
                dzbar.push((f_x + i_f_y) * 0.5);
            }
        }
        (Field { spec: self.spec, values: dz }, Field { spec: self.spec, values: dzbar })
    }

    const MAGIC: &'static [u8; 4] = b"CFLD";
    const VERSION: u32 = 1;

    /// Writes the binary `CFLD` layout: magic, then little-endian version,
    /// center, half width, samples per axis, and `n²` (re, im) pairs.
    pub fn write_cfld<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(36 + 16 * self.values.len());
        buf.extend_from_slice(Self::MAGIC);
        buf.extend_from_slice(&Self::VERSION.to_le_bytes());
        buf.extend_from_slice(&self.spec.center.re.to_le_bytes());
        buf.extend_from_slice(&self.spec.center.im.to_le_bytes());
        buf.extend_from_slice(&self.spec.half_width.to_le_bytes());
        let n = u32::try_from(self.spec.n).map_err(|_| Error::Format("grid too large".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cfld<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut cursor = bytes.as_slice();
        let mut take = |len: usize| -> Result<&[u8]> {
            if cursor.len() < len {
                return Err(Error::Format("truncated field file".into()));
            }
            let (head, tail) = cursor.split_at(len);
            cursor = tail;
            Ok(head)
        };
        if take(4)? != Self::MAGIC {
            return Err(Error::Format("bad magic, expected CFLD".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
        let version = u32_at(take(4)?);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let center = Complex64::new(f64_at(take(8)?), f64_at(take(8)?));
        let half_width = f64_at(take(8)?);
        let n = u32_at(take(4)?) as usize;
        let spec = GridSpec::new(center, half_width, n)?;
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            values.push(Complex64::new(f64_at(take(8)?), f64_at(take(8)?)));
        }
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Self::from_values(spec, values)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_cfld(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_cfld(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A complex field with some cells excluded, e.g. near kernel poles.
/// Excluded cells hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    values: ComplexField,
    valid: Vec<bool>,
}

impl MaskedField {
    pub fn new(values: ComplexField, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != values.spec().len() {
            return Err(Error::Grid("mask length does not match the grid".into()));
        }
        let zeroed = values.values().iter().zip(&valid).map(|(&v, &ok)| if ok { v } else { Complex64::default() });
        let values = ComplexField::from_values(*values.spec(), zeroed.collect())?;
        Ok(MaskedField { values, valid })
    }

    pub fn spec(&self) -> &GridSpec {
        self.values.spec()
    }

    /// The underlying samples, zero at masked cells.
    pub fn field(&self) -> &ComplexField {
        &self.values
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, idx: usize) -> Option<Complex64> {
        self.valid[idx].then(|| self.values.values()[idx])
    }

    pub fn masked_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Largest modulus over unmasked cells.
    pub fn max_abs(&self) -> f64 {
        self.values.sup_norm()
    }
}
