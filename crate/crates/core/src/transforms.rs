//! Discrete Cauchy and Beurling transforms on a zero-padded grid.
//!
//! Both transforms act on fields that vanish on the outer margin of the grid.
//! The field is embedded in the lower-left quarter of a `2n × 2n` buffer so
//! the linear convolution with the slowly decaying `1/z` kernel does not wrap.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, GridSpec};

/// Precomputed FFT plans, the Beurling multiplier and the spectrum of the
/// cell-averaged Cauchy kernel for one grid.
pub struct TransformPlan {
    spec: GridSpec,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    beurling_multiplier: Vec<Complex64>,
    cauchy_spectrum: Vec<Complex64>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan").field("spec", &self.spec).field("size", &self.size).finish()
    }
}

impl TransformPlan {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.n();
        let size = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);

        let signed = |p: usize| if p < size / 2 { p as f64 } else { p as f64 - size as f64 };
        let mut beurling_multiplier = Vec::with_capacity(size * size);
        for row in 0..size {
            for col in 0..size {
                let xi = Complex64::new(signed(col), signed(row));
                beurling_multiplier.push(if row == 0 && col == 0 { Complex64::new(0.0, 0.0) } else { xi.conj() / xi });
            }
        }

        let h = spec.spacing();
        let mut kernel = vec![Complex64::new(0.0, 0.0); size * size];
        let offset = |p: usize| -> Option<i64> {
            let p = p as i64;
            let n = n as i64;
            if p < n {
                Some(p)
            } else if p > n {
                Some(p - 2 * n)
            } else {
                None
            }
        };
        for row in 0..size {
            for col in 0..size {
                if let (Some(dy), Some(dx)) = (offset(row), offset(col)) {
                    kernel[row * size + col] = cell_average_inverse(dx as f64, dy as f64) * (h / PI);
                }
            }
        }
        let mut plan = TransformPlan { spec, size, forward, inverse, beurling_multiplier, cauchy_spectrum: Vec::new() };
        plan.fft2(&mut kernel, false);
        plan.cauchy_spectrum = kernel;
        plan
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn check(&self, field: &ComplexField) -> Result<()> {
        if field.spec() != &self.spec {
            return Err(Error::GridMismatch);
        }
        field.ensure_compact_support()
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let m = self.size;
        let fft = if inverse { &self.inverse } else { &self.forward };
        fft.process(buf);
        transpose_square(buf, m);
        fft.process(buf);
        transpose_square(buf, m);
    }

    fn pad(&self, field: &ComplexField) -> Vec<Complex64> {
        let (n, m) = (self.spec.n(), self.size);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for row in 0..n {
            buf[row * m..row * m + n].copy_from_slice(&field.values()[row * n..(row + 1) * n]);
        }
        buf
    }

    fn crop(&self, buf: &[Complex64]) -> ComplexField {
        let (n, m) = (self.spec.n(), self.size);
        let mut values = Vec::with_capacity(n * n);
        for row in 0..n {
            values.extend_from_slice(&buf[row * m..row * m + n]);
        }
        ComplexField::from_values(self.spec, values).expect("transform output is finite")
    }

    /// Filters the padded field through a frequency-domain multiplier.
    fn apply(&self, field: &ComplexField, multiplier: &[Complex64]) -> Vec<Complex64> {
        let mut buf = self.pad(field);
        self.fft2(&mut buf, false);
        let norm = 1.0 / (self.size * self.size) as f64;
        for (v, m) in buf.iter_mut().zip(multiplier) {
            *v *= m * norm;
        }
        self.fft2(&mut buf, true);
        buf
    }

    /// `T h(ζ) = (1/π) ∬ h(z) / (ζ - z) dm_z`, with `h` treated as constant on
    /// each cell and the kernel integrated exactly over cells.
    pub fn cauchy_t(&self, h: &ComplexField) -> Result<ComplexField> {
        self.check(h)?;
        Ok(self.crop(&self.apply(h, &self.cauchy_spectrum)))
    }

    /// `S h = ∂_z T h`, the Fourier multiplier `conj(ξ)/ξ` with the zero
    /// frequency dropped.
    pub fn beurling_s(&self, h: &ComplexField) -> Result<ComplexField> {
        self.check(h)?;
        Ok(self.crop(&self.apply(h, &self.beurling_multiplier)))
    }

    /// The Beurling transform on the whole padded grid (see
    /// [`GridSpec::padded`]), where the discrete transform is an isometry on
    /// mean-zero data.
    pub fn beurling_s_padded(&self, h: &ComplexField) -> Result<ComplexField> {
        self.check(h)?;
        let buf = self.apply(h, &self.beurling_multiplier);
        Ok(ComplexField::from_values(self.spec.padded(), buf).expect("transform output is finite"))
    }

    /// `T h` at an arbitrary point; see [`cauchy_t_at`].
    pub fn cauchy_t_at(&self, h: &ComplexField, zeta: Complex64) -> Result<Complex64> {
        self.check(h)?;
        Ok(cauchy_t_at(h, zeta))
    }

    /// Embeds a field into the padded grid with zeros outside.
    pub fn embed_padded(&self, h: &ComplexField) -> Result<ComplexField> {
        if h.spec() != &self.spec {
            return Err(Error::GridMismatch);
        }
        Ok(ComplexField::from_values(self.spec.padded(), self.pad(h)).expect("finite input"))
    }
}

/// `T h(ζ)` by direct summation over cells with the exact cell-integrated
/// kernel; `ζ` need not be a cell center.
pub fn cauchy_t_at(h: &ComplexField, zeta: Complex64) -> Complex64 {
    let spec = h.spec();
    let spacing = spec.spacing();
    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, value) in h.values().iter().enumerate() {
        if value.norm_sqr() == 0.0 {
            continue;
        }
        let d = (zeta - spec.point(idx)) / spacing;
        acc += value * cell_average_inverse(d.re, d.im);
    }
    acc * (spacing / PI)
}

fn transpose_square(buf: &mut [Complex64], m: usize) {
    for row in 0..m {
        for col in row + 1..m {
            buf.swap(row * m + col, col * m + row);
        }
    }
}

/// `(1/h) ∬_cell du / u` over the unit-spaced cell centered at `(dx, dy)`,
/// in cell units: the exact average of `1/u` times the cell side.
fn cell_average_inverse(dx: f64, dy: f64) -> Complex64 {
    // Mixed antiderivative of x/(x²+y²); swapping arguments gives the one of
    // y/(x²+y²). Both extend continuously by 0 to the axes.
    fn p(x: f64, y: f64) -> f64 {
        let r2 = x * x + y * y;
        let log_term = if y == 0.0 { 0.0 } else { 0.5 * y * r2.ln() };
        let atan_term = if x == 0.0 { 0.0 } else { x * (y / x).atan() };
        log_term + atan_term
    }
    let q = |x: f64, y: f64| p(y, x);
    let (x1, x2, y1, y2) = (dx - 0.5, dx + 0.5, dy - 0.5, dy + 0.5);
    let mixed = |g: &dyn Fn(f64, f64) -> f64| g(x2, y2) - g(x1, y2) - g(x2, y1) + g(x1, y1);
    Complex64::new(mixed(&|x, y| p(x, y)), -mixed(&q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_average_matches_midpoint_far_away() {
        let exact = cell_average_inverse(40.0, -25.0);
        let mid = Complex64::new(1.0, 0.0) / Complex64::new(40.0, -25.0);
        assert!((exact - mid).norm() < 1e-5 * mid.norm());
    }

    #[test]
    fn center_cell_average_vanishes() {
        assert!(cell_average_inverse(0.0, 0.0).norm() < 1e-14);
    }

    #[test]
    fn cell_average_against_tensor_gauss() {
        // brute-force midpoint refinement on a near cell
        let (dx, dy) = (1.0, 2.0);
        let m = 400;
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..m {
            for b in 0..m {
                let u = Complex64::new(dx - 0.5 + (a as f64 + 0.5) / m as f64, dy - 0.5 + (b as f64 + 0.5) / m as f64);
                acc += u.inv();
            }
        }
        acc /= (m * m) as f64;
        assert!((cell_average_inverse(dx, dy) - acc).norm() < 1e-6);
    }

    #[test]
    fn multiplier_has_unit_modulus_off_zero() {
        let spec = GridSpec::new(Complex64::new(0.5, 0.0), 4.0, 8).unwrap();
        let plan = TransformPlan::new(spec);
        assert_eq!(plan.beurling_multiplier[0], Complex64::new(0.0, 0.0));
        assert!(plan.beurling_multiplier[1..].iter().all(|m| (m.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_margin_support() {
        let spec = GridSpec::new(Complex64::new(0.5, 0.0), 4.0, 16).unwrap();
        let plan = TransformPlan::new(spec);
        let h = ComplexField::constant(spec, Complex64::new(1.0, 0.0));
        assert!(matches!(plan.cauchy_t(&h), Err(Error::Support { .. })));
        assert!(matches!(plan.beurling_s(&h), Err(Error::Support { .. })));
    }
}
