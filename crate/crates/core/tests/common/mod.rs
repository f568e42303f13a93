#![allow(dead_code)]

use beltrami::{ComplexField, GridSpec};
use num_complex::Complex64;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn grid(n: usize) -> GridSpec {
    GridSpec::new(c(0.5, 0.0), 4.0, n).unwrap()
}

/// `((K-1)/(K+1)) z/conj(z)` on the unit disk, zero elsewhere and at 0.
pub fn radial_stretch_mu(spec: GridSpec, k: f64) -> ComplexField {
    ComplexField::make(spec, |z| {
        if z.norm() < 1.0 && z.norm() > 0.0 {
            z / z.conj() * ((k - 1.0) / (k + 1.0))
        } else {
            c(0.0, 0.0)
        }
    })
    .unwrap()
}

/// The closed-form map `z |z|^{K-1}` inside the unit disk, `z` outside.
pub fn radial_stretch_map(z: Complex64, k: f64) -> Complex64 {
    if z.norm() <= 1.0 {
        z * z.norm().powf(k - 1.0)
    } else {
        z
    }
}

/// `∂_z` of the radial stretch: `((K+1)/2) |z|^{K-1}` inside.
pub fn radial_stretch_fz(z: Complex64, k: f64) -> Complex64 {
    if z.norm() < 1.0 {
        c(0.5 * (k + 1.0) * z.norm().powf(k - 1.0), 0.0)
    } else {
        c(1.0, 0.0)
    }
}

pub fn disk_indicator(spec: GridSpec, value: Complex64) -> ComplexField {
    ComplexField::make(spec, |z| if z.norm() < 1.0 { value } else { c(0.0, 0.0) }).unwrap()
}

/// A smooth annular bump `amplitude (1 - t²)³` between radii 0.25 and 0.85.
pub fn annulus_bump(spec: GridSpec, amplitude: Complex64) -> ComplexField {
    ComplexField::make(spec, |z| {
        let t = (z.norm() - 0.55) / 0.3;
        if t.abs() < 1.0 {
            amplitude * (1.0 - t * t).powi(3)
        } else {
            c(0.0, 0.0)
        }
    })
    .unwrap()
}

/// Worst error over interior cells against a pointwise oracle.
pub fn interior_sup_error(field: &ComplexField, oracle: impl Fn(Complex64) -> Complex64) -> f64 {
    let spec = field.spec();
    let mut worst: f64 = 0.0;
    for idx in 0..spec.len() {
        let (row, col) = spec.cell_of_index(idx);
        if spec.is_interior(row, col) {
            worst = worst.max((field.values()[idx] - oracle(spec.point(idx))).norm());
        }
    }
    worst
}
