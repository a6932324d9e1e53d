//! Complex 2D arrays, centered discrete Fourier transforms, and
//! Fourier-shift utilities.
//!
//! Conventions used throughout the crate:
//! - transforms are unitary (1/sqrt(n) per dimension),
//! - DC sits at index floor(n/2) in every transformed dimension,
//! - k-space shifts are integer grid shifts (circular).

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use crate::{Error, Result};

/// A 2D complex-valued pixel grid (spin density or a coil image).
#[derive(Debug, Clone)]
pub struct ComplexImage {
    pub data: Array2<Complex64>,
    /// (dx, dy) in arbitrary length units.
    pub pixel_spacing: (f64, f64),
}

impl ComplexImage {
    pub fn new(data: Array2<Complex64>, pixel_spacing: (f64, f64)) -> Result<Self> {
        let (nx, ny) = data.dim();
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("image dimensions must be >= 1".into()));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite);
        }
        Ok(Self { data, pixel_spacing })
    }

    pub fn from_data(data: Array2<Complex64>) -> Result<Self> {
        Self::new(data, (1.0, 1.0))
    }
}

/// Cartesian k-space grid matching an image grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSpaceGrid {
    pub n_kx: usize,
    pub n_ky: usize,
    /// (dkx, dky) spacing in 1/length units.
    pub dk: (f64, f64),
}

impl KSpaceGrid {
    /// Grid for an n_x by n_y image with the given pixel spacing.
    pub fn for_image(nx: usize, ny: usize, pixel_spacing: (f64, f64)) -> Self {
        Self {
            n_kx: nx,
            n_ky: ny,
            dk: (
                2.0 * std::f64::consts::PI / (nx as f64 * pixel_spacing.0),
                2.0 * std::f64::consts::PI / (ny as f64 * pixel_spacing.1),
            ),
        }
    }

    /// Centered DC index (floor division).
    pub fn center(&self) -> (usize, usize) {
        (self.n_kx / 2, self.n_ky / 2)
    }
}

pub fn all_finite(a: &Array2<Complex64>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn is_pow2(n: usize) -> bool {
    n.is_power_of_two()
}

/// In-place radix-2 Cooley-Tukey FFT, no normalization, DC at index 0.
fn fft_radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(is_pow2(n));
    if n <= 1 {
        return;
    }
    // bit reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
}

/// Circularly rotate a buffer left by `c` (DC-centered <-> DC-at-zero).
fn rotate_left(buf: &mut [Complex64], c: usize) {
    buf.rotate_left(c);
}

/// Centered unitary 1D DFT: y[q] = n^{-1/2} sum_p x[p] exp(-i 2pi (q-c)(p-c)/n),
/// c = floor(n/2).
pub fn dft1_centered(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    let c = n / 2;
    let scale = 1.0 / (n as f64).sqrt();
    if is_pow2(n) {
        // For even n the centered transform is rotate -> fft -> rotate.
        let mut buf = x.to_vec();
        rotate_left(&mut buf, c);
        fft_radix2(&mut buf, inverse);
        rotate_left(&mut buf, n - c);
        for z in &mut buf {
            *z *= scale;
        }
        buf
    } else {
        let sign = if inverse { 1.0 } else { -1.0 };
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (q, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, &v) in x.iter().enumerate() {
                let ang = sign * 2.0 * std::f64::consts::PI * ((q as f64 - c as f64)
                    * (p as f64 - c as f64))
                    / n as f64;
                acc += v * Complex64::new(ang.cos(), ang.sin());
            }
            *o = acc * scale;
        }
        out
    }
}

fn transform2(data: &Array2<Complex64>, inverse: bool) -> Array2<Complex64> {
    let mut out = data.clone();
    // axis 0 (k_x direction)
    for mut col in out.axis_iter_mut(Axis(1)) {
        let v: Vec<Complex64> = col.iter().copied().collect();
        let t = dft1_centered(&v, inverse);
        for (dst, src) in col.iter_mut().zip(t) {
            *dst = src;
        }
    }
    // axis 1 (k_y direction)
    for mut row in out.axis_iter_mut(Axis(0)) {
        let v: Vec<Complex64> = row.iter().copied().collect();
        let t = dft1_centered(&v, inverse);
        for (dst, src) in row.iter_mut().zip(t) {
            *dst = src;
        }
    }
    out
}

/// Unitary centered 2D DFT of an image; DC lands at (n_x/2, n_y/2).
pub fn dft2(img: &ComplexImage) -> Result<Array2<Complex64>> {
    if !all_finite(&img.data) {
        return Err(Error::NonFinite);
    }
    Ok(transform2(&img.data, false))
}

/// Inverse of [`dft2`].
pub fn idft2(ksp: &Array2<Complex64>) -> Result<ComplexImage> {
    if !all_finite(ksp) {
        return Err(Error::NonFinite);
    }
    ComplexImage::from_data(transform2(ksp, true))
}

/// Raw 2D transforms on plain arrays (used where an image wrapper is noise).
pub fn dft2_raw(data: &Array2<Complex64>) -> Array2<Complex64> {
    transform2(data, false)
}

pub fn idft2_raw(data: &Array2<Complex64>) -> Array2<Complex64> {
    transform2(data, true)
}

/// Circularly shift k-space content by (m_x, m_y) grid units.
///
/// Equivalent to multiplying the underlying image by
/// exp(i (m_x dkx x + m_y dky y)).
pub fn fourier_shift(ksp: &Array2<Complex64>, shift: (i64, i64)) -> Array2<Complex64> {
    let (nx, ny) = ksp.dim();
    let sx = shift.0.rem_euclid(nx as i64) as usize;
    let sy = shift.1.rem_euclid(ny as i64) as usize;
    let mut out = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            out[[(i + sx) % nx, (j + sy) % ny]] = ksp[[i, j]];
        }
    }
    out
}

/// 1D centered inverse DFT along the readout axis of a 3D k-space tensor,
/// producing the hybrid space in which every slice along that axis is an
/// independent 2D problem.
pub fn readout_hybrid(ksp3d: &Array3<Complex64>, readout_axis: usize) -> Result<Array3<Complex64>> {
    if readout_axis > 2 {
        return Err(Error::InvalidArgument(format!(
            "readout axis {readout_axis} out of range for a 3D tensor"
        )));
    }
    let mut out = ksp3d.clone();
    for mut fiber in out.lanes_mut(Axis(readout_axis)) {
        let v: Vec<Complex64> = fiber.iter().copied().collect();
        let t = dft1_centered(&v, true);
        for (dst, src) in fiber.iter_mut().zip(t) {
            *dst = src;
        }
    }
    Ok(out)
}

/// Frobenius norm of a complex matrix.
pub fn norm2(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
