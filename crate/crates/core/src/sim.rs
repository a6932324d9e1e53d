//! Ground-truth simulation: Shepp-Logan phantom, coil sensitivity maps
//! (Biot-Savart birdcage and analytically exact designed coils), the
//! forward signal model, noise, and the line condition-number diagnostic.

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{dft2_raw, ComplexImage};
use crate::{Error, Result};

/// Stack of J complex sensitivity maps over the image grid.
#[derive(Debug, Clone)]
pub struct CoilSensitivities {
    pub maps: Array3<Complex64>,
}

impl CoilSensitivities {
    pub fn coil_count(&self) -> usize {
        self.maps.dim().0
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, nx, ny) = self.maps.dim();
        (nx, ny)
    }
}

/// Image plane relative to the birdcage axis (the z axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Transverse plane z = 0.
    Axial,
    /// Plane containing the coil axis; the image's vertical axis is z.
    Sagittal,
}

/// Geometry of a birdcage coil array.
#[derive(Debug, Clone)]
pub struct BirdcageSpec {
    pub elements: usize,
    pub coil_radius: f64,
    pub element_length: f64,
    pub plane: Plane,
    pub fov: (f64, f64),
    pub grid: (usize, usize),
    pub segments_per_element: usize,
}

impl Default for BirdcageSpec {
    fn default() -> Self {
        Self {
            elements: 8,
            coil_radius: 1.0,
            element_length: 2.0,
            plane: Plane::Axial,
            fov: (1.6, 1.6),
            grid: (128, 128),
            segments_per_element: 64,
        }
    }
}

/// Coils whose sensitivities are pure complex exponentials on the grid,
/// so that shifted sensitivities are exactly in the span of the others.
#[derive(Debug, Clone)]
pub struct DesignedCoilSpec {
    /// Spatial-frequency index pairs (u_j, v_j), one per coil.
    pub modes: Vec<(i64, i64)>,
    /// Complex amplitude per coil.
    pub amplitudes: Vec<Complex64>,
}

impl DesignedCoilSpec {
    pub fn unit(modes: Vec<(i64, i64)>) -> Self {
        let amplitudes = vec![Complex64::new(1.0, 0.0); modes.len()];
        Self { modes, amplitudes }
    }

    /// All modes on a w x h grid centered at (0, 0).
    pub fn mode_grid(w: i64, h: i64) -> Vec<(i64, i64)> {
        let mut modes = Vec::new();
        for u in -(w / 2)..=(w / 2) {
            for v in -(h / 2)..=(h / 2) {
                modes.push((u, v));
            }
        }
        modes
    }
}

// Modified Shepp-Logan ellipses: (intensity, a, b, x0, y0, phi_deg).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.605, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// True iff normalized point (x, y) lies inside ellipse `e`.
pub fn inside_ellipse(e: &(f64, f64, f64, f64, f64, f64), x: f64, y: f64) -> bool {
    let (_, a, b, x0, y0, phi_deg) = *e;
    let phi = phi_deg.to_radians();
    let (s, c) = phi.sin_cos();
    let xr = c * (x - x0) + s * (y - y0);
    let yr = -s * (x - x0) + c * (y - y0);
    (xr / a).powi(2) + (yr / b).powi(2) <= 1.0
}

/// The standard ellipse table, exposed so tests can evaluate membership
/// independently.
pub fn shepp_logan_ellipses() -> &'static [(f64, f64, f64, f64, f64, f64); 10] {
    &SHEPP_LOGAN
}

/// Modified Shepp-Logan phantom with values in [0, 1] and support
/// strictly inside the field of view.
pub fn shepp_logan(nx: usize, ny: usize) -> Result<ComplexImage> {
    if nx < 16 || ny < 16 {
        return Err(Error::InvalidArgument(
            "phantom dimensions must be at least 16".into(),
        ));
    }
    let data = Array2::from_shape_fn((nx, ny), |(i, j)| {
        let x = (i as f64 - (nx as f64 - 1.0) / 2.0) / (nx as f64 / 2.0);
        let y = (j as f64 - (ny as f64 - 1.0) / 2.0) / (ny as f64 / 2.0);
        let mut val = 0.0;
        for e in &SHEPP_LOGAN {
            if inside_ellipse(e, x, y) {
                val += e.0;
            }
        }
        Complex64::new(val.clamp(0.0, 1.0), 0.0)
    });
    ComplexImage::from_data(data)
}

/// C_j(x, y) = a_j exp(i 2 pi (u_j (p - cx)/nx + v_j (q - cy)/ny)).
///
/// With the crate's centered DFT, multiplying an image by C_j shifts its
/// k-space content by exactly (u_j, v_j) grid units.
pub fn designed_sensitivities(spec: &DesignedCoilSpec, nx: usize, ny: usize) -> CoilSensitivities {
    let ncoils = spec.modes.len();
    let cx = (nx / 2) as f64;
    let cy = (ny / 2) as f64;
    let mut maps = Array3::zeros((ncoils, nx, ny));
    for (j, &(u, v)) in spec.modes.iter().enumerate() {
        let a = spec.amplitudes[j];
        for p in 0..nx {
            for q in 0..ny {
                let ang = 2.0 * std::f64::consts::PI
                    * (u as f64 * (p as f64 - cx) / nx as f64
                        + v as f64 * (q as f64 - cy) / ny as f64);
                maps[[j, p, q]] = a * Complex64::new(ang.cos(), ang.sin());
            }
        }
    }
    CoilSensitivities { maps }
}

/// Magnetic field of a unit-current straight segment from `a` to `b`
/// evaluated at `p` (finite-segment closed form, constants dropped).
fn segment_field(a: [f64; 3], b: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let r1 = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let r2 = [p[0] - b[0], p[1] - b[1], p[2] - b[2]];
    let cross = [
        u[1] * r1[2] - u[2] * r1[1],
        u[2] * r1[0] - u[0] * r1[2],
        u[0] * r1[1] - u[1] * r1[0],
    ];
    let cross_sq = cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2];
    let u_norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    if cross_sq < 1e-24 || u_norm == 0.0 {
        return [0.0, 0.0, 0.0];
    }
    let r1_norm = (r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2]).sqrt();
    let r2_norm = (r2[0] * r2[0] + r2[1] * r2[1] + r2[2] * r2[2]).sqrt();
    let cos1 = (u[0] * r1[0] + u[1] * r1[1] + u[2] * r1[2]) / (u_norm * r1_norm);
    let cos2 = (u[0] * r2[0] + u[1] * r2[1] + u[2] * r2[2]) / (u_norm * r2_norm);
    let scale = u_norm * (cos1 - cos2) / cross_sq;
    [cross[0] * scale, cross[1] * scale, cross[2] * scale]
}

/// Vertices of element j's rectangular current loop on the cylinder,
/// discretized into straight segments.
fn element_path(spec: &BirdcageSpec, j: usize) -> Vec<[f64; 3]> {
    let r = spec.coil_radius;
    let half_z = spec.element_length / 2.0;
    let phi = 2.0 * std::f64::consts::PI * j as f64 / spec.elements as f64;
    let half_w = std::f64::consts::PI / spec.elements as f64;
    let n_side = (spec.segments_per_element / 4).max(2);
    let mut path = Vec::new();
    let on_cyl = |ang: f64, z: f64| [r * ang.cos(), r * ang.sin(), z];
    // up the leading leg
    for s in 0..n_side {
        let t = s as f64 / n_side as f64;
        path.push(on_cyl(phi - half_w, -half_z + t * spec.element_length));
    }
    // across the top arc
    for s in 0..n_side {
        let t = s as f64 / n_side as f64;
        path.push(on_cyl(phi - half_w + t * 2.0 * half_w, half_z));
    }
    // down the trailing leg
    for s in 0..n_side {
        let t = s as f64 / n_side as f64;
        path.push(on_cyl(phi + half_w, half_z - t * spec.element_length));
    }
    // back along the bottom arc
    for s in 0..n_side {
        let t = s as f64 / n_side as f64;
        path.push(on_cyl(phi + half_w - t * 2.0 * half_w, -half_z));
    }
    path.push(path[0]); // close the loop
    path
}

/// Total field of element j at point `p`.
pub fn element_field(spec: &BirdcageSpec, j: usize, p: [f64; 3]) -> [f64; 3] {
    let path = element_path(spec, j);
    let mut b = [0.0; 3];
    for w in path.windows(2) {
        let f = segment_field(w[0], w[1], p);
        b[0] += f[0];
        b[1] += f[1];
        b[2] += f[2];
    }
    b
}

/// 3D coordinates of pixel (i, j) for the spec's plane and field of view.
pub fn pixel_point(spec: &BirdcageSpec, i: usize, j: usize) -> [f64; 3] {
    let (nx, ny) = spec.grid;
    let x = (i as f64 - (nx as f64 - 1.0) / 2.0) * spec.fov.0 / nx as f64;
    let y = (j as f64 - (ny as f64 - 1.0) / 2.0) * spec.fov.1 / ny as f64;
    match spec.plane {
        Plane::Axial => [x, y, 0.0],
        // image vertical axis runs along the coil axis
        Plane::Sagittal => [x, 0.0, y],
    }
}

/// Per-coil complex sensitivity maps from Biot-Savart integration over
/// each element's discretized current path.  The complex sensitivity is
/// B_x - i B_y of the transverse field (receive convention).
pub fn birdcage_sensitivities(spec: &BirdcageSpec) -> Result<CoilSensitivities> {
    if spec.elements < 1 {
        return Err(Error::InvalidArgument("birdcage needs at least 1 element".into()));
    }
    if spec.coil_radius <= 0.0 {
        return Err(Error::InvalidArgument("coil radius must be positive".into()));
    }
    if spec.segments_per_element < 8 {
        return Err(Error::InvalidArgument("need at least 8 segments per element".into()));
    }
    let (nx, ny) = spec.grid;
    let mut maps = Array3::zeros((spec.elements, nx, ny));
    for j in 0..spec.elements {
        let path = element_path(spec, j);
        for i in 0..nx {
            for q in 0..ny {
                let p = pixel_point(spec, i, q);
                let mut b = [0.0; 3];
                for w in path.windows(2) {
                    let f = segment_field(w[0], w[1], p);
                    b[0] += f[0];
                    b[1] += f[1];
                    b[2] += f[2];
                }
                maps[[j, i, q]] = Complex64::new(b[0], -b[1]);
            }
        }
    }
    Ok(CoilSensitivities { maps })
}

/// Forward signal model: S_j = dft2(C_j * rho) per coil.
pub fn forward_signal(rho: &ComplexImage, sens: &CoilSensitivities) -> Result<Array3<Complex64>> {
    let (nx, ny) = rho.data.dim();
    if sens.grid() != (nx, ny) {
        return Err(Error::ShapeMismatch(format!(
            "phantom {nx}x{ny} vs sensitivity grid {:?}",
            sens.grid()
        )));
    }
    let ncoils = sens.coil_count();
    let mut out = Array3::zeros((ncoils, nx, ny));
    for j in 0..ncoils {
        let weighted = Array2::from_shape_fn((nx, ny), |(p, q)| {
            sens.maps[[j, p, q]] * rho.data[[p, q]]
        });
        let k = dft2_raw(&weighted);
        for p in 0..nx {
            for q in 0..ny {
                out[[j, p, q]] = k[[p, q]];
            }
        }
    }
    Ok(out)
}

/// Add i.i.d. circularly-symmetric complex Gaussian noise with standard
/// deviation `sigma` per complex sample; deterministic given `seed`.
pub fn add_noise(ksp: &Array3<Complex64>, sigma: f64, seed: u64) -> Result<Array3<Complex64>> {
    if sigma < 0.0 {
        return Err(Error::InvalidArgument("noise sigma must be nonnegative".into()));
    }
    if sigma == 0.0 {
        return Ok(ksp.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_component = sigma / (2.0f64).sqrt();
    let mut out = ksp.clone();
    for z in out.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *z += Complex64::new(re * per_component, im * per_component);
    }
    Ok(out)
}

/// Which line of the image grid to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Line {
    /// Fixed second index, varying first index.
    Horizontal,
    /// Fixed first index, varying second index.
    Vertical,
}

/// Condition number of the [n x J] matrix whose columns are each coil's
/// sensitivity along the specified line.  Rank deficiency is reported as
/// +infinity.
pub fn line_condition_number(sens: &CoilSensitivities, line: Line, index: usize) -> Result<f64> {
    let (ncoils, nx, ny) = sens.maps.dim();
    let n = match line {
        Line::Horizontal => {
            if index >= ny {
                return Err(Error::InvalidArgument(format!("line index {index} out of range")));
            }
            nx
        }
        Line::Vertical => {
            if index >= nx {
                return Err(Error::InvalidArgument(format!("line index {index} out of range")));
            }
            ny
        }
    };
    let mut m = DMatrix::<Complex64>::zeros(n, ncoils);
    for j in 0..ncoils {
        for i in 0..n {
            m[(i, j)] = match line {
                Line::Horizontal => sens.maps[[j, i, index]],
                Line::Vertical => sens.maps[[j, index, i]],
            };
        }
    }
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || smin <= smax * 1e-14 {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::fourier_shift;
    use rand::Rng;

    #[test]
    fn phantom_range_and_support() {
        let p = shepp_logan(64, 64).unwrap();
        let mut maxv = 0.0f64;
        for z in p.data.iter() {
            assert!(z.im == 0.0);
            assert!(z.re >= 0.0 && z.re <= 1.0);
            maxv = maxv.max(z.re);
        }
        assert!(maxv > 0.0 && maxv <= 1.0);
        for &(i, j) in &[(0, 0), (0, 63), (63, 0), (63, 63)] {
            assert_eq!(p.data[[i, j]].re, 0.0);
        }
    }

    #[test]
    fn phantom_too_small() {
        assert!(shepp_logan(8, 64).is_err());
    }

    #[test]
    fn phantom_matches_ellipse_oracle() {
        let n = 64usize;
        let p = shepp_logan(n, n).unwrap();
        let ellipses = shepp_logan_ellipses();
        // a pixel inside the outer ellipse only: near the left edge of the skull
        let mut checked = 0;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 - (n as f64 - 1.0) / 2.0) / (n as f64 / 2.0);
                let y = (j as f64 - (n as f64 - 1.0) / 2.0) / (n as f64 / 2.0);
                let memberships: Vec<bool> =
                    ellipses.iter().map(|e| inside_ellipse(e, x, y)).collect();
                if memberships[0] && memberships[1..].iter().all(|&m| !m) {
                    assert_eq!(p.data[[i, j]].re, ellipses[0].0);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn designed_single_constant_coil() {
        let spec = DesignedCoilSpec::unit(vec![(0, 0)]);
        let sens = designed_sensitivities(&spec, 16, 16);
        for z in sens.maps.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn designed_shift_identity_two_coils() {
        let spec = DesignedCoilSpec {
            modes: vec![(0, 0), (0, 1)],
            amplitudes: vec![Complex64::new(0.7, 0.1), Complex64::new(-0.3, 1.1)],
        };
        let n = 16usize;
        let sens = designed_sensitivities(&spec, n, n);
        let c = n / 2;
        let ratio = spec.amplitudes[0] / spec.amplitudes[1];
        for p in 0..n {
            for q in 0..n {
                let ang = 2.0 * std::f64::consts::PI * (q as f64 - c as f64) / n as f64;
                let lhs = Complex64::new(ang.cos(), ang.sin()) * sens.maps[[0, p, q]];
                let rhs = ratio * sens.maps[[1, p, q]];
                assert!((lhs - rhs).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn designed_one_hot_identity_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let modes = DesignedCoilSpec::mode_grid(3, 3);
        let amplitudes: Vec<Complex64> = modes
            .iter()
            .map(|_| Complex64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let spec = DesignedCoilSpec { modes: modes.clone(), amplitudes: amplitudes.clone() };
        let n = 16usize;
        let sens = designed_sensitivities(&spec, n, n);
        let c = n / 2;
        // displacement (0, 1): for any coil l with v_l <= 0 the shifted
        // sensitivity equals a scaled copy of the coil at (u_l, v_l + 1)
        for (l, &(u, v)) in modes.iter().enumerate() {
            if v > 0 {
                continue;
            }
            let target = modes.iter().position(|&m| m == (u, v + 1)).unwrap();
            let scale = amplitudes[l] / amplitudes[target];
            let mut max_err = 0.0f64;
            for p in 0..n {
                for q in 0..n {
                    let ang = 2.0 * std::f64::consts::PI * (q as f64 - c as f64) / n as f64;
                    let lhs = Complex64::new(ang.cos(), ang.sin()) * sens.maps[[l, p, q]];
                    let rhs = scale * sens.maps[[target, p, q]];
                    max_err = max_err.max((lhs - rhs).norm());
                }
            }
            assert!(max_err < 1e-12, "coil {l}: max err {max_err}");
        }
    }

    #[test]
    fn forward_zero_phantom() {
        let rho = ComplexImage::from_data(Array2::from_elem(
            (16, 16),
            Complex64::new(0.0, 0.0),
        ))
        .unwrap();
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(vec![(0, 0), (1, 0)]), 16, 16);
        let ksp = forward_signal(&rho, &sens).unwrap();
        assert!(ksp.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn forward_identity_sensitivity() {
        let rho = shepp_logan(32, 32).unwrap();
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(vec![(0, 0)]), 32, 32);
        let ksp = forward_signal(&rho, &sens).unwrap();
        let direct = dft2_raw(&rho.data);
        for ((_, p, q), z) in ksp.indexed_iter() {
            assert!((z - direct[[p, q]]).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_shift_theorem_designed() {
        let rho = shepp_logan(32, 32).unwrap();
        let sens = designed_sensitivities(
            &DesignedCoilSpec::unit(vec![(0, 0), (2, -1)]),
            32,
            32,
        );
        let ksp = forward_signal(&rho, &sens).unwrap();
        let s0 = Array2::from_shape_fn((32, 32), |(p, q)| ksp[[0, p, q]]);
        let s1 = Array2::from_shape_fn((32, 32), |(p, q)| ksp[[1, p, q]]);
        let shifted = fourier_shift(&s0, (2, -1));
        let err: f64 = s1
            .iter()
            .zip(shifted.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-11);
    }

    #[test]
    fn forward_linearity() {
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(vec![(0, 0), (1, 1)]), 16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r1 = Array2::from_shape_fn((16, 16), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let r2 = Array2::from_shape_fn((16, 16), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let a = Complex64::new(0.4, -0.9);
        let b = Complex64::new(1.3, 0.2);
        let combo = ComplexImage::from_data(&r1 * a + &r2 * b).unwrap();
        let lhs = forward_signal(&combo, &sens).unwrap();
        let k1 = forward_signal(&ComplexImage::from_data(r1).unwrap(), &sens).unwrap();
        let k2 = forward_signal(&ComplexImage::from_data(r2).unwrap(), &sens).unwrap();
        let mut max_rel = 0.0f64;
        let norm: f64 = lhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for (l, (x, y)) in lhs.iter().zip(k1.iter().zip(k2.iter())) {
            max_rel = max_rel.max((l - (x * a + y * b)).norm() / norm);
        }
        assert!(max_rel < 1e-12);
    }

    #[test]
    fn noise_zero_sigma_identity() {
        let ksp = Array3::from_elem((2, 4, 4), Complex64::new(1.0, -1.0));
        let out = add_noise(&ksp, 0.0, 42).unwrap();
        assert_eq!(out, ksp);
    }

    #[test]
    fn noise_deterministic() {
        let ksp = Array3::zeros((2, 8, 8));
        let a = add_noise(&ksp, 0.5, 7).unwrap();
        let b = add_noise(&ksp, 0.5, 7).unwrap();
        assert_eq!(a, b);
        let c = add_noise(&ksp, 0.5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_variance() {
        let ksp = Array3::zeros((1, 100, 100));
        let out = add_noise(&ksp, 1.0, 3).unwrap();
        let n = out.len() as f64;
        let var_re: f64 = out.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let var_im: f64 = out.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        assert!((var_re - 0.5).abs() < 0.025, "re variance {var_re}");
        assert!((var_im - 0.5).abs() < 0.025, "im variance {var_im}");
    }

    #[test]
    fn negative_sigma_rejected() {
        let ksp = Array3::zeros((1, 4, 4));
        assert!(add_noise(&ksp, -1.0, 0).is_err());
    }

    #[test]
    fn condition_single_coil_is_one() {
        let maps = Array3::from_elem((1, 8, 8), Complex64::new(0.3, -0.2));
        let sens = CoilSensitivities { maps };
        let c = line_condition_number(&sens, Line::Horizontal, 4).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_collinear_is_infinite() {
        let mut maps = Array3::zeros((2, 8, 8));
        for i in 0..8 {
            for j in 0..8 {
                let v = Complex64::new(i as f64 + 1.0, j as f64);
                maps[[0, i, j]] = v;
                maps[[1, i, j]] = v * 2.0;
            }
        }
        let sens = CoilSensitivities { maps };
        let c = line_condition_number(&sens, Line::Vertical, 3).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn condition_all_zero_line_is_infinite() {
        let maps = Array3::zeros((3, 8, 8));
        let sens = CoilSensitivities { maps };
        let c = line_condition_number(&sens, Line::Horizontal, 0).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn condition_matches_svd_oracle() {
        // well-conditioned random 32x4: compare against an independent
        // Jacobi-style two-column orthogonalization estimate via the
        // eigenvalues of the 4x4 Gram matrix (power iteration)
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut maps = Array3::zeros((4, 32, 8));
        for z in maps.iter_mut() {
            *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let sens = CoilSensitivities { maps: maps.clone() };
        let cond = line_condition_number(&sens, Line::Horizontal, 2).unwrap();
        // oracle: singular values of the same matrix from nalgebra's
        // symmetric eigen solve of the Gram matrix
        let m = DMatrix::<Complex64>::from_fn(32, 4, |i, j| maps[[j, i, 2]]);
        let gram = m.adjoint() * &m;
        let eig = gram.symmetric_eigenvalues();
        let lmax = eig.iter().cloned().fold(0.0f64, f64::max);
        let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle = (lmax / lmin).sqrt();
        assert!((cond - oracle).abs() / oracle < 1e-10);
    }

    #[test]
    fn birdcage_degenerate_geometry_rejected() {
        let spec = BirdcageSpec { coil_radius: 0.0, ..Default::default() };
        assert!(birdcage_sensitivities(&spec).is_err());
        let spec = BirdcageSpec { elements: 0, grid: (16, 16), ..Default::default() };
        assert!(birdcage_sensitivities(&spec).is_err());
    }

    #[test]
    fn single_element_runs() {
        let spec = BirdcageSpec {
            elements: 1,
            grid: (16, 16),
            segments_per_element: 16,
            ..Default::default()
        };
        let sens = birdcage_sensitivities(&spec).unwrap();
        assert!(sens.maps.iter().all(|z| z.is_finite()));
    }

    #[test]
    fn birdcage_rotational_symmetry_axial() {
        let spec = BirdcageSpec {
            grid: (32, 32),
            segments_per_element: 32,
            ..Default::default()
        };
        let phi = 2.0 * std::f64::consts::PI / 8.0;
        let (s, c) = phi.sin_cos();
        let mut max_rel = 0.0f64;
        for i in 0..32 {
            for j in 0..32 {
                let p = pixel_point(&spec, i, j);
                let b1 = element_field(&spec, 1, p);
                // rotate the point back into coil 0's frame
                let pr = [c * p[0] + s * p[1], -s * p[0] + c * p[1], p[2]];
                let b0 = element_field(&spec, 0, pr);
                // a rotated coil produces the rotated field
                let b0r = [c * b0[0] - s * b0[1], s * b0[0] + c * b0[1], b0[2]];
                let diff = ((b1[0] - b0r[0]).powi(2)
                    + (b1[1] - b0r[1]).powi(2)
                    + (b1[2] - b0r[2]).powi(2))
                .sqrt();
                let mag = (b1[0].powi(2) + b1[1].powi(2) + b1[2].powi(2)).sqrt();
                if mag > 1e-12 {
                    max_rel = max_rel.max(diff / mag);
                }
            }
        }
        assert!(max_rel < 0.01, "rotational symmetry violated: {max_rel}");
    }
}
