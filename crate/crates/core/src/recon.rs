//! Reconstruction: fill unacquired k-space with GRAPPA kernel
//! interpolation, solve the SPIRiT self-consistency problem, interpolate
//! AUTO-SMASH composite lines, combine coils, and score results.

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::calib::{
    assemble_grappa_system, default_lambda, solve_weights, AutoSmashWeights, CalibrationWeights,
    SpiritKernel,
};
use crate::sampling::{enumerate_kernels, SamplingMask};
use crate::tensor::idft2_raw;
use crate::{Error, Result};

/// Multi-coil k-space with its sampling mask; unacquired entries are
/// exactly zero.
#[derive(Debug, Clone)]
pub struct KSpaceData {
    pub samples: Array3<Complex64>,
    pub mask: SamplingMask,
}

impl KSpaceData {
    /// Retrospectively undersample fully-sampled data.
    pub fn undersample(full: &Array3<Complex64>, mask: SamplingMask) -> Result<Self> {
        let (_, nx, ny) = full.dim();
        if mask.dims() != (nx, ny) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} vs k-space grid {nx}x{ny}",
                mask.dims()
            )));
        }
        let mut samples = full.clone();
        for ((_, i, j), z) in samples.indexed_iter_mut() {
            if !mask.acquired[[i, j]] {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self { samples, mask })
    }

    pub fn coil_count(&self) -> usize {
        self.samples.dim().0
    }
}

/// Output of any reconstruction.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub kspace_full: Array3<Complex64>,
    /// Root-sum-of-squares combined magnitude image.
    pub image: Array2<f64>,
    pub per_coil_images: Array3<Complex64>,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    /// Locations left at zero because their kernel class had no
    /// collected neighbors.
    pub uninterpolatable: usize,
    pub converged: bool,
}

fn finish(kspace_full: Array3<Complex64>, iterations: usize, trace: Vec<f64>,
          uninterpolatable: usize, converged: bool) -> ReconResult {
    let (ncoils, nx, ny) = kspace_full.dim();
    let mut per_coil_images = Array3::zeros((ncoils, nx, ny));
    for j in 0..ncoils {
        let k = Array2::from_shape_fn((nx, ny), |(p, q)| kspace_full[[j, p, q]]);
        let img = idft2_raw(&k);
        for p in 0..nx {
            for q in 0..ny {
                per_coil_images[[j, p, q]] = img[[p, q]];
            }
        }
    }
    let image = rsos_combine(&per_coil_images);
    ReconResult {
        kspace_full,
        image,
        per_coil_images,
        iterations,
        objective_trace: trace,
        uninterpolatable,
        converged,
    }
}

/// Fill each missing sample from its kernel class weights.
pub fn grappa_reconstruct(
    data: &KSpaceData,
    weights: &[CalibrationWeights],
) -> Result<ReconResult> {
    let (ncoils, nx, ny) = data.samples.dim();
    let mut out = data.samples.clone();
    let mut uninterpolatable = 0usize;
    for w in weights {
        if w.kernel.is_uninterpolatable() {
            uninterpolatable += w.kernel.targets.len();
            continue;
        }
        let d_k = w.kernel.displacements.len();
        if w.weights.nrows() != ncoils * d_k || w.weights.ncols() != ncoils {
            return Err(Error::ShapeMismatch(format!(
                "weight matrix {}x{} does not match J={ncoils}, D_k={d_k}",
                w.weights.nrows(),
                w.weights.ncols()
            )));
        }
        for &(i, j) in &w.kernel.targets {
            for target in 0..ncoils {
                let mut acc = Complex64::new(0.0, 0.0);
                for (di, &(u, v)) in w.kernel.displacements.iter().enumerate() {
                    // taps wrap circularly, matching the enumeration
                    let ii = (i as i64 + u).rem_euclid(nx as i64) as usize;
                    let jj = (j as i64 + v).rem_euclid(ny as i64) as usize;
                    for l in 0..ncoils {
                        acc += data.samples[[l, ii, jj]]
                            * w.weights[(di * ncoils + l, target)];
                    }
                }
                out[[target, i, j]] = acc;
            }
        }
    }
    Ok(finish(out, 0, Vec::new(), uninterpolatable, true))
}

/// Enumerate kernels, calibrate each class on the ACR, and reconstruct.
pub fn grappa_pipeline(
    data: &KSpaceData,
    acr: &Array3<Complex64>,
    threshold: (i64, i64),
    lambda: Option<f64>,
) -> Result<ReconResult> {
    let kernels = enumerate_kernels(&data.mask, threshold);
    let mut all = Vec::with_capacity(kernels.len());
    for k in kernels {
        if k.is_uninterpolatable() {
            all.push(CalibrationWeights {
                kernel: k,
                weights: nalgebra::DMatrix::zeros(0, 0),
                residual_rel: 0.0,
            });
            continue;
        }
        let (s, s_acr) = assemble_grappa_system(acr, &k)?;
        let lam = lambda.unwrap_or_else(|| default_lambda(&s));
        all.push(solve_weights(&s, &s_acr, lam, &k)?);
    }
    grappa_reconstruct(data, &all)
}

/// Apply the SPIRiT interpolation operator G (circular convolution).
pub fn apply_g(g: &SpiritKernel, theta: &Array3<Complex64>) -> Array3<Complex64> {
    let (ncoils, nx, ny) = theta.dim();
    let (kw, kh) = g.kernel_size;
    let (cx, cy) = (kw as i64 / 2, kh as i64 / 2);
    let mut out = Array3::zeros((ncoils, nx, ny));
    for target in 0..ncoils {
        for i in 0..nx {
            for j in 0..ny {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..ncoils {
                    for a in 0..kw {
                        for b in 0..kh {
                            let w = g.weights[[target, l, a, b]];
                            if w == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            let ii = (i as i64 + a as i64 - cx).rem_euclid(nx as i64) as usize;
                            let jj = (j as i64 + b as i64 - cy).rem_euclid(ny as i64) as usize;
                            acc += w * theta[[l, ii, jj]];
                        }
                    }
                }
                out[[target, i, j]] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`apply_g`].
pub fn apply_g_adjoint(g: &SpiritKernel, r: &Array3<Complex64>) -> Array3<Complex64> {
    let (ncoils, nx, ny) = r.dim();
    let (kw, kh) = g.kernel_size;
    let (cx, cy) = (kw as i64 / 2, kh as i64 / 2);
    let mut out = Array3::zeros((ncoils, nx, ny));
    for target in 0..ncoils {
        for i in 0..nx {
            for j in 0..ny {
                let v = r[[target, i, j]];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for l in 0..ncoils {
                    for a in 0..kw {
                        for b in 0..kh {
                            let w = g.weights[[target, l, a, b]];
                            if w == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            let ii = (i as i64 + a as i64 - cx).rem_euclid(nx as i64) as usize;
                            let jj = (j as i64 + b as i64 - cy).rem_euclid(ny as i64) as usize;
                            out[[l, ii, jj]] += w.conj() * v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn m_apply(g: &SpiritKernel, theta: &Array3<Complex64>) -> Array3<Complex64> {
    let mut out = apply_g(g, theta);
    out -= theta;
    out
}

fn m_adjoint(g: &SpiritKernel, r: &Array3<Complex64>) -> Array3<Complex64> {
    let mut out = apply_g_adjoint(g, r);
    out -= r;
    out
}

fn inner(a: &Array3<Complex64>, b: &Array3<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sq(a: &Array3<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn mask_free(mask: &SamplingMask, a: &mut Array3<Complex64>) {
    for ((_, i, j), z) in a.indexed_iter_mut() {
        if mask.acquired[[i, j]] {
            *z = Complex64::new(0.0, 0.0);
        }
    }
}

/// Largest eigenvalue of (G - I)^H (G - I), estimated by power iteration.
pub fn spirit_lipschitz(g: &SpiritKernel, nx: usize, ny: usize, iters: usize) -> f64 {
    let ncoils = g.coil_count();
    // deterministic pseudo-random start vector
    let mut v = Array3::from_shape_fn((ncoils, nx, ny), |(c, i, j)| {
        let t = (c * 7919 + i * 104729 + j * 1299709) as f64;
        Complex64::new((t * 0.61803398875).fract() - 0.5, (t * 0.41421356237).fract() - 0.5)
    });
    let mut lambda = 0.0;
    for _ in 0..iters {
        let av = m_adjoint(g, &m_apply(g, &v));
        lambda = norm_sq(&av).sqrt() / norm_sq(&v).sqrt().max(1e-300);
        let n = norm_sq(&av).sqrt().max(1e-300);
        v = av.mapv(|z| z / n);
    }
    lambda
}

/// SPIRiT reconstruction.
///
/// With epsilon = 0 the acquired samples are fixed and conjugate
/// gradients minimize ||G theta - theta||^2 over the missing entries.
/// With epsilon > 0 FISTA minimizes the same objective subject to
/// ||D theta - y||^2 <= epsilon, the prox step projecting the acquired
/// entries back into the data-consistency ball.
pub fn spirit_reconstruct(
    data: &KSpaceData,
    g: &SpiritKernel,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ReconResult> {
    if g.coil_count() != data.coil_count() {
        return Err(Error::ShapeMismatch(format!(
            "kernel has {} coils, data has {}",
            g.coil_count(),
            data.coil_count()
        )));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument("epsilon must be nonnegative".into()));
    }
    if epsilon == 0.0 {
        spirit_cg(data, g, max_iter, tol)
    } else {
        spirit_fista(data, g, epsilon, max_iter, tol)
    }
}

fn spirit_cg(data: &KSpaceData, g: &SpiritKernel, max_iter: usize, tol: f64) -> Result<ReconResult> {
    let mask = &data.mask;
    let free_count = {
        let (ncoils, nx, ny) = data.samples.dim();
        (nx * ny - mask.acquired_count()) * ncoils
    };
    if free_count == 0 {
        return Ok(finish(data.samples.clone(), 0, vec![0.0], 0, true));
    }
    // normal operator restricted to the free variables
    let a_op = |m: &Array3<Complex64>| -> Array3<Complex64> {
        let mut am = m_adjoint(g, &m_apply(g, m));
        mask_free(mask, &mut am);
        am
    };
    let y = data.samples.clone();
    // right-hand side: -P^T M^H M y
    let mut b = m_adjoint(g, &m_apply(g, &y));
    mask_free(mask, &mut b);
    b.mapv_inplace(|z| -z);

    let (ncoils, nx, ny) = y.dim();
    let mut m = Array3::<Complex64>::zeros((ncoils, nx, ny));
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs_old = norm_sq(&r);
    let theta_of = |m: &Array3<Complex64>| {
        let mut t = y.clone();
        t += m;
        t
    };
    let objective = |m: &Array3<Complex64>| norm_sq(&m_apply(g, &theta_of(m)));

    let mut trace = vec![objective(&m)];
    let mut best = m.clone();
    let mut converged = false;
    let mut iters = 0usize;
    for it in 0..max_iter {
        if rs_old.sqrt() < 1e-300 {
            converged = true;
            break;
        }
        let ap = a_op(&p);
        let denom = inner(&p, &ap).re;
        if denom <= 0.0 {
            break;
        }
        let alpha = rs_old / denom;
        let m_next = {
            let mut t = m.clone();
            t.iter_mut().zip(p.iter()).for_each(|(x, &pi)| *x += pi * alpha);
            t
        };
        let obj = objective(&m_next);
        let prev = *trace.last().unwrap();
        if obj > prev {
            // at the numerical floor: keep the previous iterate
            converged = true;
            break;
        }
        m = m_next;
        best = m.clone();
        trace.push(obj);
        iters = it + 1;
        if prev > 0.0 && (prev - obj).abs() / prev.max(1e-300) < tol {
            converged = true;
            break;
        }
        r.iter_mut().zip(ap.iter()).for_each(|(x, &api)| *x -= api * alpha);
        let rs_new = norm_sq(&r);
        let beta = rs_new / rs_old;
        p.iter_mut().zip(r.iter()).for_each(|(x, &ri)| *x = ri + *x * beta);
        rs_old = rs_new;
    }
    let theta = theta_of(&best);
    Ok(finish(theta, iters, trace, 0, converged || iters < max_iter))
}

fn spirit_fista(
    data: &KSpaceData,
    g: &SpiritKernel,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ReconResult> {
    let (_, nx, ny) = data.samples.dim();
    let lip = spirit_lipschitz(g, nx, ny, 20).max(1e-12);
    let step = 0.95 / lip;
    let y_data = &data.samples;
    let mask = &data.mask;
    let mut theta = data.samples.clone();
    let mut momentum = theta.clone();
    let mut t_par = 1.0f64;
    let mut trace = vec![norm_sq(&m_apply(g, &theta))];
    let mut converged = false;
    let mut iters = 0usize;
    let eps_radius = epsilon.sqrt();
    for it in 0..max_iter {
        // gradient step on the momentum point
        let grad = m_adjoint(g, &m_apply(g, &momentum));
        let mut next = momentum.clone();
        next.iter_mut().zip(grad.iter()).for_each(|(x, &gi)| *x -= gi * step);
        // project acquired entries into the epsilon-ball around the data
        let mut dist_sq = 0.0;
        for ((c, i, j), z) in next.indexed_iter() {
            if mask.acquired[[i, j]] {
                dist_sq += (z - y_data[[c, i, j]]).norm_sqr();
            }
        }
        if dist_sq > epsilon {
            let shrink = eps_radius / dist_sq.sqrt();
            for ((c, i, j), z) in next.indexed_iter_mut() {
                if mask.acquired[[i, j]] {
                    let y = y_data[[c, i, j]];
                    *z = y + (*z - y) * shrink;
                }
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t_par * t_par).sqrt()) / 2.0;
        let gamma = (t_par - 1.0) / t_next;
        let mut new_momentum = next.clone();
        new_momentum
            .iter_mut()
            .zip(theta.iter())
            .for_each(|(x, &old)| *x = *x + (*x - old) * gamma);
        theta = next;
        momentum = new_momentum;
        t_par = t_next;
        let obj = norm_sq(&m_apply(g, &theta));
        let prev = *trace.last().unwrap();
        trace.push(obj);
        iters = it + 1;
        if prev > 0.0 && (prev - obj).abs() / prev.max(1e-300) < tol {
            converged = true;
            break;
        }
    }
    Ok(finish(theta, iters, trace, 0, converged || iters < max_iter))
}

/// Reconstruct the composite k-space from data undersampled by M in k_y.
pub fn autosmash_reconstruct(
    data: &KSpaceData,
    weights: &AutoSmashWeights,
    big_m: usize,
) -> Result<Array2<Complex64>> {
    let (ncoils, nx, ny) = data.samples.dim();
    if weights.n0.len() != ncoils {
        return Err(Error::ShapeMismatch(format!(
            "n0 has {} entries for {} coils",
            weights.n0.len(),
            ncoils
        )));
    }
    let collected: Vec<bool> = (0..ny)
        .map(|j| (0..nx).all(|i| data.mask.acquired[[i, j]]))
        .collect();
    if !collected.iter().any(|&c| c) {
        return Err(Error::InvalidArgument("no fully collected k_y lines".into()));
    }
    let mut comp = Array2::<Complex64>::zeros((nx, ny));
    for j in 0..ny {
        if collected[j] {
            for i in 0..nx {
                comp[[i, j]] = (0..ncoils)
                    .map(|l| weights.n0[l] * data.samples[[l, i, j]])
                    .sum();
            }
        } else {
            // nearest collected line at the next index, wrapping circularly
            let mut found = None;
            for m in 1..big_m {
                let src = (j + m) % ny;
                if collected[src] {
                    found = Some((m, src));
                    break;
                }
            }
            let (m, src) = found.ok_or(Error::InvalidArgument(format!(
                "no collected source line within M for missing line {j}"
            )))?;
            let nm = weights
                .nm
                .get(&m)
                .ok_or(Error::MissingShiftWeights(m))?;
            for i in 0..nx {
                comp[[i, j]] = (0..ncoils)
                    .map(|l| nm[l] * data.samples[[l, i, src]])
                    .sum();
            }
        }
    }
    Ok(comp)
}

/// Root-sum-of-squares coil combination.
pub fn rsos_combine(per_coil_images: &Array3<Complex64>) -> Array2<f64> {
    let (ncoils, nx, ny) = per_coil_images.dim();
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        (0..ncoils)
            .map(|c| per_coil_images[[c, i, j]].norm_sqr())
            .sum::<f64>()
            .sqrt()
    })
}

/// Normalized root-mean-square error between two real images.
pub fn nrmse(recon: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    if recon.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            recon.dim(),
            reference.dim()
        )));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference image is all zero".into()));
    }
    let num: f64 = recon
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// Relative k-space error against a fully sampled reference.
pub fn kspace_relative_error(recon: &Array3<Complex64>, reference: &Array3<Complex64>) -> f64 {
    let den: f64 = reference.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let num: f64 = recon
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    num / den.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::spirit_calibrate;
    use crate::sampling::{acr_extract, dc_aligned_offset, uniform_mask};
    use crate::sim::{designed_sensitivities, forward_signal, shepp_logan, DesignedCoilSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn designed_data(
        modes: Vec<(i64, i64)>,
        n: usize,
    ) -> (Array3<Complex64>, crate::sim::CoilSensitivities) {
        let rho = shepp_logan(n, n).unwrap();
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(modes), n, n);
        let ksp = forward_signal(&rho, &sens).unwrap();
        (ksp, sens)
    }

    #[test]
    fn grappa_fully_sampled_identity() {
        let (full, _) = designed_data(vec![(0, 0), (1, 0)], 32);
        let mask = uniform_mask(32, 32, 1, 1, None, (0, 0)).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let res = grappa_reconstruct(&data, &[]).unwrap();
        assert_eq!(res.kspace_full, full);
    }

    #[test]
    fn grappa_designed_exact_recovery() {
        let (full, _) = designed_data(DesignedCoilSpec::mode_grid(3, 3), 64);
        let off = dc_aligned_offset(64, 64, 2, 1);
        let mask = uniform_mask(64, 64, 2, 1, Some((31, 31)), off).unwrap();
        let acr = acr_extract(&full, (31, 31)).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let res = grappa_pipeline(&data, &acr, (1, 1), None).unwrap();
        let err = kspace_relative_error(&res.kspace_full, &full);
        assert!(err < 1e-8, "relative error {err}");
        assert_eq!(res.uninterpolatable, 0);
    }

    #[test]
    fn grappa_acquired_samples_bit_exact() {
        let (full, _) = designed_data(DesignedCoilSpec::mode_grid(3, 3), 32);
        let mask = uniform_mask(32, 32, 2, 1, Some((15, 15)), (0, 0)).unwrap();
        let acr = acr_extract(&full, (15, 15)).unwrap();
        let data = KSpaceData::undersample(&full, mask.clone()).unwrap();
        let res = grappa_pipeline(&data, &acr, (1, 1), None).unwrap();
        for ((c, i, j), z) in res.kspace_full.indexed_iter() {
            if mask.acquired[[i, j]] {
                assert_eq!(*z, full[[c, i, j]]);
            }
        }
    }

    #[test]
    fn grappa_zero_weights_degenerate() {
        let (full, _) = designed_data(vec![(0, 0), (0, 1)], 16);
        let mask = uniform_mask(16, 16, 2, 1, None, (0, 0)).unwrap();
        let data = KSpaceData::undersample(&full, mask.clone()).unwrap();
        let kernels = enumerate_kernels(&mask, (1, 1));
        let weights: Vec<CalibrationWeights> = kernels
            .into_iter()
            .map(|k| {
                let d_k = k.displacements.len();
                CalibrationWeights {
                    weights: nalgebra::DMatrix::zeros(2 * d_k, 2),
                    kernel: k,
                    residual_rel: 0.0,
                }
            })
            .collect();
        let res = grappa_reconstruct(&data, &weights).unwrap();
        for ((c, i, j), z) in res.kspace_full.indexed_iter() {
            if mask.acquired[[i, j]] {
                assert_eq!(*z, full[[c, i, j]]);
            } else {
                assert_eq!(*z, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn grappa_missing_weight_shape_rejected() {
        let (full, _) = designed_data(vec![(0, 0), (0, 1)], 16);
        let mask = uniform_mask(16, 16, 2, 1, None, (0, 0)).unwrap();
        let data = KSpaceData::undersample(&full, mask.clone()).unwrap();
        let kernels = enumerate_kernels(&mask, (1, 1));
        let bad: Vec<CalibrationWeights> = kernels
            .into_iter()
            .map(|k| CalibrationWeights {
                kernel: k,
                weights: nalgebra::DMatrix::zeros(1, 1),
                residual_rel: 0.0,
            })
            .collect();
        assert!(grappa_reconstruct(&data, &bad).is_err());
    }

    #[test]
    fn g_adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let acr = Array3::from_shape_fn((2, 9, 9), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let g = spirit_calibrate(&acr, (3, 3), 1e-6).unwrap();
        let x = Array3::from_shape_fn((2, 8, 8), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let y = Array3::from_shape_fn((2, 8, 8), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let gx = apply_g(&g, &x);
        let gty = apply_g_adjoint(&g, &y);
        let lhs = inner(&gx, &y);
        let rhs = inner(&x, &gty);
        assert!((lhs - rhs).norm() / lhs.norm().max(1e-12) < 1e-10);
    }

    #[test]
    fn spirit_fully_sampled_identity() {
        let (full, _) = designed_data(vec![(0, 0), (0, 1)], 16);
        let mask = uniform_mask(16, 16, 1, 1, None, (0, 0)).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let acr = acr_extract(&full, (9, 9)).unwrap();
        let g = spirit_calibrate(&acr, (3, 3), 1e-6).unwrap();
        let res = spirit_reconstruct(&data, &g, 0.0, 50, 1e-9).unwrap();
        assert_eq!(res.kspace_full, full);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn spirit_acquired_preserved_eps0() {
        let (full, _) = designed_data(DesignedCoilSpec::mode_grid(3, 3), 32);
        let off = dc_aligned_offset(32, 32, 2, 1);
        let mask = uniform_mask(32, 32, 2, 1, Some((15, 15)), off).unwrap();
        let acr = acr_extract(&full, (15, 15)).unwrap();
        let data = KSpaceData::undersample(&full, mask.clone()).unwrap();
        let g = spirit_calibrate(&acr, (3, 3), 1e-8).unwrap();
        let res = spirit_reconstruct(&data, &g, 0.0, 100, 1e-12).unwrap();
        for ((c, i, j), z) in res.kspace_full.indexed_iter() {
            if mask.acquired[[i, j]] {
                assert_eq!(*z, full[[c, i, j]]);
            }
        }
    }

    #[test]
    fn spirit_designed_exact_recovery() {
        let (full, _) = designed_data(DesignedCoilSpec::mode_grid(3, 3), 32);
        let off = dc_aligned_offset(32, 32, 2, 1);
        let mask = uniform_mask(32, 32, 2, 1, Some((15, 15)), off).unwrap();
        let acr = acr_extract(&full, (15, 15)).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let g = spirit_calibrate(&acr, (3, 3), 0.0).unwrap();
        let res = spirit_reconstruct(&data, &g, 0.0, 200, 1e-12).unwrap();
        // self-consistency of the final iterate
        let theta_norm = norm_sq(&res.kspace_full).sqrt();
        let resid = norm_sq(&m_apply(&g, &res.kspace_full)).sqrt();
        assert!(resid / theta_norm < 1e-6, "consistency {}", resid / theta_norm);
        // trace non-increasing after the first iteration
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
        }
        // image close to the reference
        let reference = {
            let data_full =
                KSpaceData::undersample(&full, uniform_mask(32, 32, 1, 1, None, (0, 0)).unwrap())
                    .unwrap();
            grappa_reconstruct(&data_full, &[]).unwrap().image
        };
        let e = nrmse(&res.image, &reference).unwrap();
        assert!(e < 1e-4, "NRMSE {e}");
    }

    #[test]
    fn spirit_fista_eps_positive_runs() {
        let (full, _) = designed_data(DesignedCoilSpec::mode_grid(3, 3), 32);
        let off = dc_aligned_offset(32, 32, 2, 1);
        let mask = uniform_mask(32, 32, 2, 1, Some((15, 15)), off).unwrap();
        let acr = acr_extract(&full, (15, 15)).unwrap();
        let noisy = crate::sim::add_noise(&full, 1e-3, 5).unwrap();
        let data = KSpaceData::undersample(&noisy, mask).unwrap();
        let g = spirit_calibrate(&acr, (3, 3), 1e-6).unwrap();
        let eps = 1e-4;
        let res = spirit_reconstruct(&data, &g, eps, 300, 1e-10).unwrap();
        // the constraint holds at the solution
        let mut dist_sq = 0.0;
        for ((c, i, j), z) in res.kspace_full.indexed_iter() {
            if data.mask.acquired[[i, j]] {
                dist_sq += (z - data.samples[[c, i, j]]).norm_sqr();
            }
        }
        assert!(dist_sq <= eps * 1.0001, "constraint violated: {dist_sq}");
        // and the result is a reasonable reconstruction
        let reference = {
            let data_full =
                KSpaceData::undersample(&full, uniform_mask(32, 32, 1, 1, None, (0, 0)).unwrap())
                    .unwrap();
            grappa_reconstruct(&data_full, &[]).unwrap().image
        };
        let e = nrmse(&res.image, &reference).unwrap();
        assert!(e < 0.05, "NRMSE {e}");
    }

    #[test]
    fn autosmash_m1_composite_only() {
        let (full, _) = designed_data(vec![(0, 0), (0, 1)], 16);
        let mask = uniform_mask(16, 16, 1, 1, None, (0, 0)).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let n0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let w = AutoSmashWeights { n0: n0.clone(), nm: Default::default() };
        let comp = autosmash_reconstruct(&data, &w, 1).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(comp[[i, j]], full[[0, i, j]]);
            }
        }
    }

    #[test]
    fn autosmash_designed_exact() {
        let n = 32usize;
        let rho = shepp_logan(n, n).unwrap();
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(vec![(0, 0), (0, 1)]), n, n);
        let full = forward_signal(&rho, &sens).unwrap();
        let acr = acr_extract(&full, (n, 16)).unwrap();
        let n0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let weights = crate::calib::solve_autosmash(&acr, 2, &n0).unwrap();
        let off = dc_aligned_offset(n, n, 1, 2);
        let mask = uniform_mask(n, n, 1, 2, None, off).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let comp = autosmash_reconstruct(&data, &weights, 2).unwrap();
        // composite sensitivity is the constant 1, so idft2 of the
        // composite must reproduce the phantom
        let img = idft2_raw(&comp);
        let num: f64 = img
            .iter()
            .zip(rho.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = rho.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-6, "composite error {}", num / den);
    }

    #[test]
    fn autosmash_single_coil_fails() {
        let n = 32usize;
        let rho = shepp_logan(n, n).unwrap();
        let sens = designed_sensitivities(&DesignedCoilSpec::unit(vec![(0, 0)]), n, n);
        let full = forward_signal(&rho, &sens).unwrap();
        let acr = acr_extract(&full, (n, 16)).unwrap();
        let n0 = vec![Complex64::new(1.0, 0.0)];
        let weights = crate::calib::solve_autosmash(&acr, 2, &n0).unwrap();
        let off = dc_aligned_offset(n, n, 1, 2);
        let mask = uniform_mask(n, n, 1, 2, None, off).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let comp = autosmash_reconstruct(&data, &weights, 2).unwrap();
        let img = idft2_raw(&comp);
        let num: f64 = img
            .iter()
            .zip(rho.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = rho.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den > 0.05, "single coil should alias, err {}", num / den);
    }

    #[test]
    fn autosmash_missing_shift_weight() {
        let (full, _) = designed_data(vec![(0, 0), (0, 1)], 16);
        let off = dc_aligned_offset(16, 16, 1, 2);
        let mask = uniform_mask(16, 16, 1, 2, None, off).unwrap();
        let data = KSpaceData::undersample(&full, mask).unwrap();
        let w = AutoSmashWeights {
            n0: vec![Complex64::new(1.0, 0.0); 2],
            nm: Default::default(),
        };
        assert!(matches!(
            autosmash_reconstruct(&data, &w, 2),
            Err(Error::MissingShiftWeights(1))
        ));
    }

    #[test]
    fn rsos_cases() {
        let mut imgs = Array3::zeros((1, 2, 2));
        imgs[[0, 0, 0]] = Complex64::new(3.0, -4.0);
        let r = rsos_combine(&imgs);
        assert!((r[[0, 0]] - 5.0).abs() < 1e-12);
        assert_eq!(r[[1, 1]], 0.0);

        let imgs4 = Array3::from_elem((4, 2, 2), Complex64::new(0.0, 2.0));
        let r4 = rsos_combine(&imgs4);
        assert!((r4[[0, 0]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_cases() {
        let a = Array2::from_elem((4, 4), 1.0);
        assert_eq!(nrmse(&a, &a).unwrap(), 0.0);
        let z = Array2::zeros((4, 4));
        assert!((nrmse(&z, &a).unwrap() - 1.0).abs() < 1e-14);
        let two = &a * 2.0;
        assert!((nrmse(&two, &a).unwrap() - 1.0).abs() < 1e-14);
        assert!(nrmse(&a, &z).is_err());
    }
}
