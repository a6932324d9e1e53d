//! Calibration: the linear systems that produce interpolation weights.
//!
//! GRAPPA solves one least-squares problem per kernel class; SPIRiT
//! calibrates a full kernel predicting every coil's center sample from
//! all other taps; AUTO-SMASH fits per-shift coil-combination vectors
//! against a composite line.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use ndarray::{Array3, Array4};

use crate::sampling::KernelPattern;
use crate::{Error, Result};

/// Interpolation weights for one kernel class.
#[derive(Debug, Clone)]
pub struct CalibrationWeights {
    pub kernel: KernelPattern,
    /// [J * D_k x J]; row block d, inner index j maps tap (d, coil j) to
    /// each target coil.
    pub weights: DMatrix<Complex64>,
    /// Relative training residual ||S N - s_acr|| / ||s_acr||.
    pub residual_rel: f64,
}

/// Full SPIRiT interpolation kernel [J x J x k_w x k_h]; the center tap
/// of each coil onto itself is fixed to zero.
#[derive(Debug, Clone)]
pub struct SpiritKernel {
    pub weights: Array4<Complex64>,
    pub kernel_size: (usize, usize),
}

impl SpiritKernel {
    pub fn coil_count(&self) -> usize {
        self.weights.dim().0
    }
}

/// AUTO-SMASH coil-combination vectors: the composite weights n0 and the
/// per-shift interpolation weights for m = 1..M-1.
#[derive(Debug, Clone)]
pub struct AutoSmashWeights {
    pub n0: Vec<Complex64>,
    pub nm: std::collections::BTreeMap<usize, Vec<Complex64>>,
}

/// Default Tikhonov weight for a [rows x cols] calibration matrix.
pub fn default_lambda(s: &DMatrix<Complex64>) -> f64 {
    let fro = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    1e-4 * fro / (s.ncols() as f64).sqrt()
}

/// Build the GRAPPA calibration system for one kernel class.
///
/// Returns (S, s_acr) with S of shape [eta_x*eta_y x J*D_k] and s_acr of
/// shape [eta_x*eta_y x J]: one row per placement of the kernel's target
/// inside the ACR, columns ordered displacement-major then coil.
pub fn assemble_grappa_system(
    acr: &Array3<Complex64>,
    kernel: &KernelPattern,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let (ncoils, w, h) = acr.dim();
    let d_k = kernel.displacements.len();
    if d_k == 0 {
        return Err(Error::InvalidArgument("kernel has no displacements".into()));
    }
    let ((umin, umax), (vmin, vmax)) = kernel.bounding_box();
    let bw = (umax - umin) as usize + 1;
    let bh = (vmax - vmin) as usize + 1;
    if bw > w || bh > h {
        return Err(Error::KernelTooLarge);
    }
    let eta_x = w - bw + 1;
    let eta_y = h - bh + 1;
    let rows = eta_x * eta_y;
    let mut s = DMatrix::<Complex64>::zeros(rows, ncoils * d_k);
    let mut s_acr = DMatrix::<Complex64>::zeros(rows, ncoils);
    let mut r = 0usize;
    for tx in 0..eta_x {
        for ty in 0..eta_y {
            // target position such that the whole bounding box stays inside
            let px = tx as i64 - umin;
            let py = ty as i64 - vmin;
            for (di, &(u, v)) in kernel.displacements.iter().enumerate() {
                for j in 0..ncoils {
                    s[(r, di * ncoils + j)] =
                        acr[[j, (px + u) as usize, (py + v) as usize]];
                }
            }
            for j in 0..ncoils {
                s_acr[(r, j)] = acr[[j, px as usize, py as usize]];
            }
            r += 1;
        }
    }
    Ok((s, s_acr))
}

/// Least-squares solve of A x = b via QR of the stacked regularized
/// system [A; lambda I], with an SVD fallback for rank deficiency.
pub fn lstsq(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    lambda: f64,
) -> Result<DMatrix<Complex64>> {
    let (m, n) = a.shape();
    if m == 0 {
        return Err(Error::InvalidArgument("least-squares system has no rows".into()));
    }
    let (stacked_a, stacked_b) = if lambda > 0.0 {
        let mut sa = DMatrix::<Complex64>::zeros(m + n, n);
        sa.view_mut((0, 0), (m, n)).copy_from(a);
        for i in 0..n {
            sa[(m + i, i)] = Complex64::new(lambda, 0.0);
        }
        let mut sb = DMatrix::<Complex64>::zeros(m + n, b.ncols());
        sb.view_mut((0, 0), (m, b.ncols())).copy_from(b);
        (sa, sb)
    } else {
        (a.clone(), b.clone())
    };
    let qr = stacked_a.clone().qr();
    let rmat = qr.r();
    let diag_max = (0..n).map(|i| rmat[(i, i)].norm()).fold(0.0, f64::max);
    let rank_ok = (0..n).all(|i| rmat[(i, i)].norm() > diag_max * 1e-12) && diag_max > 0.0;
    if rank_ok {
        let qtb = qr.q().adjoint() * &stacked_b;
        let qtb = qtb.view((0, 0), (n, b.ncols())).into_owned();
        if let Some(x) = rmat.solve_upper_triangular(&qtb) {
            return Ok(x);
        }
    }
    // rank-deficient: pseudoinverse through SVD
    let svd = stacked_a.svd(true, true);
    svd.solve(&stacked_b, 1e-12 * diag_max.max(1.0))
        .map_err(|e| Error::SolveFailed(e.to_string()))
}

/// Solve the GRAPPA weights for one kernel class.
pub fn solve_weights(
    s: &DMatrix<Complex64>,
    s_acr: &DMatrix<Complex64>,
    lambda: f64,
    kernel: &KernelPattern,
) -> Result<CalibrationWeights> {
    let n = lstsq(s, s_acr, lambda)?;
    let resid = s * &n - s_acr;
    let num = resid.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let den = s_acr.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let residual_rel = if den > 0.0 { num / den } else { 0.0 };
    Ok(CalibrationWeights {
        kernel: kernel.clone(),
        weights: n,
        residual_rel,
    })
}

/// Calibrate a full SPIRiT kernel from the ACR.
pub fn spirit_calibrate(
    acr: &Array3<Complex64>,
    kernel_size: (usize, usize),
    lambda: f64,
) -> Result<SpiritKernel> {
    let (ncoils, w, h) = acr.dim();
    let (kw, kh) = kernel_size;
    if kw % 2 == 0 || kh % 2 == 0 {
        return Err(Error::InvalidArgument("SPIRiT kernel size must be odd".into()));
    }
    if kw > w || kh > h {
        return Err(Error::KernelTooLarge);
    }
    let eta_x = w - kw + 1;
    let eta_y = h - kh + 1;
    let rows = eta_x * eta_y;
    let taps = kw * kh;
    // full tap matrix, one column per (coil, tap)
    let mut full = DMatrix::<Complex64>::zeros(rows, ncoils * taps);
    let mut r = 0usize;
    for tx in 0..eta_x {
        for ty in 0..eta_y {
            for j in 0..ncoils {
                for a in 0..kw {
                    for b in 0..kh {
                        full[(r, j * taps + a * kh + b)] = acr[[j, tx + a, ty + b]];
                    }
                }
            }
            r += 1;
        }
    }
    let center_tap = (kw / 2) * kh + kh / 2;
    let mut weights = Array4::zeros((ncoils, ncoils, kw, kh));
    for target in 0..ncoils {
        let self_center = target * taps + center_tap;
        // drop the target's own center column
        let mut a = DMatrix::<Complex64>::zeros(rows, ncoils * taps - 1);
        let mut col = 0usize;
        for c in 0..ncoils * taps {
            if c == self_center {
                continue;
            }
            a.set_column(col, &full.column(c));
            col += 1;
        }
        let b = DMatrix::from_column_slice(rows, 1, full.column(self_center).as_slice());
        let x = lstsq(&a, &b, lambda)?;
        // scatter back, skipping the zeroed self-center tap
        let mut col = 0usize;
        for j in 0..ncoils {
            for ta in 0..kw {
                for tb in 0..kh {
                    let c = j * taps + ta * kh + tb;
                    if c == self_center {
                        continue;
                    }
                    weights[[target, j, ta, tb]] = x[(col, 0)];
                    col += 1;
                }
            }
        }
    }
    Ok(SpiritKernel { weights, kernel_size })
}

/// Per-coil relative training residual of a SPIRiT kernel on an ACR.
pub fn spirit_training_residual(acr: &Array3<Complex64>, g: &SpiritKernel) -> Vec<f64> {
    let (ncoils, w, h) = acr.dim();
    let (kw, kh) = g.kernel_size;
    let (cx, cy) = (kw / 2, kh / 2);
    let mut out = Vec::with_capacity(ncoils);
    for target in 0..ncoils {
        let mut num = 0.0;
        let mut den = 0.0;
        for tx in cx..w - cx {
            for ty in cy..h - cy {
                let mut pred = Complex64::new(0.0, 0.0);
                for j in 0..ncoils {
                    for a in 0..kw {
                        for b in 0..kh {
                            pred += g.weights[[target, j, a, b]]
                                * acr[[j, tx + a - cx, ty + b - cy]];
                        }
                    }
                }
                let truth = acr[[target, tx, ty]];
                num += (pred - truth).norm_sqr();
                den += truth.norm_sqr();
            }
        }
        out.push(if den > 0.0 { (num / den).sqrt() } else { 0.0 });
    }
    out
}

/// Build the AUTO-SMASH line system for shift m at one ACS line.
///
/// Sigma rows are the per-coil signals across the readout positions of
/// line `ky`; b is the composite signal of the line at `ky - m` formed
/// with the n0 weights.
pub fn assemble_autosmash_system(
    acs: &Array3<Complex64>,
    ky: usize,
    m: i64,
    n0: &[Complex64],
) -> Result<(DMatrix<Complex64>, DVector<Complex64>)> {
    let (ncoils, nx, ny) = acs.dim();
    if n0.len() != ncoils {
        return Err(Error::ShapeMismatch(format!(
            "n0 has {} entries for {} coils",
            n0.len(),
            ncoils
        )));
    }
    if ky >= ny {
        return Err(Error::InvalidArgument(format!("line index {ky} out of range")));
    }
    let src = ky as i64 - m;
    if src < 0 || src >= ny as i64 {
        return Err(Error::InvalidArgument(format!(
            "ACS line at ky - m = {src} is not present"
        )));
    }
    let src = src as usize;
    let mut sigma = DMatrix::<Complex64>::zeros(nx, ncoils);
    let mut b = DVector::<Complex64>::zeros(nx);
    for i in 0..nx {
        for j in 0..ncoils {
            sigma[(i, j)] = acs[[j, i, ky]];
        }
        b[i] = (0..ncoils).map(|j| n0[j] * acs[[j, i, src]]).sum();
    }
    Ok((sigma, b))
}

/// Fit all AUTO-SMASH shift weights for an undersampling factor M by
/// stacking every valid ACS line pair.
pub fn solve_autosmash(
    acs: &Array3<Complex64>,
    big_m: usize,
    n0: &[Complex64],
) -> Result<AutoSmashWeights> {
    let (ncoils, nx, ny) = acs.dim();
    if big_m < 1 {
        return Err(Error::InvalidArgument("undersampling factor must be >= 1".into()));
    }
    let mut nm = std::collections::BTreeMap::new();
    for m in 1..big_m {
        let lines: Vec<usize> = (m..ny).collect();
        let mut sigma = DMatrix::<Complex64>::zeros(nx * lines.len(), ncoils);
        let mut b = DVector::<Complex64>::zeros(nx * lines.len());
        for (li, &ky) in lines.iter().enumerate() {
            let (s_line, b_line) = assemble_autosmash_system(acs, ky, m as i64, n0)?;
            sigma.view_mut((li * nx, 0), (nx, ncoils)).copy_from(&s_line);
            b.view_mut((li * nx, 0), (nx, 1)).copy_from(&b_line);
        }
        let b_mat = DMatrix::from_column_slice(sigma.nrows(), 1, b.as_slice());
        let x = lstsq(&sigma, &b_mat, 0.0)?;
        nm.insert(m, x.column(0).iter().copied().collect());
    }
    Ok(AutoSmashWeights { n0: n0.to_vec(), nm })
}

/// The accuracy-metric test kernels: a 1 x k_w horizontal row and a
/// k_h x 1 vertical column of ones with a zero center, expressed as
/// displacement sets.
pub fn metric_test_kernels(kernel_size: (usize, usize)) -> Result<(KernelPattern, KernelPattern)> {
    let (kw, kh) = kernel_size;
    if kw % 2 == 0 || kh % 2 == 0 || kw < 3 || kh < 3 {
        return Err(Error::InvalidArgument(
            "metric kernel sizes must be odd and at least 3".into(),
        ));
    }
    let half_w = (kw / 2) as i64;
    let half_h = (kh / 2) as i64;
    let horizontal = KernelPattern {
        displacements: (-half_w..=half_w).filter(|&u| u != 0).map(|u| (u, 0)).collect(),
        targets: Vec::new(),
    };
    let vertical = KernelPattern {
        displacements: (-half_h..=half_h).filter(|&v| v != 0).map(|v| (0, v)).collect(),
        targets: Vec::new(),
    };
    Ok((horizontal, vertical))
}
