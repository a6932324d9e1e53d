//! Cartesian undersampling masks and kernel enumeration.
//!
//! A kernel is the pattern of collected displacements surrounding an
//! uncollected k-space location, within an infinity-norm threshold.
//! Uncollected locations sharing the same displacement set form one
//! kernel class and are interpolated with the same weights.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::{Error, Result};

/// Boolean acquisition grid with an optional centered auto-calibration region.
#[derive(Debug, Clone)]
pub struct SamplingMask {
    pub acquired: Array2<bool>,
    /// (w, h) of the centered fully-acquired rectangle, when present.
    pub acr_rect: Option<(usize, usize)>,
}

impl SamplingMask {
    pub fn dims(&self) -> (usize, usize) {
        self.acquired.dim()
    }

    pub fn acquired_count(&self) -> usize {
        self.acquired.iter().filter(|&&a| a).count()
    }

    /// Index range [lo, hi) of a centered block of width w in a dimension of size n.
    pub fn centered_range(n: usize, w: usize) -> (usize, usize) {
        let lo = n / 2 - w / 2;
        (lo, lo + w)
    }
}

/// Displacement set shared by a class of uncollected locations.
#[derive(Debug, Clone)]
pub struct KernelPattern {
    /// Integer offsets (u, v) from the target to a collected location.
    pub displacements: Vec<(i64, i64)>,
    /// All grid locations this pattern applies to.
    pub targets: Vec<(usize, usize)>,
}

impl KernelPattern {
    pub fn is_uninterpolatable(&self) -> bool {
        self.displacements.is_empty()
    }

    /// Bounding box of the displacements together with the target.
    pub fn bounding_box(&self) -> ((i64, i64), (i64, i64)) {
        let mut umin = 0;
        let mut umax = 0;
        let mut vmin = 0;
        let mut vmax = 0;
        for &(u, v) in &self.displacements {
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        ((umin, umax), (vmin, vmax))
    }
}

/// Uniform lattice mask: (i, j) is acquired iff (i - o_x) % R_x == 0 and
/// (j - o_y) % R_y == 0, union the centered ACR rectangle.
pub fn uniform_mask(
    n_kx: usize,
    n_ky: usize,
    r_x: usize,
    r_y: usize,
    acr: Option<(usize, usize)>,
    offset: (usize, usize),
) -> Result<SamplingMask> {
    if r_x < 1 || r_y < 1 {
        return Err(Error::InvalidArgument("reduction factors must be >= 1".into()));
    }
    if let Some((w, h)) = acr {
        if w > n_kx || h > n_ky {
            return Err(Error::InvalidArgument(format!(
                "ACR {w}x{h} larger than grid {n_kx}x{n_ky}"
            )));
        }
    }
    let mut acquired = Array2::from_shape_fn((n_kx, n_ky), |(i, j)| {
        (i + r_x * n_kx - offset.0) % r_x == 0 && (j + r_y * n_ky - offset.1) % r_y == 0
    });
    if let Some((w, h)) = acr {
        let (x0, x1) = SamplingMask::centered_range(n_kx, w);
        let (y0, y1) = SamplingMask::centered_range(n_ky, h);
        for i in x0..x1 {
            for j in y0..y1 {
                acquired[[i, j]] = true;
            }
        }
    }
    Ok(SamplingMask { acquired, acr_rect: acr })
}

/// Offset that puts the lattice line through the centered DC index.
pub fn dc_aligned_offset(n_kx: usize, n_ky: usize, r_x: usize, r_y: usize) -> (usize, usize) {
    ((n_kx / 2) % r_x, (n_ky / 2) % r_y)
}

/// Partition all uncollected locations into kernel classes under the
/// infinity-norm threshold (t_x, t_y).
///
/// Neighbor lookups wrap circularly: k-space sampled on the centered
/// grid is periodic, so the location past one edge is the first location
/// of the opposite edge.
pub fn enumerate_kernels(mask: &SamplingMask, threshold: (i64, i64)) -> Vec<KernelPattern> {
    let (nx, ny) = mask.dims();
    let (tx, ty) = threshold;
    let mut classes: BTreeMap<Vec<(i64, i64)>, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..nx {
        for j in 0..ny {
            if mask.acquired[[i, j]] {
                continue;
            }
            let mut set = Vec::new();
            for u in -tx..=tx {
                for v in -ty..=ty {
                    if u == 0 && v == 0 {
                        continue;
                    }
                    let ii = (i as i64 + u).rem_euclid(nx as i64) as usize;
                    let jj = (j as i64 + v).rem_euclid(ny as i64) as usize;
                    if mask.acquired[[ii, jj]] {
                        set.push((u, v));
                    }
                }
            }
            classes.entry(set).or_default().push((i, j));
        }
    }
    classes
        .into_iter()
        .map(|(displacements, targets)| KernelPattern { displacements, targets })
        .collect()
}

/// Copy the centered w x h calibration block out of a J-coil k-space tensor.
pub fn acr_extract(ksp: &Array3<Complex64>, acr: (usize, usize)) -> Result<Array3<Complex64>> {
    let (ncoils, nx, ny) = ksp.dim();
    let (w, h) = acr;
    if w > nx || h > ny {
        return Err(Error::InvalidArgument(format!(
            "ACR {w}x{h} larger than grid {nx}x{ny}"
        )));
    }
    let (x0, _) = SamplingMask::centered_range(nx, w);
    let (y0, _) = SamplingMask::centered_range(ny, h);
    let mut out = Array3::zeros((ncoils, w, h));
    for c in 0..ncoils {
        for i in 0..w {
            for j in 0..h {
                out[[c, i, j]] = ksp[[c, x0 + i, y0 + j]];
            }
        }
    }
    Ok(out)
}

/// Same extraction, but checked against a mask: errors unless the ACR is
/// fully acquired.
pub fn acr_extract_checked(
    ksp: &Array3<Complex64>,
    mask: &SamplingMask,
    acr: (usize, usize),
) -> Result<Array3<Complex64>> {
    let (nx, ny) = mask.dims();
    let (x0, x1) = SamplingMask::centered_range(nx, acr.0);
    let (y0, y1) = SamplingMask::centered_range(ny, acr.1);
    for i in x0..x1 {
        for j in y0..y1 {
            if !mask.acquired[[i, j]] {
                return Err(Error::AcrNotAcquired);
            }
        }
    }
    acr_extract(ksp, acr)
}
