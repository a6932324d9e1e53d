//! Directional accuracy metric computed from the auto-calibration
//! region: solve the calibration system with a purely horizontal and a
//! purely vertical test kernel and report the relative residual of each.
//! A large residual in a direction means the data cannot be undersampled
//! in that direction and still reconstruct well.

use ndarray::Array3;
use num_complex::Complex64;

use crate::calib::{assemble_grappa_system, metric_test_kernels, solve_weights};
use crate::recon::{grappa_pipeline, nrmse, KSpaceData};
use crate::sampling::{acr_extract, dc_aligned_offset, uniform_mask};
use crate::{Error, Result};

/// Default classification threshold on the relative error.
pub const DEFAULT_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorLabel {
    Small,
    Large,
}

impl std::fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorLabel::Small => write!(f, "small"),
            ErrorLabel::Large => write!(f, "large"),
        }
    }
}

/// Result of the directional metric.
#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub kernel_size: (usize, usize),
    /// Residual of the horizontal test kernel; predicts the quality of
    /// undersampling along k_x.
    pub err_horizontal: f64,
    /// Residual of the vertical test kernel; predicts the quality of
    /// undersampling along k_y.
    pub err_vertical: f64,
    pub threshold: f64,
    pub label_horizontal: ErrorLabel,
    pub label_vertical: ErrorLabel,
}

/// Compute both directional residuals from a fully sampled ACR.
///
/// The solves use lambda = 0 so the metric measures predictability, not
/// regularization.
pub fn directional_metric(acr: &Array3<Complex64>, kernel_size: (usize, usize)) -> Result<AccuracyReport> {
    let (_, w, h) = acr.dim();
    let (kw, kh) = kernel_size;
    if kw >= w || kh >= h {
        return Err(Error::InvalidArgument(format!(
            "ACR {w}x{h} too small for a {kw}x{kh} metric kernel"
        )));
    }
    let (k_h, k_v) = metric_test_kernels(kernel_size)?;
    let (s_h, b_h) = assemble_grappa_system(acr, &k_h)?;
    let (s_v, b_v) = assemble_grappa_system(acr, &k_v)?;
    let w_h = solve_weights(&s_h, &b_h, 0.0, &k_h)?;
    let w_v = solve_weights(&s_v, &b_v, 0.0, &k_v)?;
    let report = AccuracyReport {
        kernel_size,
        err_horizontal: w_h.residual_rel,
        err_vertical: w_v.residual_rel,
        threshold: DEFAULT_THRESHOLD,
        label_horizontal: ErrorLabel::Small,
        label_vertical: ErrorLabel::Small,
    };
    Ok(classify_direction(report, DEFAULT_THRESHOLD))
}

/// Label each direction: large if the error strictly exceeds the
/// threshold, else small.
pub fn classify_direction(mut report: AccuracyReport, threshold: f64) -> AccuracyReport {
    report.threshold = threshold;
    report.label_horizontal = if report.err_horizontal > threshold {
        ErrorLabel::Large
    } else {
        ErrorLabel::Small
    };
    report.label_vertical = if report.err_vertical > threshold {
        ErrorLabel::Large
    } else {
        ErrorLabel::Small
    };
    report
}

/// Metric-vs-reconstruction consistency check on a fully sampled dataset.
#[derive(Debug, Clone)]
pub struct ConsistencyRecord {
    pub report: AccuracyReport,
    /// NRMSE of GRAPPA under horizontal-only undersampling (along k_x).
    pub nrmse_horizontal: f64,
    /// NRMSE of GRAPPA under vertical-only undersampling (along k_y).
    pub nrmse_vertical: f64,
    pub consistent: bool,
}

/// NRMSE considered unambiguously good when both metric errors are small.
const GOOD_NRMSE: f64 = 0.05;

/// Run the directional metric, then GRAPPA reconstructions under
/// horizontal-only and vertical-only undersampling at factor `r`, and
/// report whether the metric's error ordering matches the NRMSE ordering.
pub fn metric_predicts_quality(
    full: &Array3<Complex64>,
    acr_size: (usize, usize),
    kernel_size: (usize, usize),
    r: usize,
) -> Result<ConsistencyRecord> {
    let (_, nx, ny) = full.dim();
    let acr = acr_extract(full, acr_size)?;
    let report = directional_metric(&acr, kernel_size)?;

    let reference = {
        let mask = uniform_mask(nx, ny, 1, 1, None, (0, 0))?;
        let data = KSpaceData::undersample(full, mask)?;
        crate::recon::grappa_reconstruct(&data, &[])?.image
    };
    let threshold = ((kernel_size.0 / 2) as i64, (kernel_size.1 / 2) as i64);
    let recon_nrmse = |r_x: usize, r_y: usize| -> Result<f64> {
        let off = dc_aligned_offset(nx, ny, r_x, r_y);
        let mask = uniform_mask(nx, ny, r_x, r_y, Some(acr_size), off)?;
        let data = KSpaceData::undersample(full, mask)?;
        let res = grappa_pipeline(&data, &acr, threshold, None)?;
        nrmse(&res.image, &reference)
    };
    let nrmse_horizontal = recon_nrmse(r, 1)?;
    let nrmse_vertical = recon_nrmse(1, r)?;

    let consistent = match (report.label_horizontal, report.label_vertical) {
        (ErrorLabel::Small, ErrorLabel::Small) => {
            nrmse_horizontal < GOOD_NRMSE && nrmse_vertical < GOOD_NRMSE
        }
        (ErrorLabel::Large, ErrorLabel::Large) => {
            nrmse_horizontal > GOOD_NRMSE && nrmse_vertical > GOOD_NRMSE
        }
        _ => {
            (report.err_vertical > report.err_horizontal) == (nrmse_vertical > nrmse_horizontal)
        }
    };
    Ok(ConsistencyRecord {
        report,
        nrmse_horizontal,
        nrmse_vertical,
        consistent,
    })
}
