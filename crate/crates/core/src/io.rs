//! Bit-exact file formats: the tensor container, PGM rendering, and the
//! CSV report, so pipeline stages compose via files.
//!
//! Container layout, all little-endian:
//! magic "PILPTNSR" | version u16 | rank u16 | dims rank x u64 |
//! dtype u8 (0 = complex64, 1 = complex128) | interleaved (re, im)
//! payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PILPTNSR";
pub const VERSION: u16 = 1;
pub const MAX_RANK: usize = 4;

/// A tensor read from or written to a container file.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Complex64(ArrayD<Complex32>),
    Complex128(ArrayD<Complex64>),
}

impl Tensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            Tensor::Complex64(a) => a.shape(),
            Tensor::Complex128(a) => a.shape(),
        }
    }

    fn dtype_code(&self) -> u8 {
        match self {
            Tensor::Complex64(_) => 0,
            Tensor::Complex128(_) => 1,
        }
    }

    /// View as complex128, widening if needed.
    pub fn to_complex128(&self) -> ArrayD<Complex64> {
        match self {
            Tensor::Complex64(a) => a.mapv(|z| Complex64::new(z.re as f64, z.im as f64)),
            Tensor::Complex128(a) => a.clone(),
        }
    }
}

pub fn write_tensor<P: AsRef<Path>>(path: P, tensor: &Tensor) -> Result<()> {
    let dims = tensor.dims();
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(Error::InvalidArgument(format!(
            "tensor rank {} outside 1..={MAX_RANK}",
            dims.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u16).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&[tensor.dtype_code()])?;
    match tensor {
        Tensor::Complex64(a) => {
            for z in a.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Tensor::Complex128(a) => {
            for z in a.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::BadMagic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    r.read_exact(&mut buf2)?;
    let rank = u16::from_le_bytes(buf2) as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::DimOverflow(format!("rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut total: u64 = 1;
    for _ in 0..rank {
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let d = u64::from_le_bytes(buf8);
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::DimOverflow(format!("{dims:?} x {d}")))?;
        if total > (1u64 << 32) {
            return Err(Error::DimOverflow(format!("{total} elements")));
        }
        dims.push(d as usize);
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    let elem_bytes: u64 = match dtype[0] {
        0 => 8,
        1 => 16,
        d => return Err(Error::UnsupportedDtype(d)),
    };
    let expected = total * elem_bytes;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len() as u64,
        });
    }
    let shape = IxDyn(&dims);
    match dtype[0] {
        0 => {
            let mut data = Vec::with_capacity(total as usize);
            for chunk in payload.chunks_exact(8).take(total as usize) {
                let re = f32::from_le_bytes(chunk[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
                data.push(Complex32::new(re, im));
            }
            Ok(Tensor::Complex64(
                ArrayD::from_shape_vec(shape, data)
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            ))
        }
        _ => {
            let mut data = Vec::with_capacity(total as usize);
            for chunk in payload.chunks_exact(16).take(total as usize) {
                let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
                let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
                data.push(Complex64::new(re, im));
            }
            Ok(Tensor::Complex128(
                ArrayD::from_shape_vec(shape, data)
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            ))
        }
    }
}

/// Write an 8-bit binary PGM with linear windowing.  With `window` = None
/// the window is [min, max] of the image; a degenerate window renders
/// uniform mid-gray.
pub fn write_pgm<P: AsRef<Path>>(
    path: P,
    image: &ndarray::Array2<f64>,
    window: Option<(f64, f64)>,
) -> Result<()> {
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (nx, ny) = image.dim();
    let (lo, hi) = window.unwrap_or_else(|| {
        let lo = image.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = image.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let mut w = BufWriter::new(File::create(path)?);
    // rows of the file are k_y / image rows: ny lines of nx pixels
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    let degenerate = !(hi > lo);
    for j in 0..ny {
        for i in 0..nx {
            let byte = if degenerate {
                128u8
            } else {
                let t = (image[[i, j]] - lo) / (hi - lo);
                (t.clamp(0.0, 1.0) * 255.0).round() as u8
            };
            w.write_all(&[byte])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read back a binary PGM into pixel bytes (for tests and mask display).
pub fn read_pgm<P: AsRef<Path>>(path: P) -> Result<ndarray::Array2<u8>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    // header is exactly three newline-terminated fields; everything after
    // the third newline is binary payload and may itself contain 0x0A
    let header_fields: Vec<&[u8]> = bytes.splitn(4, |&b| b == b'\n').collect();
    if header_fields.len() < 4 || header_fields[0] != b"P5" {
        return Err(Error::InvalidArgument("not a binary PGM".into()));
    }
    let dims: Vec<usize> = std::str::from_utf8(header_fields[1])
        .map_err(|_| Error::InvalidArgument("bad PGM header".into()))?
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if dims.len() != 2 {
        return Err(Error::InvalidArgument("bad PGM dimensions".into()));
    }
    let (nx, ny) = (dims[0], dims[1]);
    let payload = header_fields[3];
    if payload.len() < nx * ny {
        return Err(Error::TruncatedPayload {
            expected: (nx * ny) as u64,
            found: payload.len() as u64,
        });
    }
    let mut out = ndarray::Array2::zeros((nx, ny));
    for j in 0..ny {
        for i in 0..nx {
            out[[i, j]] = payload[j * nx + i];
        }
    }
    Ok(out)
}

/// One row of the metric/reconstruction report, mirroring the paper's
/// table columns.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub dataset: String,
    pub kernel: String,
    pub err_vertical: f64,
    pub err_horizontal: f64,
    pub label_v: String,
    pub label_h: String,
    pub nrmse_v: Option<f64>,
    pub nrmse_h: Option<f64>,
}

pub const REPORT_HEADER: &str =
    "dataset,kernel,err_vertical,err_horizontal,label_v,label_h,nrmse_v,nrmse_h";

/// Format with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Append one CSV row, writing the header first when the file is new or
/// empty.  The write is atomic at the row level: the full line is
/// buffered and flushed in one call.
pub fn append_report<P: AsRef<Path>>(path: P, row: &ReportRow) -> Result<()> {
    let path = path.as_ref();
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let fmt_opt = |v: &Option<f64>| v.map(|x| format_sig6(x)).unwrap_or_default();
    let mut line = String::new();
    if need_header {
        line.push_str(REPORT_HEADER);
        line.push('\n');
    }
    line.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        row.dataset,
        row.kernel,
        format_sig6(row.err_vertical),
        format_sig6(row.err_horizontal),
        row.label_v,
        row.label_h,
        fmt_opt(&row.nrmse_v),
        fmt_opt(&row.nrmse_h),
    ));
    f.write_all(line.as_bytes())?;
    Ok(())
}
