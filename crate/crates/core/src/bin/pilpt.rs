//! Command-line pipeline: simulate -> forward -> mask -> calibrate ->
//! recon -> metric -> report.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};

use pilpt::calib::{assemble_grappa_system, default_lambda, solve_weights, spirit_calibrate};
use pilpt::io::{append_report, read_tensor, write_pgm, write_tensor, ReportRow, Tensor};
use pilpt::metric::{classify_direction, directional_metric};
use pilpt::recon::{
    autosmash_reconstruct, grappa_pipeline, nrmse, spirit_reconstruct, KSpaceData,
};
use pilpt::sampling::{acr_extract, dc_aligned_offset, enumerate_kernels, uniform_mask};
use pilpt::sim::{
    add_noise, birdcage_sensitivities, designed_sensitivities, forward_signal,
    line_condition_number, shepp_logan, BirdcageSpec, CoilSensitivities, DesignedCoilSpec, Line,
    Plane,
};
use pilpt::tensor::{dft2_raw, fourier_shift, idft2_raw, ComplexImage};
use pilpt::Error;

#[derive(Parser)]
#[command(name = "pilpt", version, about = "Parallel MRI reconstruction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoilKind {
    Birdcage,
    Designed,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlaneArg {
    Axial,
    Sagittal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Grappa,
    Spirit,
    Autosmash,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    C64,
    C128,
}

#[derive(Subcommand)]
enum Command {
    /// Generate coil sensitivities and the phantom; print line condition numbers.
    Simulate(SimulateArgs),
    /// Multiply phantom by sensitivities and transform to k-space.
    Forward(ForwardArgs),
    /// Build an undersampling mask, render it, and enumerate its kernels.
    Mask(MaskArgs),
    /// Calibrate interpolation weights from the auto-calibration region.
    Calibrate(CalibrateArgs),
    /// Retrospectively undersample and reconstruct.
    Recon(ReconArgs),
    /// Compute the directional accuracy metric and append a report row.
    Metric(MetricArgs),
    /// Pretty-print an accumulated report CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "birdcage")]
    coils: CoilKind,
    #[arg(long, value_enum, default_value = "axial")]
    plane: PlaneArg,
    /// Number of birdcage elements.
    #[arg(long, default_value_t = 8)]
    elements: usize,
    /// Designed-coil mode grid, e.g. 3x3.
    #[arg(long)]
    modes: Option<String>,
    /// Square grid size in pixels.
    #[arg(long, default_value_t = 128)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    phantom_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "c128")]
    dtype: Dtype,
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    sens: PathBuf,
    #[arg(long)]
    phantom: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Complex Gaussian noise standard deviation per sample.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "c128")]
    dtype: Dtype,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long, default_value_t = 128)]
    nx: usize,
    #[arg(long, default_value_t = 128)]
    ny: usize,
    #[arg(long, default_value_t = 2)]
    rx: usize,
    #[arg(long, default_value_t = 1)]
    ry: usize,
    /// Auto-calibration region side length; 0 for none.
    #[arg(long, default_value_t = 31)]
    acr: usize,
    /// Kernel threshold under the infinity norm.
    #[arg(long, default_value_t = 1)]
    threshold: i64,
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Fully sampled k-space container [J x nx x ny].
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 31)]
    acr: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Undersampling factors used to enumerate kernel classes.
    #[arg(long, default_value_t = 2)]
    rx: usize,
    #[arg(long, default_value_t = 1)]
    ry: usize,
    #[arg(long)]
    lambda: Option<f64>,
    /// Output weight container (SPIRiT) or per-class prefix (GRAPPA).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Fully sampled k-space container; masking is applied retrospectively.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    rx: usize,
    #[arg(long, default_value_t = 1)]
    ry: usize,
    #[arg(long, default_value_t = 31)]
    acr: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long)]
    lambda: Option<f64>,
    /// SPIRiT data-consistency tolerance; 0 fixes the acquired samples.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Write the SPIRiT objective trace as CSV.
    #[arg(long)]
    dump_objective: Option<PathBuf>,
    /// Fully sampled reference container for NRMSE.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "c128")]
    dtype: Dtype,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 31)]
    acr: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, default_value_t = pilpt::metric::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dataset label for the report row.
    #[arg(long, default_value = "dataset")]
    dataset: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::KernelTooLarge => 2,
        Error::NonFinite | Error::SolveFailed(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Forward(a) => cmd_forward(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Recon(a) => cmd_recon(a),
        Command::Metric(a) => cmd_metric(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn save_array3(path: &Path, a: &Array3<Complex64>, dtype: Dtype) -> Result<(), Error> {
    let dyn_a = a.clone().into_dyn();
    save_dyn(path, &dyn_a, dtype)
}

fn save_array2(path: &Path, a: &Array2<Complex64>, dtype: Dtype) -> Result<(), Error> {
    let dyn_a = a.clone().into_dyn();
    save_dyn(path, &dyn_a, dtype)
}

/// Write via a temp sibling then rename, so failures leave no partial file.
fn save_dyn(path: &Path, a: &ArrayD<Complex64>, dtype: Dtype) -> Result<(), Error> {
    let t = match dtype {
        Dtype::C128 => Tensor::Complex128(a.clone()),
        Dtype::C64 => Tensor::Complex64(a.mapv(|z| Complex32::new(z.re as f32, z.im as f32))),
    };
    let tmp = path.with_extension("tmp");
    write_tensor(&tmp, &t)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_rank3(path: &Path) -> Result<Array3<Complex64>, Error> {
    let t = read_tensor(path)?;
    let a = t.to_complex128();
    a.into_dimensionality::<ndarray::Ix3>()
        .map_err(|_| Error::ShapeMismatch(format!("{} is not a rank-3 tensor", path.display())))
}

fn load_rank2(path: &Path) -> Result<Array2<Complex64>, Error> {
    let t = read_tensor(path)?;
    let a = t.to_complex128();
    a.into_dimensionality::<ndarray::Ix2>()
        .map_err(|_| Error::ShapeMismatch(format!("{} is not a rank-2 tensor", path.display())))
}

fn parse_modes(s: &str) -> Result<(i64, i64), Error> {
    let parts: Vec<&str> = s.split('x').collect();
    let bad = || Error::InvalidArgument(format!("modes must look like 3x3, got {s}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let w: i64 = parts[0].parse().map_err(|_| bad())?;
    let h: i64 = parts[1].parse().map_err(|_| bad())?;
    if w < 1 || h < 1 || w % 2 == 0 || h % 2 == 0 {
        return Err(Error::InvalidArgument(
            "mode grid dimensions must be odd and positive".into(),
        ));
    }
    Ok((w, h))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Error> {
    let n = a.grid;
    let rho = shepp_logan(n, n)?;
    let sens: CoilSensitivities = match a.coils {
        CoilKind::Birdcage => {
            let spec = BirdcageSpec {
                elements: a.elements,
                plane: match a.plane {
                    PlaneArg::Axial => Plane::Axial,
                    PlaneArg::Sagittal => Plane::Sagittal,
                },
                grid: (n, n),
                ..BirdcageSpec::default()
            };
            birdcage_sensitivities(&spec)?
        }
        CoilKind::Designed => {
            let (w, h) = parse_modes(a.modes.as_deref().unwrap_or("3x3"))?;
            let spec = DesignedCoilSpec::unit(DesignedCoilSpec::mode_grid(w, h));
            let sens = designed_sensitivities(&spec, n, n);
            // self-test: multiplying by coil j shifts k-space by exactly
            // the coil's mode
            let base = dft2_raw(&rho.data);
            for (j, &(u, v)) in spec.modes.iter().enumerate() {
                let mut weighted = rho.data.clone();
                for p in 0..n {
                    for q in 0..n {
                        weighted[[p, q]] *= sens.maps[[j, p, q]];
                    }
                }
                let got = dft2_raw(&weighted);
                let want = fourier_shift(&base, (u, v));
                let num: f64 = got
                    .iter()
                    .zip(want.iter())
                    .map(|(x, y)| (x - y).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if num > 1e-10 * den.max(1e-300) {
                    return Err(Error::SolveFailed(format!(
                        "designed-coil exactness self-test failed for mode ({u},{v})"
                    )));
                }
            }
            println!("designed-coil exactness self-test passed");
            sens
        }
    };
    if sens.coil_count() == 1 {
        eprintln!("warning: a single coil cannot support parallel imaging");
    }
    let ch = line_condition_number(&sens, Line::Horizontal, n / 2)?;
    let cv = line_condition_number(&sens, Line::Vertical, n / 2)?;
    println!("condition horizontal (center line): {ch:.6e}");
    println!("condition vertical   (center line): {cv:.6e}");
    save_array3(&a.out, &sens.maps, a.dtype)?;
    if let Some(p) = &a.phantom_out {
        save_array2(p, &rho.data, a.dtype)?;
    }
    Ok(())
}

fn cmd_forward(a: ForwardArgs) -> Result<(), Error> {
    let maps = load_rank3(&a.sens)?;
    let rho = ComplexImage::from_data(load_rank2(&a.phantom)?)?;
    let sens = CoilSensitivities { maps };
    let ksp = forward_signal(&rho, &sens)?;
    let ksp = add_noise(&ksp, a.sigma, a.seed)?;
    save_array3(&a.out, &ksp, a.dtype)?;
    println!(
        "wrote {} coils of {}x{} k-space",
        ksp.dim().0,
        ksp.dim().1,
        ksp.dim().2
    );
    Ok(())
}

fn cmd_mask(a: MaskArgs) -> Result<(), Error> {
    let acr = if a.acr == 0 { None } else { Some((a.acr, a.acr)) };
    let offset = dc_aligned_offset(a.nx, a.ny, a.rx, a.ry);
    let mask = uniform_mask(a.nx, a.ny, a.rx, a.ry, acr, offset)?;
    println!(
        "acquired {} of {} samples",
        mask.acquired_count(),
        a.nx * a.ny
    );
    let kernels = enumerate_kernels(&mask, (a.threshold, a.threshold));
    let bad = kernels.iter().filter(|k| k.is_uninterpolatable()).count();
    println!("kernel classes: {} ({} uninterpolatable)", kernels.len(), bad);
    for (i, k) in kernels.iter().enumerate() {
        println!(
            "  class {i}: {} displacements, {} targets",
            k.displacements.len(),
            k.targets.len()
        );
    }
    if let Some(p) = &a.png {
        let img = Array2::from_shape_fn((a.nx, a.ny), |(i, j)| {
            if mask.acquired[[i, j]] { 255.0 } else { 0.0 }
        });
        write_pgm(p, &img, Some((0.0, 255.0)))?;
    }
    Ok(())
}

fn validate_kernel(kernel: usize) -> Result<(), Error> {
    if kernel % 2 == 0 || kernel < 3 {
        return Err(Error::InvalidArgument(format!(
            "kernel size must be odd and at least 3, got {kernel}"
        )));
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), Error> {
    validate_kernel(a.kernel)?;
    let full = load_rank3(&a.input)?;
    let acr = acr_extract(&full, (a.acr, a.acr))?;
    match a.method {
        Method::Spirit => {
            let g = spirit_calibrate(&acr, (a.kernel, a.kernel), a.lambda.unwrap_or(0.0))?;
            println!(
                "calibrated SPIRiT kernel [{} x {} x {} x {}]",
                g.weights.dim().0,
                g.weights.dim().1,
                g.weights.dim().2,
                g.weights.dim().3
            );
            if let Some(out) = &a.out {
                save_dyn(out, &g.weights.clone().into_dyn(), Dtype::C128)?;
            }
            Ok(())
        }
        Method::Grappa => {
            let (_, nx, ny) = full.dim();
            let offset = dc_aligned_offset(nx, ny, a.rx, a.ry);
            let mask = uniform_mask(nx, ny, a.rx, a.ry, Some((a.acr, a.acr)), offset)?;
            let half = (a.kernel / 2) as i64;
            let kernels = enumerate_kernels(&mask, (half, half));
            for (i, k) in kernels.iter().enumerate() {
                if k.is_uninterpolatable() {
                    println!("class {i}: uninterpolatable, skipped");
                    continue;
                }
                let (s, s_acr) = assemble_grappa_system(&acr, k)?;
                let lam = a.lambda.unwrap_or_else(|| default_lambda(&s));
                let w = solve_weights(&s, &s_acr, lam, k)?;
                println!(
                    "class {i}: system {}x{}, relative residual {:.3e}",
                    s.nrows(),
                    s.ncols(),
                    w.residual_rel
                );
                if let Some(out) = &a.out {
                    let (r, c) = (w.weights.nrows(), w.weights.ncols());
                    let arr = ArrayD::from_shape_fn(IxDyn(&[r, c]), |ix| w.weights[(ix[0], ix[1])]);
                    let path = out.with_extension(format!("class{i}.tnsr"));
                    save_dyn(&path, &arr, Dtype::C128)?;
                }
            }
            Ok(())
        }
        Method::Autosmash => Err(Error::InvalidArgument(
            "autosmash calibration runs inside recon; use recon --method autosmash".into(),
        )),
    }
}

fn cmd_recon(a: ReconArgs) -> Result<(), Error> {
    validate_kernel(a.kernel)?;
    let full = load_rank3(&a.input)?;
    let (_, nx, ny) = full.dim();
    let offset = dc_aligned_offset(nx, ny, a.rx, a.ry);
    let mask = uniform_mask(nx, ny, a.rx, a.ry, Some((a.acr, a.acr)), offset)?;
    let acr = acr_extract(&full, (a.acr, a.acr))?;
    let data = KSpaceData::undersample(&full, mask)?;
    let half = (a.kernel / 2) as i64;

    let (result, composite): (Option<pilpt::recon::ReconResult>, Option<Array2<f64>>) =
        match a.method {
            Method::Grappa => {
                let res = grappa_pipeline(&data, &acr, (half, half), a.lambda)?;
                if res.uninterpolatable > 0 {
                    eprintln!(
                        "warning: {} locations uninterpolatable at this threshold",
                        res.uninterpolatable
                    );
                }
                (Some(res), None)
            }
            Method::Spirit => {
                let g = spirit_calibrate(&acr, (a.kernel, a.kernel), a.lambda.unwrap_or(0.0))?;
                let res = spirit_reconstruct(&data, &g, a.epsilon, a.max_iter, a.tol)?;
                println!(
                    "SPIRiT: {} iterations, converged = {}",
                    res.iterations, res.converged
                );
                if let Some(p) = &a.dump_objective {
                    let mut text = String::from("iteration,objective\n");
                    for (i, v) in res.objective_trace.iter().enumerate() {
                        text.push_str(&format!("{i},{v:.17e}\n"));
                    }
                    std::fs::write(p, text)?;
                }
                (Some(res), None)
            }
            Method::Autosmash => {
                if a.rx != 1 {
                    return Err(Error::InvalidArgument(
                        "autosmash undersamples along k_y only; set --rx 1".into(),
                    ));
                }
                let weights = pilpt::calib::solve_autosmash(
                    &acr,
                    a.ry,
                    &autosmash_default_n0(acr.dim().0),
                )?;
                let comp_k = autosmash_reconstruct(&data, &weights, a.ry)?;
                let img = idft2_raw(&comp_k).mapv(|z| z.norm());
                (None, Some(img))
            }
        };

    let image = match (&result, &composite) {
        (Some(r), _) => r.image.clone(),
        (_, Some(img)) => img.clone(),
        _ => unreachable!(),
    };
    if let Some(refp) = &a.reference {
        let ref_full = load_rank3(refp)?;
        let ref_mask = uniform_mask(nx, ny, 1, 1, None, (0, 0))?;
        let ref_data = KSpaceData::undersample(&ref_full, ref_mask)?;
        let ref_res = grappa_pipeline(&ref_data, &acr, (half, half), a.lambda)?;
        println!("NRMSE: {:.6e}", nrmse(&image, &ref_res.image)?);
    }
    if let Some(out) = &a.out {
        match &result {
            Some(r) => save_array3(out, &r.kspace_full, a.dtype)?,
            None => save_array2(out, &composite_to_complex(composite.as_ref().unwrap()), a.dtype)?,
        }
    }
    if let Some(png) = &a.png {
        write_pgm(png, &image, None)?;
    }
    Ok(())
}

fn composite_to_complex(img: &Array2<f64>) -> Array2<Complex64> {
    img.mapv(|v| Complex64::new(v, 0.0))
}

fn autosmash_default_n0(ncoils: usize) -> Vec<Complex64> {
    // uniform composite: every coil weighted equally
    vec![Complex64::new(1.0, 0.0); ncoils]
}

fn cmd_metric(a: MetricArgs) -> Result<(), Error> {
    validate_kernel(a.kernel)?;
    let full = load_rank3(&a.input)?;
    let acr = acr_extract(&full, (a.acr, a.acr))?;
    let rep = directional_metric(&acr, (a.kernel, a.kernel))?;
    let rep = classify_direction(rep, a.threshold);
    println!(
        "vertical error:   {:.6} ({})",
        rep.err_vertical, rep.label_vertical
    );
    println!(
        "horizontal error: {:.6} ({})",
        rep.err_horizontal, rep.label_horizontal
    );
    if let Some(p) = &a.report {
        append_report(
            p,
            &ReportRow {
                dataset: a.dataset.clone(),
                kernel: format!("{}x{}", a.kernel, a.kernel),
                err_vertical: rep.err_vertical,
                err_horizontal: rep.err_horizontal,
                label_v: rep.label_vertical.to_string(),
                label_h: rep.label_horizontal.to_string(),
                nrmse_v: None,
                nrmse_h: None,
            },
        )?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&a.input)?;
    let mut rows: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    if rows.is_empty() {
        println!("(empty report)");
        return Ok(());
    }
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    for r in &mut rows {
        r.resize(cols, String::new());
    }
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        println!("{}", line.join("  "));
    }
    Ok(())
}
