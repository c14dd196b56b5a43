//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for runtime and data errors, 2 for usage
//! errors (bad flags or an invalid configuration).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::background_id::{identify_volume, IdentificationConfig, SliceAxis};
use crate::bias_correction::{correct_volume, Smoothing, SpatialParam};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::field::{Field3, Mask3};
use crate::local_maps::{estimate_field, field_summary};
use crate::phantom::{evaluate, generate, Estimated, PhantomSpec, SignalModel, TauProfile};
use crate::volume_io::{
    read_report, read_volume, write_report, write_volume, DType, Report, ReportFormat, ReportMetadata, ReportRecord,
    Volume4D,
};

#[derive(Debug, Parser)]
#[command(name = "dmri-noise", version, about = "Noise estimation for magnitude diffusion MRI")]
pub struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, env = "DMRI_NOISE_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate (σ_g, N) per slice from automatically selected background voxels.
    Estimate(EstimateArgs),
    /// Estimate voxelwise (σ_g, N) maps from a noise-only acquisition.
    EstimateLocal(EstimateLocalArgs),
    /// Generate a synthetic phantom with known noise parameters.
    Simulate(SimulateArgs),
    /// Remove the noise-floor bias from magnitude data.
    Correct(CorrectArgs),
    /// Percentage error of an estimate against a true σ_g field.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Moments,
    Ml,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Moments => Method::Moments,
            MethodArg::Ml => Method::MaximumLikelihood,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
    Auto,
}

impl From<AxisArg> for SliceAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => SliceAxis::X,
            AxisArg::Y => SliceAxis::Y,
            AxisArg::Z => SliceAxis::Z,
            AxisArg::Auto => SliceAxis::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DTypeArg {
    F32,
    F64,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// 4D magnitude volume (.nii, .nii.gz or .raw).
    pub input: PathBuf,
    /// Two-sided rejection level of the Gamma interval.
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    /// σ candidates in the initial grid search.
    #[arg(long, default_value_t = 50)]
    pub grid_length: usize,
    #[arg(long, default_value_t = 1.0)]
    pub nmin: f64,
    #[arg(long, default_value_t = 12.0)]
    pub nmax: f64,
    /// Slice axis; auto is the last spatial axis.
    #[arg(long, value_enum, default_value_t = AxisArg::Auto)]
    pub axis: AxisArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Moments)]
    pub method: MethodArg,
    /// Background mask output (u8).
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    /// Per-slice report; `.csv` gives CSV, anything else JSON.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    /// Comma-separated volume indices to leave out.
    #[arg(long, value_delimiter = ',')]
    pub exclude_volumes: Vec<usize>,
    /// Cap on outer refinement iterations.
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Relative change of σ̂ and N̂ that ends the refinement.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Fewest background voxels a slice needs.
    #[arg(long, default_value_t = 100)]
    pub min_voxels: usize,
}

#[derive(Debug, Args)]
pub struct EstimateLocalArgs {
    /// Noise-only volume; 3D inputs count as a single volume.
    pub input: PathBuf,
    /// Odd window side, either `3` or `3,3,3`.
    #[arg(long, default_value = "3")]
    pub window: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Moments)]
    pub method: MethodArg,
    /// σ_g map; voxels without an estimate are written as 0.
    #[arg(long)]
    pub sigma_out: Option<PathBuf>,
    /// N map; voxels without an estimate are written as 0.
    #[arg(long)]
    pub n_out: Option<PathBuf>,
    /// JSON summary of both maps.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    pub dtype: DTypeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Stationary,
    SphereRamp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignalArg {
    /// Constant value everywhere (0 for pure noise maps).
    Uniform,
    /// Constant ellipsoid on a zero background.
    Sphere,
    /// Diffusion-weighted ellipsoid on a zero background.
    DiffusionSphere,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON phantom specification; replaces the generation flags below.
    #[arg(long, conflicts_with_all = ["shape", "k", "snr", "n", "profile", "signal", "intensity", "radius", "b_value", "noise_sigma", "seed"])]
    pub spec: Option<PathBuf>,
    /// Grid size `X,Y,Z`.
    #[arg(long, value_delimiter = ',', default_value = "48,48,24")]
    pub shape: Vec<usize>,
    /// Number of volumes.
    #[arg(long, default_value_t = 65)]
    pub k: usize,
    #[arg(long, default_value_t = 30.0)]
    pub snr: f64,
    /// Degrees of freedom; values off the half-integer grid need a zero signal.
    #[arg(long, default_value_t = 1.0)]
    pub n: f64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Stationary)]
    pub profile: ProfileArg,
    #[arg(long, value_enum, default_value_t = SignalArg::DiffusionSphere)]
    pub signal: SignalArg,
    /// Signal level (the value for `uniform`, the inside for `sphere`, s0 for `diffusion-sphere`).
    #[arg(long, default_value_t = 600.0)]
    pub intensity: f64,
    /// Ellipsoid size relative to the grid.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Diffusion weighting in s/mm².
    #[arg(long, default_value_t = 1000.0)]
    pub b_value: f64,
    /// Fixed σ_g instead of mean signal / SNR.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output prefix; files are `<prefix>_noisy`, `_noiseless`, `_sigma`, `_mask` and `_meta.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Extension of the volume files.
    #[arg(long, default_value = "nii.gz")]
    pub format: String,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    pub dtype: DTypeArg,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    pub input: PathBuf,
    /// σ_g as a number or a volume path.
    #[arg(long)]
    pub sigma: String,
    /// N as a number or a volume path.
    #[arg(long)]
    pub n: String,
    /// First-moment estimate: the raw value or a box average.
    #[arg(long, default_value = "none")]
    pub smooth: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    pub dtype: DTypeArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// True σ_g field.
    #[arg(long)]
    pub truth: PathBuf,
    /// Region to compare over (nonzero voxels); defaults to the whole grid.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Per-slice JSON report written by `estimate`.
    #[arg(long, required_unless_present = "field", conflicts_with = "field")]
    pub report: Option<PathBuf>,
    /// Voxelwise σ_g map; zeros mark voxels without an estimate.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Slice axis of the report; defaults to the axis recorded in it.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// JSON error summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("DMRI_NOISE_LOG")
        .format_timestamp(None)
        .try_init();
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Unsupported(_) => 2,
        _ => 1,
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::EstimateLocal(a) => cmd_estimate_local(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Correct(a) => cmd_correct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn load(path: &Path) -> Result<Volume4D> {
    let v = read_volume(path)?;
    if v.clamped_negatives > 0 {
        log::warn!(
            "{}: {} negative samples clamped to 0",
            path.display(),
            v.clamped_negatives
        );
    }
    Ok(v)
}

fn to_value<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    serde_json::to_value(value).map_err(|e| Error::Serialize(e.to_string()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let config = IdentificationConfig {
        p: a.p,
        grid_length: a.grid_length,
        n_min: a.nmin,
        n_max: a.nmax,
        max_outer_iterations: a.max_iterations,
        relative_tolerance: a.tolerance,
        slice_axis: a.axis.into(),
        exclude_volumes: a.exclude_volumes.clone(),
        min_voxels: a.min_voxels,
    };
    config.validate()?;
    let method = Method::from(a.method);
    let volume = load(&a.input)?;
    let result = identify_volume(&volume, &config, method)?;

    let mut records = Vec::with_capacity(result.slices.len());
    let mut failures = 0;
    for (s, slice) in result.slices.iter().enumerate() {
        let record = match slice {
            Ok(r) => ReportRecord {
                slice_index: s,
                sigma: Some(r.estimate.sigma_g),
                n_dof: Some(r.estimate.n_dof),
                voxel_count: r.voxel_count(),
                converged: r.converged,
                method: method.to_string(),
                error: None,
            },
            Err(e) => {
                failures += 1;
                log::info!("slice {s}: {e}");
                ReportRecord {
                    slice_index: s,
                    sigma: None,
                    n_dof: None,
                    voxel_count: 0,
                    converged: false,
                    method: method.to_string(),
                    error: Some(e.to_string()),
                }
            }
        };
        records.push(record);
    }
    if failures == records.len() {
        let first = records.first().and_then(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::NoBackground(format!(
            "all {failures} slices failed; slice 0: {first}"
        )));
    }

    let mut config_echo = to_value(&config)?;
    config_echo["method"] = json!(method.to_string());
    config_echo["axis_index"] = json!(result.axis);
    config_echo["input"] = json!(a.input.display().to_string());
    config_echo["volume_median"] = json!(result.median);
    config_echo["sigma_max"] = json!(result.sigma_max);
    let report = Report {
        metadata: ReportMetadata::new("estimate", config_echo),
        results: records,
    };

    let sigmas: Vec<f64> = report.results.iter().filter_map(|r| r.sigma).collect();
    let ns: Vec<f64> = report.results.iter().filter_map(|r| r.n_dof).collect();
    let median = |v: &[f64]| crate::descriptive::Summary::of(v).map_or(f64::NAN, |s| s.median);
    println!(
        "{} of {} slices estimated; median sigma {:.6}, median N {:.6}",
        sigmas.len(),
        report.results.len(),
        median(&sigmas),
        median(&ns)
    );
    if failures > 0 {
        log::warn!("{failures} slices without an estimate");
    }

    if let Some(path) = &a.mask_out {
        let mask = result.mask(volume.spatial_dims());
        write_volume(&Volume4D::from_mask(&mask), path, DType::U8)?;
    }
    match &a.report_out {
        Some(path) => write_report(&report, path, ReportFormat::from_path(path))?,
        None => {
            for r in &report.results {
                match (r.sigma, r.n_dof) {
                    (Some(s), Some(n)) => println!(
                        "slice {:>4}  sigma {s:.6}  N {n:.6}  voxels {}",
                        r.slice_index, r.voxel_count
                    ),
                    _ => println!("slice {:>4}  failed", r.slice_index),
                }
            }
        }
    }
    Ok(())
}

fn parse_window(text: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("bad window `{text}`: {e}")))?;
    match parts.as_slice() {
        [w] => Ok([*w; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(Error::Config(format!("window `{text}` needs one or three sides"))),
    }
}

fn zero_invalid(field: &Field3) -> Volume4D {
    Volume4D::from_field(&field.map(|v| if v.is_finite() { v } else { 0.0 }))
}

pub fn cmd_estimate_local(a: &EstimateLocalArgs) -> Result<()> {
    let window = parse_window(&a.window)?;
    let method = Method::from(a.method);
    let volume = load(&a.input)?;
    let field = estimate_field(&volume, window, method)?;
    let everywhere = Mask3::filled(volume.spatial_dims(), true);
    let summary = field_summary(&field, &everywhere).map_err(|_| {
        Error::EmptyRegion(format!(
            "no voxel has a usable window: {} volume(s) with window {:?} leave too few distinct samples",
            volume.k(),
            window
        ))
    })?;
    println!(
        "{} of {} voxels estimated; median sigma {:.6}, median N {:.6}",
        field.valid.count(),
        volume.spatial_len(),
        summary.sigma.median,
        summary.n_dof.median
    );

    if let Some(path) = &a.sigma_out {
        write_volume(&zero_invalid(&field.sigma), path, a.dtype.into())?;
    }
    if let Some(path) = &a.n_out {
        write_volume(&zero_invalid(&field.n_dof), path, a.dtype.into())?;
    }
    if let Some(path) = &a.report_out {
        let config = json!({
            "input": a.input.display().to_string(),
            "window": window,
            "method": method.to_string(),
            "volumes": volume.k(),
        });
        let doc = json!({
            "metadata": ReportMetadata::new("estimate-local", config),
            "valid_voxels": field.valid.count(),
            "summary": summary,
        });
        write_json(&doc, path)?;
    }
    Ok(())
}

fn spec_from_flags(a: &SimulateArgs) -> Result<PhantomSpec> {
    let shape: [usize; 3] = a
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| Error::Config(format!("shape needs three sizes, got {:?}", a.shape)))?;
    let signal = match a.signal {
        SignalArg::Uniform => SignalModel::Uniform { value: a.intensity },
        SignalArg::Sphere => SignalModel::Sphere {
            inside: a.intensity,
            outside: 0.0,
            radius: a.radius,
        },
        SignalArg::DiffusionSphere => SignalModel::DiffusionSphere {
            s0: a.intensity,
            radius: a.radius,
            b_value: a.b_value,
        },
    };
    let tau = match a.profile {
        ProfileArg::Stationary => TauProfile::Stationary,
        ProfileArg::SphereRamp => TauProfile::sphere_ramp(),
    };
    Ok(PhantomSpec {
        shape,
        k_volumes: a.k,
        signal,
        snr: a.snr,
        n_dof: a.n,
        tau,
        seed: a.seed,
        noise_sigma: a.noise_sigma,
    })
}

fn read_spec(path: &Path) -> Result<PhantomSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => read_spec(path)?,
        None => spec_from_flags(a)?,
    };
    let ext = a.format.trim_start_matches('.');
    if !matches!(ext, "nii" | "nii.gz" | "raw") {
        return Err(Error::Config(format!(
            "format must be nii, nii.gz or raw, got `{}`",
            a.format
        )));
    }
    let out = generate(&spec)?;
    let dtype = DType::from(a.dtype);
    let mask_dtype = if ext == "raw" { DType::F32 } else { DType::U8 };
    let path = |name: &str| prefixed(&a.out_prefix, &format!("_{name}.{ext}"));

    write_volume(&out.noisy, path("noisy"), dtype)?;
    write_volume(&out.noiseless, path("noiseless"), dtype)?;
    write_volume(&Volume4D::from_field(&out.sigma_true), path("sigma"), dtype)?;
    write_volume(&Volume4D::from_mask(&out.object_mask), path("mask"), mask_dtype)?;

    let mut metadata = ReportMetadata::new("simulate", to_value(&spec)?);
    metadata.seed = Some(spec.seed);
    let doc = json!({
        "metadata": metadata,
        "sigma_g": out.sigma_g,
        "n_dof": out.n_true,
        "mean_signal": out.mean_signal,
        "object_voxels": out.object_mask.count(),
        "dtype": format!("{dtype:?}").to_lowercase(),
    });
    write_json(&doc, &prefixed(&a.out_prefix, "_meta.json"))?;
    println!(
        "sigma_g {:.6} (mean signal {:.6}, N {})",
        out.sigma_g, out.mean_signal, out.n_true
    );
    Ok(())
}

fn spatial_param(text: &str, shape: [usize; 3], what: &str) -> Result<SpatialParam> {
    if let Ok(v) = text.trim().parse::<f64>() {
        return Ok(SpatialParam::Scalar(v));
    }
    let volume = load(Path::new(text))?;
    if volume.k() != 1 {
        return Err(Error::Config(format!(
            "{what} volume {text} must be 3D, it has {} volumes",
            volume.k()
        )));
    }
    let field = volume.to_field();
    if field.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape.to_vec(),
            actual: field.shape().to_vec(),
        });
    }
    Ok(SpatialParam::Field(field))
}

fn parse_smoothing(text: &str) -> Result<Smoothing> {
    match text.to_ascii_lowercase().as_str() {
        "none" => Ok(Smoothing::None),
        s => s
            .strip_prefix("box")
            .and_then(|w| w.parse::<usize>().ok())
            .map(Smoothing::Boxcar)
            .ok_or_else(|| Error::Config(format!("smoothing must be none or boxW (odd W), got `{text}`"))),
    }
}

pub fn cmd_correct(a: &CorrectArgs) -> Result<()> {
    let smoothing = parse_smoothing(&a.smooth)?;
    let volume = load(&a.input)?;
    let shape = volume.spatial_dims();
    let sigma = spatial_param(&a.sigma, shape, "sigma")?;
    let n_dof = spatial_param(&a.n, shape, "N")?;
    let out = correct_volume(&volume, &sigma, &n_dof, smoothing)?;
    write_volume(&out.corrected, &a.out, a.dtype.into())?;
    println!(
        "corrected {} samples; {} clamped to the noise floor, {} unconverged",
        out.corrected.data().len(),
        out.clamped,
        out.unconverged
    );
    Ok(())
}

fn per_slice_values(report: &Report) -> Vec<(usize, f64)> {
    report
        .results
        .iter()
        .filter_map(|r| r.sigma.map(|s| (r.slice_index, s)))
        .collect()
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let truth = load(&a.truth)?.to_field();
    let region = match &a.mask {
        Some(path) => load(path)?.to_mask(),
        None => Mask3::filled(truth.shape(), true),
    };
    if region.count() == 0 {
        return Err(Error::EmptyRegion("the evaluation mask is empty".into()));
    }
    let estimated = match (&a.report, &a.field) {
        (Some(path), _) => {
            let report = read_report(path)?;
            let axis = match a.axis {
                Some(axis) => SliceAxis::from(axis).index(),
                None => report.metadata.config["axis_index"]
                    .as_u64()
                    .map(|v| v as usize)
                    .unwrap_or_else(|| SliceAxis::Auto.index()),
            };
            Estimated::PerSlice {
                axis,
                values: per_slice_values(&report),
            }
        }
        (None, Some(path)) => Estimated::Field(load(path)?.to_field().map(|v| if v > 0.0 { v } else { f64::NAN })),
        (None, None) => return Err(Error::Config("give --report or --field".into())),
    };
    let errors = evaluate(&estimated, &truth, &region)?;
    println!(
        "percentage error: mean {:+.3}, sd {:.3}, mean absolute {:.3} over {} values",
        errors.summary.mean, errors.summary.sd, errors.mean_absolute, errors.summary.count
    );
    if let Some(path) = &a.out {
        let config = json!({
            "truth": a.truth.display().to_string(),
            "mask": a.mask.as_ref().map(|p| p.display().to_string()),
            "report": a.report.as_ref().map(|p| p.display().to_string()),
            "field": a.field.as_ref().map(|p| p.display().to_string()),
        });
        let doc = json!({
            "metadata": ReportMetadata::new("evaluate", config),
            "errors": errors,
        });
        write_json(&doc, path)?;
    }
    Ok(())
}
