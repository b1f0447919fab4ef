//! Command-line front end: `phantom`, `denoise`, `train`, `gradcheck` and
//! `metrics`. Exit status is 0 on success, 1 on runtime or validation
//! failure and 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::JbfError;
use crate::eval::gradcheck::{gradcheck, GradCheckConfig};
use crate::eval::metrics::{evaluate, MetricsReport};
use crate::filter::{FilterParams, Window};
use crate::optim::{default_initial_params, train, write_loss_csv, TrainConfig, TrainSample};
use crate::optim::{DEFAULT_LR_RANGE, DEFAULT_LR_SPATIAL, DEFAULT_SIGMA_MIN};
use crate::pipeline::{pipeline_forward, resolve_guide, GuideMode, PipelineState, DEFAULT_LAYERS};
use crate::volume::{
    crop, export_pgm_slice, load_volume, make_phantom, save_volume, volume_paths, PgmWindow, Roi,
    Volume,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "jbf", version, about = "Trainable joint bilateral filter")]
pub struct Cli {
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long, global = true, env = "JBF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a clean/noisy ellipsoid phantom pair.
    Phantom(PhantomArgs),
    /// Run a parameter file's pipeline over a volume.
    Denoise(DenoiseArgs),
    /// Fit the kernel widths on paired volumes.
    Train(TrainArgs),
    /// Compare analytical gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// RMSE / PSNR / SSIM between two volumes.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, value_parser = parse_triplet, default_value = "64,64,8")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 20.0)]
    pub noise: f64,
    /// Writes `<out>_clean.{raw,json}` and `<out>_noisy.{raw,json}`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the middle slice of both volumes as 16-bit PGM.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// Guide volume; required iff the parameter file says `"guide_mode": "file"`.
    #[arg(long)]
    pub guide: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Print metrics of the output against this volume.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub data_range: Option<f64>,
    /// Export the middle output slice as 16-bit PGM.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub noisy_dir: PathBuf,
    #[arg(long)]
    pub target_dir: PathBuf,
    /// Per-pair guides, matched by name; needed with `--guide-mode file`.
    #[arg(long)]
    pub guide_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_params: PathBuf,
    #[arg(long)]
    pub out_loss: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LAYERS)]
    pub layers: usize,
    /// Window radii; defaults to ceil(2 sigma) of the initial spatial widths, capped at 7.
    #[arg(long, value_parser = parse_triplet)]
    pub radii: Option<[usize; 3]>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_spatial_init: f64,
    /// Defaults to a tenth of the targets' intensity range.
    #[arg(long)]
    pub sigma_r_init: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LR_RANGE)]
    pub lr_range: f64,
    #[arg(long, default_value_t = DEFAULT_LR_SPATIAL)]
    pub lr_spatial: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIGMA_MIN)]
    pub sigma_min: f64,
    #[arg(long, default_value = "self", value_parser = ["self", "file", "gauss"])]
    pub guide_mode: String,
    #[arg(long)]
    pub gauss_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_triplet, default_value = "5,5,3")]
    pub dims: [usize; 3],
    #[arg(long, value_parser = parse_triplet, default_value = "2,2,1")]
    pub radii: [usize; 3],
    /// `sigma_x,sigma_y,sigma_z,sigma_r`, shared by every layer.
    #[arg(long, value_parser = parse_sigmas, default_value = "1.2,0.8,1.0,30")]
    pub sigmas: [f64; 4],
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Use the input as its own guide and check the combined gradient.
    #[arg(long)]
    pub coupled: bool,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Prediction.
    #[arg(long)]
    pub a: PathBuf,
    /// Reference.
    #[arg(long)]
    pub b: PathBuf,
    /// `x0,y0,z0,dx,dy,dz` half-open box.
    #[arg(long, value_parser = parse_roi)]
    pub roi: Option<Roi>,
    /// Defaults to max - min of the reference.
    #[arg(long)]
    pub data_range: Option<f64>,
    /// Print a CSV header and one row labelled with this name instead of JSON.
    #[arg(long)]
    pub csv: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(JbfError),
}

impl From<JbfError> for CliError {
    fn from(e: JbfError) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult = Result<i32, CliError>;

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> Result<[T; N], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    let len = parts.len();
    parts
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated values, got {len}"))
}

fn parse_triplet(s: &str) -> Result<[usize; 3], String> {
    parse_list(s)
}

fn parse_sigmas(s: &str) -> Result<[f64; 4], String> {
    parse_list(s)
}

fn parse_roi(s: &str) -> Result<Roi, String> {
    let v: [usize; 6] = parse_list(s)?;
    Ok(Roi::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed invocation inside a pool of the requested size.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    let mut buf = Vec::new();
    let result = pool.install(|| match cli.command {
        Command::Phantom(a) => cmd_phantom(&a, &mut buf),
        Command::Denoise(a) => cmd_denoise(&a, &mut buf),
        Command::Train(a) => cmd_train(&a, &mut buf),
        Command::Gradcheck(a) => cmd_gradcheck(&a, &mut buf),
        Command::Metrics(a) => cmd_metrics(&a, &mut buf),
    });
    out.write_all(&buf)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(JbfError::io("<stdout>", e)))?;
    result
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Runtime(JbfError::io("<stdout>", e)))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    s.into()
}

pub fn cmd_phantom(a: &PhantomArgs, out: &mut dyn Write) -> CliResult {
    let p = make_phantom(a.dims, a.seed, a.noise)?;
    let clean = with_suffix(&a.out, "_clean");
    let noisy = with_suffix(&a.out, "_noisy");
    save_volume(&p.clean, &clean)?;
    save_volume(&p.noisy, &noisy)?;
    if a.pgm {
        let z = a.dims[2] / 2;
        export_pgm_slice(
            &p.clean,
            z,
            PgmWindow::default(),
            with_suffix(&a.out, "_clean.pgm"),
        )?;
        export_pgm_slice(
            &p.noisy,
            z,
            PgmWindow::default(),
            with_suffix(&a.out, "_noisy.pgm"),
        )?;
    }
    emit(
        out,
        format!("wrote {} and {}", clean.display(), noisy.display()),
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_denoise(a: &DenoiseArgs, out: &mut dyn Write) -> CliResult {
    let state = PipelineState::load(&a.params)?;
    match (state.guide_mode, &a.guide) {
        (GuideMode::File, None) => {
            return Err(CliError::Usage(
                "parameter file uses guide_mode \"file\" but --guide is missing".into(),
            ))
        }
        (GuideMode::File, Some(g)) => {
            let (raw, json) = volume_paths(g);
            if !raw.exists() || !json.exists() {
                return Err(CliError::Usage(format!(
                    "guide volume {} not found",
                    g.display()
                )));
            }
        }
        (mode, Some(_)) => {
            return Err(CliError::Usage(format!(
                "--guide given but parameter file uses guide_mode {:?}",
                mode.name()
            )))
        }
        (_, None) => {}
    }
    let input = load_volume(&a.input)?;
    let guide_file = a.guide.as_ref().map(load_volume).transpose()?;
    let target = a.target.as_ref().map(load_volume).transpose()?;
    if let Some(t) = &target {
        input.ensure_same_dims(t)?;
    }

    let guide = resolve_guide(&input, &state, guide_file.as_ref())?;
    let tape = pipeline_forward(&input, &guide, &state)?;
    let pred = tape.prediction();
    save_volume(pred, &a.output)?;
    if let Some(path) = &a.pgm {
        export_pgm_slice(pred, pred.dims()[2] / 2, PgmWindow::default(), path)?;
    }
    if let Some(t) = &target {
        let report = evaluate(pred, t, a.data_range)?;
        emit(out, serde_json::to_string(&report).map_err(JbfError::from)?)?;
    }
    Ok(EXIT_OK)
}

fn volume_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| JbfError::io(dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| JbfError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

fn load_pairs(a: &TrainArgs, mode: GuideMode) -> Result<Vec<TrainSample>, CliError> {
    let stems = volume_stems(&a.noisy_dir)?;
    if stems.is_empty() {
        return Err(CliError::Usage(format!(
            "no volumes found in {}",
            a.noisy_dir.display()
        )));
    }
    for stem in &stems {
        let (raw, _) = volume_paths(a.target_dir.join(stem));
        if !raw.exists() {
            return Err(CliError::Usage(format!(
                "{stem} has no partner in {}",
                a.target_dir.display()
            )));
        }
        if let (GuideMode::File, Some(dir)) = (mode, &a.guide_dir) {
            if !volume_paths(dir.join(stem)).0.exists() {
                return Err(CliError::Usage(format!(
                    "{stem} has no guide in {}",
                    dir.display()
                )));
            }
        }
    }
    let mut samples = Vec::with_capacity(stems.len());
    for stem in &stems {
        let noisy = load_volume(a.noisy_dir.join(stem))?;
        let target = load_volume(a.target_dir.join(stem))?;
        noisy.ensure_same_dims(&target)?;
        let guide = match (mode, &a.guide_dir) {
            (GuideMode::File, Some(dir)) => Some(load_volume(dir.join(stem))?),
            _ => None,
        };
        samples.push(TrainSample {
            noisy,
            target,
            guide,
        });
    }
    Ok(samples)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CliResult {
    let mode = GuideMode::parse(&a.guide_mode, a.gauss_sigma)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match (mode, &a.guide_dir) {
        (GuideMode::File, None) => {
            return Err(CliError::Usage(
                "--guide-mode file needs --guide-dir".into(),
            ))
        }
        (GuideMode::File, Some(_)) | (_, None) => {}
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--guide-dir is only valid with --guide-mode file".into(),
            ))
        }
    }
    if a.layers == 0 {
        return Err(CliError::Usage("--layers must be at least 1".into()));
    }
    let samples = load_pairs(a, mode)?;

    let targets: Vec<&Volume> = samples.iter().map(|s| &s.target).collect();
    let mut init = default_initial_params(&targets);
    init.sigma_x = a.sigma_spatial_init;
    init.sigma_y = a.sigma_spatial_init;
    init.sigma_z = a.sigma_spatial_init;
    if let Some(r) = a.sigma_r_init {
        init.sigma_r = r;
    }
    init.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let window = a
        .radii
        .map_or_else(|| Window::for_params(&init), Window::new);
    let state = PipelineState::uniform(a.layers, init, window, mode);
    let cfg = TrainConfig {
        lr_range: a.lr_range,
        lr_spatial: a.lr_spatial,
        epochs: a.epochs,
        seed: a.seed,
        sigma_min: a.sigma_min,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let outcome = train(&samples, &state, &cfg)?;
    outcome.state.save(&a.out_params)?;
    write_loss_csv(&outcome.history, &a.out_loss)?;

    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        emit(
            out,
            format!(
                "epochs {} loss {first:.6} -> {last:.6}",
                outcome.history.len()
            ),
        )?;
    }
    for (i, p) in outcome.state.layers.iter().enumerate() {
        emit(
            out,
            format!(
                "layer {}: sigma_x={:.6} sigma_y={:.6} sigma_z={:.6} sigma_r={:.6}",
                i + 1,
                p.sigma_x,
                p.sigma_y,
                p.sigma_z,
                p.sigma_r
            ),
        )?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult {
    let n: usize = a.dims.iter().product();
    if n == 0 || n > 8 * 8 * 4 {
        return Err(CliError::Usage(format!(
            "dims {:?} outside desk scale (at most 256 voxels)",
            a.dims
        )));
    }
    if a.layers == 0 {
        return Err(CliError::Usage("--layers must be at least 1".into()));
    }
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        return Err(CliError::Usage("--tolerance must be >= 0".into()));
    }
    let cfg = GradCheckConfig {
        dims: a.dims,
        window: Window::new(a.radii),
        layers: vec![FilterParams::from_array(a.sigmas); a.layers],
        seed: a.seed,
        tolerance: a.tolerance,
        coupled_self_guide: a.coupled,
    };
    let report = gradcheck(&cfg).map_err(|e| match e {
        JbfError::InvalidParam(m) => CliError::Usage(m),
        other => CliError::Runtime(other),
    })?;
    if a.json {
        emit(
            out,
            serde_json::to_string_pretty(&report).map_err(JbfError::from)?,
        )?;
    } else {
        emit(out, &report)?;
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_metrics(a: &MetricsArgs, out: &mut dyn Write) -> CliResult {
    let pred = load_volume(&a.a)?;
    let reference = load_volume(&a.b)?;
    pred.ensure_same_dims(&reference)?;
    let (pred, reference) = match &a.roi {
        Some(roi) => (crop(&pred, roi)?, crop(&reference, roi)?),
        None => (pred, reference),
    };
    let report: MetricsReport = evaluate(&pred, &reference, a.data_range)?;
    match &a.csv {
        Some(name) => {
            emit(out, MetricsReport::CSV_HEADER)?;
            emit(out, report.csv_row(name))?;
        }
        None => emit(out, serde_json::to_string(&report).map_err(JbfError::from)?)?,
    }
    Ok(EXIT_OK)
}
