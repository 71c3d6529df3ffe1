//! Command-line interface of the `octseg` binary.
//!
//! Three subcommands: `segment` runs the full pipeline over one or more
//! scans, `phantom` renders a synthetic scan with known boundaries, and
//! `eval` scores a predicted boundary table against a truth table.
//!
//! Exit codes: 0 on success (for `eval`: all tolerances met), 1 when at
//! least one scan failed to process or the evaluation exceeded a tolerance,
//! 2 for invocation problems — bad arguments, unreadable or invalid config,
//! malformed tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::image_io::{self, atomic_write};
use crate::layers;
use crate::metrics::ScanMetrics;
use crate::phantom::{self, EvalTolerances, PhantomSpec};

#[derive(Debug, Parser)]
#[command(
    name = "octseg",
    version,
    about = "Retinal layer segmentation for OCT B-scans"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment scans and write boundary tables, metrics and overlays.
    Segment(SegmentArgs),
    /// Render a synthetic scan with known boundaries.
    Phantom(PhantomArgs),
    /// Score predicted boundaries against a truth table.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Input scans (PNG or PGM, grayscale).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Pipeline config (TOML). Falls back to the OCTSEG_CONFIG environment
    /// variable, then to built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files (default: next to each input).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an overlay PNG per scan.
    #[arg(long)]
    overlay: bool,
    /// Output table formats (overrides the config when given).
    #[arg(long, value_delimiter = ',')]
    format: Vec<FormatArg>,
    /// Worker threads when processing several scans (default 1; scans are
    /// distributed across threads, each scan is segmented sequentially).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    /// Phantom description (TOML); the built-in default scan when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory for the rendered files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base name of the written files.
    #[arg(long, default_value = "phantom")]
    name: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted boundary table (CSV).
    pred: PathBuf,
    /// Ground-truth boundary table (CSV).
    truth: PathBuf,
    /// Largest acceptable ILM mean absolute error, in pixels.
    #[arg(long, default_value_t = 2.0)]
    ilm_tolerance: f64,
    /// Largest acceptable RNFL mean absolute error, in pixels.
    #[arg(long, default_value_t = 3.0)]
    rnfl_tolerance: f64,
    /// Largest acceptable RPE mean absolute error, in pixels.
    #[arg(long, default_value_t = 2.0)]
    rpe_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

/// Parses the process arguments and runs the selected subcommand.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Segment(args) => cmd_segment(args),
        Command::Phantom(args) => cmd_phantom(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn cmd_segment(args: SegmentArgs) -> Result<ExitCode> {
    let mut config = RunConfig::resolve(args.config.as_deref())?;
    if args.overlay {
        config.io.overlay = true;
    }
    if !args.format.is_empty() {
        config.io.formats = args.format.iter().map(|&f| f.into()).collect();
        config.io.formats.dedup();
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let jobs = args.jobs.unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {jobs}-thread pool: {e}")))?;
    let outcomes: Vec<Result<()>> = pool.install(|| {
        args.inputs
            .par_iter()
            .map(|input| process_scan(input, &config, args.out.as_deref()))
            .collect()
    });

    let mut failures = 0usize;
    for (input, outcome) in args.inputs.iter().zip(&outcomes) {
        match outcome {
            Ok(()) => println!("{}: ok", input.display()),
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", input.display());
            }
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Segments one scan and writes every selected output next to it (or into
/// `out_dir`). File names derive from the input stem.
fn process_scan(input: &Path, config: &RunConfig, out_dir: Option<&Path>) -> Result<()> {
    let scan = image_io::load_grayscale(input)?;
    let result = layers::segment_all(&scan, config)?;

    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scan".to_string());
    let dir = output_dir(input, out_dir);

    if config.io.wants(OutputFormat::Csv) {
        image_io::write_boundaries_csv(
            &dir.join(format!("{stem}_boundaries.csv")),
            &result.ilm,
            &result.rnfl,
            &result.rpe,
        )?;
        write_metrics_csv(&dir.join(format!("{stem}_metrics.csv")), &result.metrics)?;
    }
    if config.io.wants(OutputFormat::Json) {
        image_io::write_json(&dir.join(format!("{stem}_result.json")), &result)?;
    }
    if config.io.overlay {
        image_io::write_overlay(
            &dir.join(format!("{stem}_overlay.png")),
            &scan,
            &result.ilm,
            &result.rnfl,
            &result.rpe,
        )?;
    }
    Ok(())
}

fn output_dir(input: &Path, out_dir: Option<&Path>) -> PathBuf {
    if let Some(dir) = out_dir {
        return dir.to_path_buf();
    }
    match input.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes per-column thicknesses as CSV. Micrometer columns appear only
/// when the metrics carry a physical scale.
fn write_metrics_csv(path: &Path, metrics: &ScanMetrics) -> Result<()> {
    let with_um = metrics.rnfl.um.is_some() && metrics.total.um.is_some();
    let cols = metrics.rnfl.px.len();
    let mut out = String::with_capacity(cols * 24 + 48);
    if with_um {
        out.push_str("column,rnfl_px,total_px,rnfl_um,total_um\n");
    } else {
        out.push_str("column,rnfl_px,total_px\n");
    }
    for c in 0..cols {
        if with_um {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c,
                metrics.rnfl.px[c],
                metrics.total.px[c],
                metrics.rnfl.um.as_ref().unwrap()[c],
                metrics.total.um.as_ref().unwrap()[c],
            ));
        } else {
            out.push_str(&format!(
                "{},{},{}\n",
                c, metrics.rnfl.px[c], metrics.total.px[c]
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

fn cmd_phantom(args: PhantomArgs) -> Result<ExitCode> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let spec: PhantomSpec = toml::from_str(&text).map_err(|e| {
                Error::Config(format!("{}: invalid phantom spec: {e}", path.display()))
            })?;
            spec
        }
        None => PhantomSpec::default(),
    };

    fs::create_dir_all(&args.out).map_err(|source| Error::Io {
        path: args.out.clone(),
        source,
    })?;
    let rendered = phantom::generate(&spec)?;

    let scan_path = args.out.join(format!("{}.pgm", args.name));
    let truth_path = args.out.join(format!("{}_truth.csv", args.name));
    image_io::save_pgm(&rendered.scan, &scan_path, 65535)?;
    image_io::write_boundaries_csv(
        &truth_path,
        &rendered.ilm,
        &rendered.rnfl,
        &rendered.rpe,
    )?;

    println!("{}", scan_path.display());
    println!("{}", truth_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let pred = image_io::read_boundaries_csv(&args.pred)?;
    let truth = image_io::read_boundaries_csv(&args.truth)?;
    let tolerances = EvalTolerances {
        ilm_mae_px: args.ilm_tolerance,
        rnfl_mae_px: args.rnfl_tolerance,
        rpe_mae_px: args.rpe_tolerance,
    };
    let report = phantom::evaluate(
        (&pred.0, &pred.1, &pred.2),
        (&truth.0, &truth.1, &truth.2),
        &tolerances,
    )?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    println!("{text}");
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
