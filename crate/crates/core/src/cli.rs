//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::cutoff::{run_segments, CutoffResult, PipelineRun};
use crate::error::{Category, Error, Result};
use crate::ingest::{load_series, LoadedSeries};
use crate::io_util::{read_to_string, write_atomic};
use crate::surprise::{nats_to_bits, parse_trace, render_trace, TraceFormat};
use crate::synthetic::{generate, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        Category::Config => EXIT_CONFIG,
        Category::Io => EXIT_IO,
        Category::Numeric => EXIT_NUMERIC,
        Category::InsufficientData => EXIT_INSUFFICIENT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "nilm-surprise", about = "Bayesian-surprise training cutoff for power-meter event streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the surprise pipeline and write trace, result, model and report.
    Analyze {
        /// Run configuration (TOML).
        #[arg(short, long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(short, long)]
        seed: Option<u64>,
    },
    /// Simulate a synthetic household.
    Generate {
        /// Household description (TOML).
        #[arg(short = 'p', long)]
        spec: PathBuf,
        #[arg(short, long)]
        seed: u64,
        /// Aggregate series output (CSV).
        #[arg(short, long)]
        output: PathBuf,
        /// Per-sample appliance states output (CSV).
        #[arg(short, long)]
        labels: Option<PathBuf>,
    },
    /// Re-emit the trace stored in a result file.
    TraceExport {
        /// A cutoff.json written by `analyze`.
        #[arg(short, long)]
        result: PathBuf,
        #[arg(short, long, value_parser = parse_format)]
        format: TraceFormat,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the version.
    Version,
}

fn parse_format(s: &str) -> std::result::Result<TraceFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name), runs the command, prints diagnostics.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Analyze { config, output, seed } => RunConfig::load(&config).and_then(|mut cfg| {
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = cmd_analyze(&cfg)?;
            print!("{}", out.summary_line());
            Ok(())
        }),
        Command::Generate {
            spec,
            seed,
            output,
            labels,
        } => SyntheticSpec::load(&spec).and_then(|s| cmd_generate(&s, seed, &output, labels.as_deref())),
        Command::TraceExport { result, format, output } => cmd_trace_export(&result, format, &output),
        Command::Version => {
            println!("nilm-surprise {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Paths written by [`cmd_analyze`].
#[derive(Debug, Clone)]
pub struct AnalyzeOutput {
    pub result_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
    pub result: CutoffResult,
}

impl AnalyzeOutput {
    fn summary_line(&self) -> String {
        let r = &self.result;
        match (r.found, r.cutoff_window) {
            (true, Some(c)) => format!(
                "cutoff at window {c} (event {}, t = {}){}\n",
                r.cutoff_event.unwrap_or(0),
                r.cutoff_timestamp.unwrap_or(f64::NAN),
                if r.truncated_patience { ", patience truncated" } else { "" }
            ),
            _ => "no cutoff found\n".to_string(),
        }
    }
}

fn header(cfg: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("nilm-surprise".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), cfg.seed.to_string()),
        ("config".into(), cfg.to_toml()),
    ]
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeOutput> {
    cfg.validate()?;
    let loaded = load_series(&cfg.input, &cfg.ingest)?;
    let run = run_segments(&loaded.segments, &cfg.cutoff, cfg.seed)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| Error::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;

    let head = header(cfg);
    let mut trace_paths = Vec::new();
    for fmt in &cfg.trace_formats {
        let path = cfg.output_dir.join(format!("trace.{}", fmt.extension()));
        write_atomic(&path, &render_trace(&run.result.trace, *fmt, &head)?)?;
        trace_paths.push(path);
    }

    let mut result = run.result.clone();
    result.trace_file = Some(format!("trace.{}", cfg.trace_formats[0].extension()));
    let result_path = cfg.output_dir.join("cutoff.json");
    write_atomic(&result_path, result.to_json()?.as_bytes())?;

    let model_path = cfg.output_dir.join("model.json");
    let meta = serde_json::json!({ "seed": cfg.seed, "config": cfg });
    run.model.save(&model_path, meta)?;

    let report_path = cfg.output_dir.join("report.txt");
    write_atomic(&report_path, render_report(cfg, &loaded, &run, &result).as_bytes())?;

    Ok(AnalyzeOutput {
        result_path,
        trace_paths,
        model_path,
        report_path,
        result,
    })
}

fn render_report(cfg: &RunConfig, loaded: &LoadedSeries, run: &PipelineRun, result: &CutoffResult) -> String {
    let c = &cfg.cutoff;
    let s = &result.summary;
    let unit = if cfg.report_bits { "bits" } else { "nats" };
    let conv = |v: f64| if cfg.report_bits { nats_to_bits(v) } else { v };
    let mut out = String::new();
    let _ = writeln!(out, "nilm-surprise {} run report", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "seed: {}", cfg.seed);
    let _ = writeln!(out, "input: {}", cfg.input.display());
    let _ = writeln!(
        out,
        "rows read: {}, samples after resampling: {}, segments: {}, gaps: {} ({} split), negative readings clamped: {}",
        loaded.rows_read,
        loaded.total_samples(),
        loaded.segments.len(),
        loaded.gaps.len(),
        loaded.gaps.iter().filter(|g| !g.filled).count(),
        loaded.clamped
    );
    let _ = writeln!(
        out,
        "events: {}, windows: {} of {} events, unused trailing events: {}",
        s.events, s.windows, c.window_events, s.unused_events
    );
    let _ = writeln!(
        out,
        "thresholds: postdictive {} transitional {} patience {}, divergence {:?} ({unit})",
        c.thresh_postdictive, c.thresh_transitional, c.patience, c.surprise.divergence
    );
    match (result.found, result.cutoff_window) {
        (true, Some(w)) => {
            let _ = writeln!(
                out,
                "cutoff: window {w}, event {}, timestamp {}{}",
                result.cutoff_event.unwrap_or(0),
                result.cutoff_timestamp.unwrap_or(f64::NAN),
                if result.truncated_patience {
                    " (patience truncated by the end of the data)"
                } else {
                    ""
                }
            );
        }
        _ => {
            let _ = writeln!(out, "cutoff: none (the last window exceeds a threshold)");
        }
    }
    if s.zero_postdictive_channel || s.zero_transitional_channel {
        let _ = writeln!(
            out,
            "warning: all-zero surprise channel (postdictive: {}, transitional: {})",
            s.zero_postdictive_channel, s.zero_transitional_channel
        );
    }
    if s.unconverged_windows > 0 {
        let _ = writeln!(out, "warning: {} windows hit max_iter before converging", s.unconverged_windows);
    }
    if let (Some(a), Some(b)) = (result.trace.rows.first(), result.trace.rows.last()) {
        let _ = writeln!(out, "max raw S_o: {:e} {unit}, max raw S_t: {:e} {unit}", conv(b.max_so), conv(b.max_st));
        let _ = writeln!(out, "first window raw S_o: {:e}, S_t: {:e}", conv(a.raw_so), conv(a.raw_st));
    }
    let _ = writeln!(out, "components (expected weight > 0.01): {}", s.effective_components);
    let weights = run.model.expected_weights();
    for (k, (w, comp)) in weights.iter().zip(run.model.components()).enumerate() {
        if *w > 0.01 {
            let mean: Vec<String> = comp.mean.iter().map(|v| format!("{v:.1}")).collect();
            let sd: Vec<String> = (0..comp.dim())
                .map(|i| format!("{:.1}", comp.expected_covariance()[(i, i)].sqrt()))
                .collect();
            let _ = writeln!(out, "  [{k:2}] weight {w:.4} mean [{}] sd [{}]", mean.join(", "), sd.join(", "));
        }
    }
    let _ = writeln!(out, "\nconfig:\n{}", cfg.to_toml());
    out
}

pub fn cmd_generate(spec: &SyntheticSpec, seed: u64, series: &Path, labels: Option<&Path>) -> Result<()> {
    let h = generate(spec, seed)?;
    write_atomic(series, h.series_csv().as_bytes())?;
    if let Some(l) = labels {
        write_atomic(l, h.labels_csv().as_bytes())?;
    }
    Ok(())
}

pub fn cmd_trace_export(result_path: &Path, format: TraceFormat, output: &Path) -> Result<()> {
    let result = CutoffResult::from_json(&read_to_string(result_path)?, result_path)?;
    let cfg_text = toml::to_string(&result.config).unwrap_or_default();
    let head = vec![
        ("nilm-surprise".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), result.seed.to_string()),
        ("config".into(), cfg_text),
    ];
    let bytes = render_trace(&result.trace, format, &head)?;
    // fail fast if the rendered trace would not read back
    parse_trace(std::str::from_utf8(&bytes).expect("traces are UTF-8"), format, output)?;
    write_atomic(output, &bytes)
}
