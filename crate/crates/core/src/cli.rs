//! Batch commands: stabilize a pair of frame directories, export flow, score
//! metrics, and launch the live server.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::consistency::{
    ConsistencyParams, FramePair, ParamsPatch, Preset, Stabilizer, StepOutput,
};
use crate::error::{Error, Result};
use crate::flow::{
    flo_file_name, flow_to_color, BuiltinFlow, CachedFlow, FloDirFlow, FlowOptions, FlowProvider,
    FlowRequest,
};
use crate::imgio::{save_frame, write_flo, FrameSource};
use crate::metrics::{ssim_report, warping_error_guided, MetricReport, MetricSummary};

#[derive(Debug, Parser)]
#[command(
    name = "tcon",
    version,
    about = "Flow-guided temporal consistency for processed video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stabilize a processed frame sequence against its input.
    Stabilize(StabilizeArgs),
    /// Estimate optical flow between consecutive frames and write `.flo` files.
    Flow(FlowArgs),
    /// Score SSIM or temporal warping error, writing CSV and JSON reports.
    Metrics(MetricsArgs),
    /// Run the live session server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowBackend {
    #[default]
    Builtin,
    FloDir,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// Parameter preset: default, objective or fast.
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    /// Bound on the previous-frame warp weight.
    #[arg(long)]
    pub k1: Option<f32>,
    /// Bound on the next-frame warp weight.
    #[arg(long)]
    pub k2: Option<f32>,
    /// Sharpness of the color-residual falloff.
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Strength of the consistency term.
    #[arg(long)]
    pub lambda: Option<f32>,
    /// Solver step size.
    #[arg(long)]
    pub eta: Option<f32>,
    /// Solver momentum.
    #[arg(long)]
    pub kappa: Option<f32>,
    /// Solver iterations per frame.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Estimate flow at 1/N resolution (1, 2 or 4).
    #[arg(long)]
    pub flow_downscale: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BackendArgs {
    /// Where flow fields come from.
    #[arg(long, value_enum)]
    pub flow_backend: Option<FlowBackend>,
    /// Directory of `flow_NNNNN_MMMMM.flo` files for `--flow-backend flo-dir`.
    #[arg(long)]
    pub flo_dir: Option<PathBuf>,
    /// Persist computed flows here and reuse them on later runs.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StabilizeArgs {
    /// TOML job file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of original frames.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory of per-frame processed frames.
    #[arg(long)]
    pub processed: Option<PathBuf>,
    /// Directory receiving stabilized frames.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// printf-style frame name pattern, e.g. `frame_%05d.png`.
    #[arg(long)]
    pub pattern: Option<String>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    /// Directory of frames.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving `.flo` files.
    #[arg(long)]
    pub output: PathBuf,
    /// printf-style frame name pattern.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Estimate at 1/N resolution (1, 2 or 4).
    #[arg(long, default_value_t = 1)]
    pub flow_downscale: u32,
    /// Also write t+1 -> t flows.
    #[arg(long)]
    pub both_directions: bool,
    /// Also write color-coded PNGs next to each `.flo`.
    #[arg(long)]
    pub visualize: bool,
    /// Reuse flows cached here.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Ssim,
    Ewarp,
}

impl MetricKind {
    fn name(self) -> &'static str {
        match self {
            MetricKind::Ssim => "ssim",
            MetricKind::Ewarp => "ewarp",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Metric to compute.
    #[arg(long, value_enum)]
    pub which: MetricKind,
    /// Directory of frames to score.
    #[arg(long)]
    pub candidate: PathBuf,
    /// Required for ssim; for ewarp the reference is scored too and the ratio reported.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Estimate flow on this sequence instead of the candidate (ewarp only).
    #[arg(long)]
    pub flow_from: Option<PathBuf>,
    /// Directory receiving `<metric>.csv` and `<metric>.json`.
    #[arg(long)]
    pub output: PathBuf,
    /// printf-style frame name pattern.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Estimate flow at 1/N resolution (ewarp only).
    #[arg(long, default_value_t = 1)]
    pub flow_downscale: u32,
    /// Preset label recorded in the JSON summary.
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Server TOML naming the sources.
    #[arg(long)]
    pub config: PathBuf,
    /// Address to accept WebSocket connections on.
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub listen: String,
}

/// A stabilization job, as read from a flat TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub input: Option<PathBuf>,
    pub processed: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub k1: Option<f32>,
    pub k2: Option<f32>,
    pub alpha: Option<f32>,
    pub lambda: Option<f32>,
    pub eta: Option<f32>,
    pub kappa: Option<f32>,
    pub iterations: Option<usize>,
    pub flow_downscale: Option<u32>,
    #[serde(default)]
    pub flow_backend: FlowBackend,
    pub flo_dir: Option<PathBuf>,
    pub pattern: Option<String>,
    pub cache_dir: Option<PathBuf>,
}

impl JobConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Starts from the config file (if any) and applies command-line overrides.
    pub fn from_args(args: &StabilizeArgs) -> Result<Self> {
        let mut job = match &args.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        let p = &args.params;
        macro_rules! set {
            ($($field:ident <- $src:expr),* $(,)?) => {
                $(if let Some(v) = $src.clone() { job.$field = Some(v); })*
            };
        }
        set!(
            input <- args.input,
            processed <- args.processed,
            output <- args.output,
            pattern <- args.pattern,
            preset <- p.preset,
            k1 <- p.k1,
            k2 <- p.k2,
            alpha <- p.alpha,
            lambda <- p.lambda,
            eta <- p.eta,
            kappa <- p.kappa,
            iterations <- p.iterations,
            flow_downscale <- p.flow_downscale,
            flo_dir <- args.backend.flo_dir,
            cache_dir <- args.backend.cache_dir,
        );
        if let Some(b) = args.backend.flow_backend {
            job.flow_backend = b;
        }
        Ok(job)
    }

    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(Preset::Default)
    }

    /// Preset values with every explicitly set field overriding them.
    pub fn params(&self) -> Result<ConsistencyParams> {
        ParamsPatch {
            k1: self.k1,
            k2: self.k2,
            alpha: self.alpha,
            lambda: self.lambda,
            eta: self.eta,
            kappa: self.kappa,
            iterations: self.iterations,
            flow_downscale: self.flow_downscale,
        }
        .apply(&self.preset().params())
    }

    fn require<'a>(field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing `{name}` (flag --{name} or config key)")))
    }
}

/// Builds the flow provider selected by `backend`, optionally wrapped in a cache.
pub fn flow_provider(
    backend: FlowBackend,
    flo_dir: Option<&Path>,
    cache_dir: Option<&Path>,
) -> Result<Box<dyn FlowProvider>> {
    let base: Box<dyn FlowProvider> = match backend {
        FlowBackend::Builtin => Box::new(BuiltinFlow::new(FlowOptions::default())),
        FlowBackend::FloDir => {
            let dir = flo_dir
                .ok_or_else(|| Error::Config("--flow-backend flo-dir requires --flo-dir".into()))?;
            Box::new(FloDirFlow::new(dir)?)
        }
    };
    Ok(match cache_dir {
        Some(dir) => Box::new(CachedFlow::new(base, dir)?),
        None => base,
    })
}

/// Opens the input and processed sequences and checks they correspond frame
/// for frame, naming the first frame missing from either side.
pub fn open_pair_sources(
    input: &Path,
    processed: &Path,
    pattern: Option<&str>,
) -> Result<(FrameSource, FrameSource)> {
    let inputs = FrameSource::open(input, pattern)?;
    let processed_src = FrameSource::open(processed, pattern)?;
    if inputs.len() != processed_src.len() {
        let (long, short, short_dir) = if inputs.len() > processed_src.len() {
            (&inputs, &processed_src, processed)
        } else {
            (&processed_src, &inputs, input)
        };
        let names = |s: &FrameSource| s.ids();
        let (ln, sn) = (names(long), names(short));
        let gap = (0..long.len()).find(|&i| sn.get(i) != Some(&ln[i]));
        if let Some(pos) = gap {
            if sn.iter().any(|n| ln.contains(n)) {
                return Err(Error::MissingFrame {
                    dir: short_dir.to_path_buf(),
                    index: long.index_at(pos),
                });
            }
        }
        return Err(Error::SequenceMismatch(format!(
            "{} has {} frames but {} has {}",
            input.display(),
            inputs.len(),
            processed.display(),
            processed_src.len()
        )));
    }
    if inputs.resolution() != processed_src.resolution() {
        return Err(Error::ResolutionMismatch {
            expected: inputs.resolution(),
            found: processed_src.resolution(),
        });
    }
    for pos in 0..inputs.len() {
        if inputs.index_at(pos) != processed_src.index_at(pos) {
            return Err(Error::MissingFrame {
                dir: processed.to_path_buf(),
                index: inputs.index_at(pos).min(processed_src.index_at(pos)),
            });
        }
    }
    Ok((inputs, processed_src))
}

fn output_name(source: &FrameSource, position: usize) -> String {
    match source.entries() {
        Some(entries) => {
            let stem = Path::new(&entries[position].name)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("frame");
            format!("{stem}.png")
        }
        None => format!("frame_{:05}.png", source.index_at(position)),
    }
}

/// What a stabilization run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeSummary {
    pub frames: usize,
    pub preset: Preset,
    pub params: ConsistencyParams,
    pub flow_backend: String,
    pub outputs: Vec<PathBuf>,
}

/// Writes `O_t` for every frame of the job into the output directory.
pub fn cmd_stabilize(job: &JobConfig) -> Result<StabilizeSummary> {
    let input = JobConfig::require(&job.input, "input")?;
    let processed = JobConfig::require(&job.processed, "processed")?;
    let output = JobConfig::require(&job.output, "output")?;
    let params = job.params()?;
    let (inputs, processed_src) = open_pair_sources(input, processed, job.pattern.as_deref())?;
    let flow = flow_provider(
        job.flow_backend,
        job.flo_dir.as_deref(),
        job.cache_dir.as_deref(),
    )?;
    let flow_id = flow.id();
    std::fs::create_dir_all(output).map_err(|source| Error::Write {
        path: output.to_path_buf(),
        source,
    })?;
    log::info!(
        "stabilizing {} frames at {:?} with preset {} ({:?}), flow {}",
        inputs.len(),
        inputs.resolution(),
        job.preset(),
        params,
        flow_id
    );

    let names: Vec<(usize, String)> = (0..processed_src.len())
        .map(|pos| {
            (
                processed_src.index_at(pos),
                output_name(&processed_src, pos),
            )
        })
        .collect();
    let mut stabilizer = Stabilizer::new(params, flow)?;
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut write = |step: StepOutput, started: Instant| -> Result<()> {
        let pos = names
            .binary_search_by_key(&step.index, |(i, _)| *i)
            .map_err(|_| Error::Session(format!("unexpected output index {}", step.index)))?;
        let path = output.join(&names[pos].1);
        save_frame(&step.output, &path)?;
        log::info!(
            "frame {}: {:.1} ms (flow {:.1} ms, solve {:.1} ms)",
            step.index,
            started.elapsed().as_secs_f64() * 1e3,
            step.timing.flow.as_secs_f64() * 1e3,
            step.timing.solve.as_secs_f64() * 1e3
        );
        outputs.push(path);
        Ok(())
    };
    let mut started = Instant::now();
    for pos in 0..inputs.len() {
        let index = inputs.index_at(pos);
        let frame_failed = |e| Error::FrameFailed {
            index,
            source: Box::new(e),
        };
        let pair = FramePair::new(
            index,
            inputs.load(pos).map_err(frame_failed)?,
            processed_src.load(pos).map_err(frame_failed)?,
        )
        .map_err(frame_failed)?;
        if let Some(step) = stabilizer.push(pair).map_err(frame_failed)? {
            write(step, started)?;
            started = Instant::now();
        }
    }
    let last = inputs.index_at(inputs.len() - 1);
    if let Some(step) = stabilizer.finish().map_err(|e| Error::FrameFailed {
        index: last,
        source: Box::new(e),
    })? {
        write(step, started)?;
    }
    Ok(StabilizeSummary {
        frames: outputs.len(),
        preset: job.preset(),
        params,
        flow_backend: flow_id,
        outputs,
    })
}

/// Writes `flow_{t}_{t+1}.flo` for each consecutive pair (and the reverse
/// direction when requested). Returns the written paths.
pub fn cmd_flow(args: &FlowArgs) -> Result<Vec<PathBuf>> {
    if ![1, 2, 4].contains(&args.flow_downscale) {
        return Err(Error::InvalidParams(
            "flow_downscale must be 1, 2 or 4".into(),
        ));
    }
    let source = FrameSource::open(&args.input, args.pattern.as_deref())?;
    let flow = flow_provider(FlowBackend::Builtin, None, args.cache_dir.as_deref())?;
    std::fs::create_dir_all(&args.output).map_err(|source| Error::Write {
        path: args.output.clone(),
        source,
    })?;
    let mut written = Vec::new();
    if source.len() < 2 {
        log::warn!(
            "{} holds a single frame; no flow written",
            args.input.display()
        );
        return Ok(written);
    }
    let mut current = source.load(0)?;
    for pos in 0..source.len() - 1 {
        let next = source.load(pos + 1)?;
        let (i, j) = (source.index_at(pos), source.index_at(pos + 1));
        let mut directions = vec![(i, j, &current, &next)];
        if args.both_directions {
            directions.push((j, i, &next, &current));
        }
        for (from_index, to_index, from, to) in directions {
            let started = Instant::now();
            let field = flow.flow(FlowRequest {
                from_index,
                to_index,
                from,
                to,
                downscale: args.flow_downscale,
            })?;
            let path = args.output.join(flo_file_name(from_index, to_index, 1));
            write_flo(&field, &path)?;
            log::info!(
                "flow {from_index} -> {to_index}: {:.1} ms",
                started.elapsed().as_secs_f64() * 1e3
            );
            if args.visualize {
                save_frame(&flow_to_color(&field, None)?, path.with_extension("png"))?;
            }
            written.push(path);
        }
        current = next;
    }
    Ok(written)
}

/// Computes the requested metric and writes `<metric>.csv` and `<metric>.json`.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<(MetricReport, MetricSummary)> {
    let pattern = args.pattern.as_deref();
    let candidate = FrameSource::open(&args.candidate, pattern)?;
    let reference = args
        .reference
        .as_ref()
        .map(|d| FrameSource::open(d, pattern))
        .transpose()?;
    let preset = args.preset.map(|p| p.name());
    let (report, summary) = match args.which {
        MetricKind::Ssim => {
            let reference =
                reference.ok_or_else(|| Error::Config("ssim needs --reference".into()))?;
            let report = ssim_report(&candidate, &reference)?;
            let summary = report.summary(preset, None);
            (report, summary)
        }
        MetricKind::Ewarp => {
            let b = &args.backend;
            let flow = flow_provider(
                b.flow_backend.unwrap_or_default(),
                b.flo_dir.as_deref(),
                b.cache_dir.as_deref(),
            )?;
            let guide = args
                .flow_from
                .as_ref()
                .map(|d| FrameSource::open(d, pattern))
                .transpose()?;
            let score = |video: &FrameSource| {
                warping_error_guided(video, guide.as_ref(), flow.as_ref(), args.flow_downscale)
            };
            let report = score(&candidate)?;
            let mut summary = report.summary(preset, Some(&flow.id()));
            if let Some(r) = &reference {
                summary = summary.with_reference(score(r)?.mean());
            }
            (report, summary)
        }
    };
    std::fs::create_dir_all(&args.output).map_err(|source| Error::Write {
        path: args.output.clone(),
        source,
    })?;
    let name = args.which.name();
    let write = |file: String, contents: String| {
        let path = args.output.join(file);
        std::fs::write(&path, contents).map_err(|source| Error::Write { path, source })
    };
    write(format!("{name}.csv"), report.to_csv())?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("cannot serialize summary: {e}")))?;
    write(format!("{name}.json"), json + "\n")?;
    log::info!(
        "{name}: mean {:.6} over {} values",
        summary.mean,
        summary.count
    );
    Ok((report, summary))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stabilize(args) => {
            let summary = cmd_stabilize(&JobConfig::from_args(&args)?)?;
            log::info!(
                "wrote {} frames (preset {}, flow {})",
                summary.frames,
                summary.preset,
                summary.flow_backend
            );
        }
        Command::Flow(args) => {
            let written = cmd_flow(&args)?;
            log::info!("wrote {} flow files", written.len());
        }
        Command::Metrics(args) => {
            cmd_metrics(&args)?;
        }
        Command::Serve(args) => {
            let config = crate::service::ServerConfig::load(&args.config)?;
            crate::service::serve(&config, &args.listen)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            1
        }
    }
}
