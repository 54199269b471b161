//! Command-line surface: `track`, `eval`, `bench`, `inspect`, plus `init`
//! (seeded random weights) and `synth` (toy sequence) helpers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::dataset::{list_result_sequences, read_dataset, read_results, write_results, SequenceAnnotation, TrackRun};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, MetricThresholds, MetricsReport};
use crate::model::MvtModel;
use crate::synthetic::MovingSquare;
use crate::tracker::{BBox, FrameTiming, ImageFrame, Tracker, TrackerConfig};
use crate::weights::{build_manifest, load_for_config, load_weights, random_init, save_weights};

#[derive(Debug, Parser)]
#[command(name = "mvt", version, about = "MobileViT-based single object tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track every sequence under a directory and write GOT-10k result files.
    Track(TrackArgs),
    /// Score result files against annotations.
    Eval(EvalArgs),
    /// Time the full pipeline on synthetic frames.
    Bench(BenchArgs),
    /// List the tensors of a weight file.
    Inspect(InspectArgs),
    /// Write seeded random weights for the default architecture.
    Init(InitArgs),
    /// Write a synthetic moving-square sequence.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// A sequence directory, or a directory of sequence directories.
    #[arg(long)]
    pub seq: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write frames with the predicted box drawn.
    #[arg(long)]
    pub overlay: bool,
    #[arg(long, value_enum, default_value = "on")]
    pub fusion: Switch,
    #[arg(long, value_enum, default_value = "on")]
    pub window: Switch,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub anns: PathBuf,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub fusion: Switch,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn load_model(weights: &Path, fusion: bool) -> Result<MvtModel> {
    let cfg = ModelConfig::default().with_fusion(fusion);
    let store = load_for_config(weights, &cfg)?;
    MvtModel::from_store(&cfg, &store)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackSummary {
    pub sequences: Vec<String>,
    pub frames: usize,
    pub seconds: f64,
}

fn draw_box(frame: &mut ImageFrame, b: &BBox, rgb: [u8; 3]) {
    let (w, h) = (frame.width as i64, frame.height as i64);
    let x0 = b.x.round() as i64;
    let y0 = b.y.round() as i64;
    let x1 = (b.x + b.w).round() as i64;
    let y1 = (b.y + b.h).round() as i64;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && x < w && y < h {
            frame.put(x as usize, y as usize, rgb);
        }
    };
    for t in 0..2 {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

/// Runs one annotated sequence end to end.
pub fn track_sequence(
    model: &MvtModel,
    cfg: TrackerConfig,
    seq: &SequenceAnnotation,
    overlay_dir: Option<&Path>,
) -> Result<TrackRun> {
    if seq.frames.is_empty() {
        return Err(Error::Invalid(format!("sequence {} has no frames", seq.name)));
    }
    let init_box = seq.gt(0).expect("validated at read time");
    let mut tracker = Tracker::new(model, cfg);
    let mut run = TrackRun {
        name: seq.name.clone(),
        ..TrackRun::default()
    };
    if let Some(dir) = overlay_dir {
        std::fs::create_dir_all(dir)?;
    }
    for (i, path) in seq.frames.iter().enumerate() {
        let t0 = Instant::now();
        let frame = ImageFrame::load(path)?;
        let b = if i == 0 {
            tracker.init(&frame, init_box)?;
            init_box
        } else {
            tracker.track(&frame)?
        };
        run.times.push(t0.elapsed().as_secs_f64());
        if let Some(dir) = overlay_dir {
            let mut img = frame;
            draw_box(&mut img, &b, [0, 255, 0]);
            img.to_rgb_image().save(dir.join(format!("{:08}.png", i + 1)))?;
        }
        run.boxes.push(b);
    }
    Ok(run)
}

pub fn cmd_track(args: &TrackArgs) -> Result<TrackSummary> {
    let model = load_model(&args.weights, args.fusion.is_on())?;
    let seqs = read_dataset(&args.seq)?;
    let cfg = TrackerConfig {
        window: args.window.is_on(),
        ..TrackerConfig::default()
    };
    std::fs::create_dir_all(&args.out)?;
    let t0 = Instant::now();
    let runs: Vec<TrackRun> = with_threads(args.threads, || {
        seqs.par_iter()
            .map(|s| {
                let overlay = args.overlay.then(|| args.out.join(&s.name).join("overlay"));
                let run = track_sequence(&model, cfg, s, overlay.as_deref())?;
                write_results(&run, &args.out)?;
                Ok(run)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(TrackSummary {
        sequences: runs.iter().map(|r| r.name.clone()).collect(),
        frames: runs.iter().map(|r| r.boxes.len()).sum(),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<MetricsReport> {
    let anns = read_dataset(&args.anns)?;
    let names = list_result_sequences(&args.results)?;
    let mut missing: Vec<String> = Vec::new();
    for a in &anns {
        if !names.contains(&a.name) {
            missing.push(a.name.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Mismatch(format!("no results for sequence(s): {}", missing.join(", "))));
    }
    let runs = names
        .iter()
        .map(|n| read_results(&args.results, n))
        .collect::<Result<Vec<_>>>()?;
    let report = compute_metrics(&runs, &anns, &MetricThresholds::default())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(p) = &args.report {
        std::fs::write(p, &json)?;
    }
    if args.json {
        writeln!(out, "{json}")?;
    } else {
        write_report_table(&report, out)?;
    }
    Ok(report)
}

pub fn write_report_table(r: &MetricsReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "sequences  {}", r.sequences)?;
    writeln!(out, "frames     {}", r.frames)?;
    writeln!(out, "OR (AUC)   {:.4}", r.overlap)?;
    for &(t, v) in &r.success_rate {
        writeln!(out, "SR@{t:<7} {v:.4}")?;
    }
    writeln!(out, "P          {:.4}", r.precision)?;
    writeln!(out, "P_norm     {:.4}", r.norm_precision)?;
    writeln!(out, "FR         {:.4}", r.failure_rate)?;
    match r.fps {
        Some(f) => writeln!(out, "fps        {f:.2}")?,
        None => writeln!(out, "fps        n/a")?,
    }
    if !r.attribute_slices.is_empty() {
        writeln!(out, "\nattribute  seqs  frames  FR      OR")?;
        for (code, s) in &r.attribute_slices {
            writeln!(
                out,
                "{code:<10} {:<5} {:<7} {:.4}  {:.4}",
                s.sequences, s.frames, s.failure_rate, s.overlap
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageStat {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl StageStat {
    fn from_samples(samples: &[Duration]) -> Self {
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        let n = ms.len().max(1) as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_ms: mean,
            std_ms: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub parameters: usize,
    pub fps: f64,
    pub end_to_end: StageStat,
    pub crop: StageStat,
    pub backbone: StageStat,
    pub neck: StageStat,
    pub head: StageStat,
    pub post: StageStat,
    /// Σ stage time / Σ end-to-end time.
    pub stage_fraction: f64,
}

pub fn run_bench(model: &MvtModel, frames: usize) -> Result<BenchReport> {
    let frames = frames.max(1);
    let scene = MovingSquare {
        frames: frames + 2,
        ..MovingSquare::default()
    };
    let gt = scene.groundtruth();
    let mut tracker = Tracker::new(model, TrackerConfig::default());
    tracker.init(&scene.frame(0), gt[0])?;
    // warm-up frame, not recorded
    tracker.track(&scene.frame(1))?;
    let images: Vec<ImageFrame> = (2..frames + 2).map(|t| scene.frame(t)).collect();
    let mut timings: Vec<FrameTiming> = Vec::with_capacity(frames);
    for img in &images {
        timings.push(tracker.track_timed(img)?.1);
    }
    let col = |f: fn(&FrameTiming) -> Duration| timings.iter().map(f).collect::<Vec<_>>();
    let total: f64 = timings.iter().map(|t| t.total.as_secs_f64()).sum();
    let stages: f64 = timings.iter().map(|t| t.stage_sum().as_secs_f64()).sum();
    Ok(BenchReport {
        frames,
        parameters: build_manifest(&model.cfg)?.parameter_count(),
        fps: frames as f64 / total,
        end_to_end: StageStat::from_samples(&col(|t| t.total)),
        crop: StageStat::from_samples(&col(|t| t.crop)),
        backbone: StageStat::from_samples(&col(|t| t.backbone)),
        neck: StageStat::from_samples(&col(|t| t.neck)),
        head: StageStat::from_samples(&col(|t| t.head)),
        post: StageStat::from_samples(&col(|t| t.post)),
        stage_fraction: stages / total,
    })
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<BenchReport> {
    let model = load_model(&args.weights, args.fusion.is_on())?;
    let report = with_threads(args.threads, || run_bench(&model, args.frames))?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializable"))?;
    } else {
        writeln!(out, "parameters  {}", report.parameters)?;
        writeln!(out, "frames      {}", report.frames)?;
        writeln!(out, "fps         {:.2}", report.fps)?;
        for (name, s) in [
            ("total", report.end_to_end),
            ("crop", report.crop),
            ("backbone", report.backbone),
            ("neck", report.neck),
            ("head", report.head),
            ("post", report.post),
        ] {
            writeln!(out, "{name:<11} {:>9.3} ms ± {:.3}", s.mean_ms, s.std_ms)?;
        }
        writeln!(out, "stages/total {:.3}", report.stage_fraction)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub numel: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectReport {
    pub tensors: usize,
    pub elements: usize,
    /// Learnable parameters when the file matches the default manifest.
    pub parameters: Option<usize>,
    pub manifest_violation: Option<String>,
    pub entries: Vec<InspectEntry>,
}

pub fn cmd_inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<InspectReport> {
    let store = load_weights(&args.weights)?;
    let manifest = build_manifest(&ModelConfig::default())?;
    let violation = store.conform(&manifest).err().map(|e| e.to_string());
    let report = InspectReport {
        tensors: store.len(),
        elements: store.element_count(),
        parameters: violation.is_none().then(|| manifest.parameter_count()),
        manifest_violation: violation,
        entries: store
            .iter()
            .map(|(name, t)| InspectEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                numel: t.len(),
            })
            .collect(),
    };
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializable"))?;
    } else {
        for e in &report.entries {
            writeln!(out, "{:<56} {:<20} {}", e.name, format!("{:?}", e.shape), e.numel)?;
        }
        writeln!(out, "tensors     {}", report.tensors)?;
        writeln!(out, "elements    {}", report.elements)?;
        match (&report.parameters, &report.manifest_violation) {
            (Some(p), _) => writeln!(out, "parameters  {p}")?,
            (None, Some(v)) => writeln!(out, "manifest    {v}")?,
            _ => {}
        }
    }
    Ok(report)
}

pub fn cmd_init(args: &InitArgs) -> Result<()> {
    let store = random_init(&ModelConfig::default(), args.seed)?;
    save_weights(&store, &args.out)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    MovingSquare {
        frames: args.frames.max(1),
        ..MovingSquare::default()
    }
    .write_sequence(&args.out)
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Track(a) => {
            let s = cmd_track(&a)?;
            writeln!(
                out,
                "tracked {} sequence(s), {} frames in {:.2}s -> {}",
                s.sequences.len(),
                s.frames,
                s.seconds,
                a.out.display()
            )?;
        }
        Command::Eval(a) => {
            cmd_eval(&a, &mut out)?;
        }
        Command::Bench(a) => {
            cmd_bench(&a, &mut out)?;
        }
        Command::Inspect(a) => {
            cmd_inspect(&a, &mut out)?;
        }
        Command::Init(a) => cmd_init(&a)?,
        Command::Synth(a) => cmd_synth(&a)?,
    }
    Ok(())
}
