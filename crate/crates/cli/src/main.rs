//! `sceneflow` — command-line tools around the scene-flow toolkit.
//!
//! Subcommands cover the full loop: `synth` writes a deterministic synthetic
//! dataset, `gtflow` derives ground-truth flow files from annotations,
//! `trackflow` estimates flow from detections via tracking, `evaluate` scores
//! predicted flow against ground truth into a JSON report, `stats` prints
//! dataset or report summaries, and `plot` renders SVG charts from reports.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sceneflow_core::evaluate::{
    evaluate_dataset, EvalConfig, DEFAULT_EVAL_RADIUS, DEFAULT_NOMINAL_DT,
};
use sceneflow_core::geometry::Vec3;
use sceneflow_core::gtflow::{
    class_point_histogram, generate_gt_flow, transform_cloud_to_global, AnnotatedFrame,
    GtFlowParams,
};
use sceneflow_core::io::binfile;
use sceneflow_core::io::dataset::{self, FrameRecord};
use sceneflow_core::io::report::ReportDocument;
use sceneflow_core::metrics::{mean_summary, BucketConfig, DEFAULT_SPEED_SPLIT};
use sceneflow_core::svg;
use sceneflow_core::synth::{
    generate_scene, perturb_detections, DetectionNoise, ObjectScript, SceneParams,
};
use sceneflow_core::taxonomy::ClassMap;
use sceneflow_core::trackflow::{run_trackflow_detailed, TrackflowConfig, TrackflowFrame};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "sceneflow",
    version,
    about = "Scene-flow estimation and evaluation for lidar sequences"
)]
struct Cli {
    /// Worker threads for parallel sections (0 = one per CPU core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic dataset, optionally with noisy detections.
    Synth(SynthArgs),
    /// Derive ground-truth flow files from annotated boxes.
    Gtflow(GtflowArgs),
    /// Estimate flow from detections via tracking and write flow files.
    Trackflow(TrackflowArgs),
    /// Score predicted flow files against ground truth into a JSON report.
    Evaluate(EvaluateArgs),
    /// Print dataset or report statistics.
    Stats(StatsArgs),
    /// Render SVG bar charts from one or more reports.
    Plot(PlotArgs),
    /// Import an external dataset into the toolkit layout.
    Convert(ConvertArgs),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the worker thread pool")?;
    }
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Gtflow(args) => cmd_gtflow(args),
        Command::Trackflow(args) => cmd_trackflow(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Convert(args) => cmd_convert(args),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "n/a".to_string(),
    }
}

/// Global-frame annotated frame for one dataset record.
fn annotated(rec: &FrameRecord, dt_to_next: f64) -> AnnotatedFrame {
    AnnotatedFrame {
        cloud: transform_cloud_to_global(&rec.cloud_sensor, &rec.ego_pose),
        boxes: rec.boxes.clone(),
        ego_position: rec.ego_pose.translation,
        dt_to_next,
    }
}

fn load_class_map(taxonomy: Option<&Path>, size_buckets: bool) -> Result<ClassMap> {
    if size_buckets && taxonomy.is_some() {
        bail!("--size-buckets and --taxonomy are mutually exclusive");
    }
    if size_buckets {
        return Ok(ClassMap::size_buckets());
    }
    match taxonomy {
        None => Ok(ClassMap::default_semantic()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading taxonomy config {}", path.display()))?;
            ClassMap::from_config_json(&text)
                .with_context(|| format!("parsing taxonomy config {}", path.display()))
        }
    }
}

// ---------------------------------------------------------------------------
// synth

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Objects of every class at mixed speeds plus a parked vehicle.
    Mixed,
    /// Two cars whose paths cross, exercising box overlap handling.
    Crossing,
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    sequences: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Mixed)]
    preset: Preset,
    #[arg(long, default_value_t = 500)]
    background_points: usize,
    /// Ego speed along +x, m/s.
    #[arg(long, default_value_t = 0.0)]
    ego_speed: f64,
    /// Also write per-frame detection records.
    #[arg(long)]
    detections: bool,
    /// Detection center jitter sigma, meters.
    #[arg(long, default_value_t = 0.0)]
    det_center_sigma: f64,
    /// Detection yaw jitter sigma, radians.
    #[arg(long, default_value_t = 0.0)]
    det_yaw_sigma: f64,
    /// Detection size jitter sigma, meters.
    #[arg(long, default_value_t = 0.0)]
    det_dims_sigma: f64,
    /// Probability of dropping each true box from the detections.
    #[arg(long, default_value_t = 0.0)]
    det_dropout: f64,
    /// Expected false-positive boxes per frame.
    #[arg(long, default_value_t = 0.0)]
    det_false_positives: f64,
}

fn preset_scripts(preset: Preset, seq: usize, frames: usize, dt: f64) -> Vec<ObjectScript> {
    let s = seq as f64;
    let base_seed = seq as u64 * 100;
    match preset {
        Preset::Mixed => vec![
            ObjectScript::constant_velocity(
                "CAR",
                (4.2, 1.9, 1.6),
                Vec3::new(-14.0 - s, 3.0, 0.8),
                0.0,
                Vec3::new(8.0, 0.0, 0.0),
                frames,
                dt,
                60,
                base_seed,
            ),
            ObjectScript::constant_velocity(
                "BOX_TRUCK",
                (8.0, 2.6, 2.8),
                Vec3::new(15.0, -4.0 + s, 1.4),
                std::f64::consts::PI,
                Vec3::new(-5.0, 0.0, 0.0),
                frames,
                dt,
                40,
                base_seed + 1,
            ),
            ObjectScript::constant_velocity(
                "PEDESTRIAN",
                (0.6, 0.6, 1.8),
                Vec3::new(4.0 + s, -6.0, 0.9),
                std::f64::consts::FRAC_PI_2,
                Vec3::new(0.0, 1.3, 0.0),
                frames,
                dt,
                25,
                base_seed + 2,
            ),
            ObjectScript::constant_velocity(
                "BICYCLIST",
                (1.8, 0.7, 1.4),
                Vec3::new(-6.0, -10.0 + s, 0.7),
                (2.4f64).atan2(3.2),
                Vec3::new(3.2, 2.4, 0.0),
                frames,
                dt,
                20,
                base_seed + 3,
            ),
            ObjectScript::stationary(
                "CAR",
                (4.4, 1.8, 1.5),
                Vec3::new(10.0, 8.0 + s, 0.75),
                0.3,
                frames,
                30,
                base_seed + 4,
            ),
        ],
        Preset::Crossing => vec![
            ObjectScript::constant_velocity(
                "CAR",
                (4.2, 1.9, 1.6),
                Vec3::new(-4.0 - s, 0.0, 0.8),
                0.0,
                Vec3::new(8.0, 0.0, 0.0),
                frames,
                dt,
                60,
                base_seed,
            ),
            ObjectScript::constant_velocity(
                "CAR",
                (4.4, 1.8, 1.5),
                Vec3::new(0.3, -3.8 - s, 0.75),
                std::f64::consts::FRAC_PI_2,
                Vec3::new(0.0, 8.0, 0.0),
                frames,
                dt,
                60,
                base_seed + 1,
            ),
            ObjectScript::constant_velocity(
                "PEDESTRIAN",
                (0.6, 0.6, 1.8),
                Vec3::new(6.0, 6.0 + s, 0.9),
                -3.0 * std::f64::consts::FRAC_PI_4,
                Vec3::new(-1.0, -1.0, 0.0),
                frames,
                dt,
                25,
                base_seed + 2,
            ),
        ],
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    if args.frames < 2 {
        bail!("--frames must be at least 2 to form a frame pair");
    }
    let dt = 0.1;
    let mut total_overlaps = 0;
    for seq in 0..args.sequences {
        let scripts = preset_scripts(args.preset, seq, args.frames, dt);
        let params = SceneParams {
            frames: args.frames,
            dt,
            background_points: args.background_points,
            bounds: 40.0,
            ego_velocity: Vec3::new(args.ego_speed, 0.0, 0.0),
            seed: args.seed.wrapping_add(seq as u64),
        };
        let scene = generate_scene(&scripts, &params)
            .with_context(|| format!("generating sequence {seq}"))?;
        total_overlaps += scene.overlap_events.len();

        let detections = args.detections.then(|| {
            let noise = DetectionNoise {
                center_sigma: args.det_center_sigma,
                yaw_sigma: args.det_yaw_sigma,
                dims_sigma: args.det_dims_sigma,
                dropout_prob: args.det_dropout,
                false_positives_per_frame: args.det_false_positives,
                ..DetectionNoise::default()
            };
            let gt_boxes: Vec<Vec<_>> = scene.frames.iter().map(|f| f.boxes.clone()).collect();
            perturb_detections(
                &gt_boxes,
                &noise,
                params.bounds,
                args.seed.wrapping_mul(1000).wrapping_add(seq as u64),
            )
        });

        let sensor_clouds = scene.sensor_clouds();
        let records: Vec<FrameRecord> = (0..args.frames)
            .map(|k| FrameRecord {
                frame_id: k as u64,
                timestamp: k as f64 * dt,
                ego_pose: scene.ego_poses[k],
                cloud_sensor: sensor_clouds[k].clone(),
                boxes: scene.frames[k].boxes.clone(),
                detections: detections.as_ref().map(|d| d[k].clone()),
            })
            .collect();
        let name = format!("seq_{seq:03}");
        dataset::save_sequence(&args.out, &name, &records)?;
        log::info!(
            "sequence {name}: {} frames, {} points/frame, {} overlap events",
            args.frames,
            records[0].cloud_sensor.len(),
            scene.overlap_events.len()
        );
    }
    println!(
        "wrote {} sequences x {} frames to {} ({}; {} box overlap events)",
        args.sequences,
        args.frames,
        args.out.display(),
        if args.detections { "with detections" } else { "ground truth only" },
        total_overlaps
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gtflow

#[derive(Args)]
struct GtflowArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for flow files.
    #[arg(long)]
    out: PathBuf,
    /// Box containment margin, meters.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Taxonomy config file (fine-to-meta class mapping).
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

fn cmd_gtflow(args: GtflowArgs) -> Result<()> {
    let class_map = load_class_map(args.taxonomy.as_deref(), false)?;
    let params = GtFlowParams { containment_margin: args.margin };
    let names = dataset::list_sequences(&args.data)?;
    if names.is_empty() {
        bail!("no sequences found under {}", args.data.display());
    }
    names.par_iter().try_for_each(|name| -> Result<()> {
        let seq = dataset::load_sequence(&args.data, name)?;
        let out_dir = args.out.join(name);
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let mut written = 0;
        for i in 0..seq.frames.len().saturating_sub(1) {
            let dt = seq.frames[i + 1].timestamp - seq.frames[i].timestamp;
            let frame_t = annotated(&seq.frames[i], dt);
            let frame_t1 = annotated(&seq.frames[i + 1], dt);
            let gt = generate_gt_flow(&frame_t, &frame_t1, &class_map, &params)
                .with_context(|| format!("sequence `{name}`, frame {}", seq.frames[i].frame_id))?;
            let path = out_dir.join(format!("{:06}.sff", seq.frames[i].frame_id));
            binfile::save_flow(&path, &gt.flow)?;
            written += 1;
        }
        log::info!("sequence {name}: wrote {written} flow files");
        Ok(())
    })?;
    println!("wrote ground-truth flow for {} sequences to {}", names.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// trackflow

#[derive(Args)]
struct TrackflowArgs {
    /// Dataset directory (clouds, poses, detections).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for flow files.
    #[arg(long)]
    out: PathBuf,
    /// Detection files at `<dir>/<sequence>/<frame>.json`, overriding the
    /// detections stored in the dataset.
    #[arg(long)]
    detections_root: Option<PathBuf>,
    /// Pipeline config file (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Detection confidence threshold.
    #[arg(long)]
    confidence: Option<f64>,
    /// Extract flow from raw matched detections instead of filtered boxes.
    #[arg(long)]
    raw_boxes: bool,
    /// Box containment margin for flow extraction, meters.
    #[arg(long)]
    margin: Option<f64>,
    /// Comma-separated confidence thresholds; writes one flow set under
    /// `conf_<t>/` per threshold.
    #[arg(long)]
    sweep: Option<String>,
    /// Also evaluate each flow set against the dataset and write reports here.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// Evaluation radius for --report-dir, meters.
    #[arg(long, default_value_t = DEFAULT_EVAL_RADIUS)]
    radius: f64,
}

fn load_detections_for(
    root: &Path,
    name: &str,
    rec: &FrameRecord,
) -> Result<Vec<sceneflow_core::boxes::Box3D>> {
    let path = root.join(name).join(format!("{:06}.json", rec.frame_id));
    if !path.is_file() {
        bail!(
            "sequence `{name}`: no detection file for frame {} at {}",
            rec.frame_id,
            path.display()
        );
    }
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_trackflow(args: TrackflowArgs) -> Result<()> {
    let mut config: TrackflowConfig = match &args.config {
        None => TrackflowConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
    };
    if let Some(c) = args.confidence {
        config.tracker.confidence_threshold = c;
    }
    if let Some(m) = args.margin {
        config.containment_margin = m;
    }
    if args.raw_boxes {
        config.use_filtered_boxes = false;
    }

    // (directory suffix, threshold) per run; a sweep gets one subdir each
    let runs: Vec<(Option<String>, f64)> = match &args.sweep {
        None => vec![(None, config.tracker.confidence_threshold)],
        Some(list) => {
            let mut runs = Vec::new();
            for token in list.split(',') {
                let token = token.trim();
                let t: f64 =
                    token.parse().with_context(|| format!("invalid sweep threshold `{token}`"))?;
                runs.push((Some(format!("conf_{token}")), t));
            }
            if runs.is_empty() {
                bail!("--sweep needs at least one threshold");
            }
            runs
        }
    };

    let names = dataset::list_sequences(&args.data)?;
    if names.is_empty() {
        bail!("no sequences found under {}", args.data.display());
    }

    for (subdir, threshold) in &runs {
        let mut run_config = config.clone();
        run_config.tracker.confidence_threshold = *threshold;
        let out_dir = match subdir {
            Some(d) => args.out.join(d),
            None => args.out.clone(),
        };
        names.par_iter().try_for_each(|name| -> Result<()> {
            let seq = dataset::load_sequence(&args.data, name)?;
            let frames: Vec<TrackflowFrame> = seq
                .frames
                .iter()
                .map(|rec| {
                    let detections = match &args.detections_root {
                        Some(root) => load_detections_for(root, name, rec)?,
                        None => rec.detections.clone().ok_or_else(|| {
                            anyhow::anyhow!(
                                "sequence `{name}` has no detection records; \
                                 pass --detections-root or regenerate with detections"
                            )
                        })?,
                    };
                    Ok(TrackflowFrame {
                        cloud_sensor: rec.cloud_sensor.clone(),
                        ego_pose: rec.ego_pose,
                        detections,
                    })
                })
                .collect::<Result<_>>()?;
            let run = run_trackflow_detailed(&frames, &run_config)
                .with_context(|| format!("tracking sequence `{name}`"))?;
            let seq_out = out_dir.join(name);
            std::fs::create_dir_all(&seq_out)
                .with_context(|| format!("creating {}", seq_out.display()))?;
            for (i, flow) in run.flows.iter().enumerate() {
                let path = seq_out.join(format!("{:06}.sff", seq.frames[i].frame_id));
                binfile::save_flow(&path, flow)?;
            }
            log::info!(
                "sequence {name} @ threshold {threshold}: {} tracked boxes over {} frames, {} flow files",
                run.tracked_boxes_per_frame.iter().sum::<usize>(),
                frames.len(),
                run.flows.len()
            );
            Ok(())
        })?;
        println!(
            "threshold {threshold}: wrote flow for {} sequences to {}",
            names.len(),
            out_dir.display()
        );

        if let Some(report_dir) = &args.report_dir {
            std::fs::create_dir_all(report_dir)
                .with_context(|| format!("creating {}", report_dir.display()))?;
            let eval_config = EvalConfig { eval_radius: args.radius, ..EvalConfig::semantic() };
            let outcome = evaluate_dataset(&args.data, &out_dir, &eval_config)?;
            let report_path = match subdir {
                Some(d) => report_dir.join(format!("report_{d}.json")),
                None => report_dir.join("report.json"),
            };
            outcome.report.save(&report_path)?;
            println!(
                "threshold {threshold}: mean dynamic normalized EPE {} -> {}",
                fmt_opt(outcome.report.mean.mean_dynamic_normalized_epe),
                report_path.display()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory with ground truth.
    #[arg(long)]
    data: PathBuf,
    /// Directory of predicted flow files (`<sequence>/<frame>.sff`).
    #[arg(long)]
    pred: PathBuf,
    /// Report output path.
    #[arg(long)]
    out: PathBuf,
    /// Planar evaluation radius around the ego position, meters.
    #[arg(long, default_value_t = DEFAULT_EVAL_RADIUS)]
    radius: f64,
    /// Frame spacing assumed by the speed buckets, seconds.
    #[arg(long, default_value_t = DEFAULT_NOMINAL_DT)]
    nominal_dt: f64,
    /// Speed bucket width, m/s.
    #[arg(long, default_value_t = 0.4)]
    bucket_width: f64,
    /// Start of the open-ended top speed bucket, m/s.
    #[arg(long, default_value_t = 20.0)]
    max_speed: f64,
    /// Foreground dynamic/static speed split, m/s.
    #[arg(long, default_value_t = DEFAULT_SPEED_SPLIT)]
    speed_split: f64,
    /// Group boxes by physical size instead of semantic class.
    #[arg(long)]
    size_buckets: bool,
    /// Taxonomy config file (fine-to-meta class mapping).
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Box containment margin for ground-truth flow, meters.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let class_map = load_class_map(args.taxonomy.as_deref(), args.size_buckets)?;
    let config = EvalConfig {
        eval_radius: args.radius,
        nominal_dt: args.nominal_dt,
        bucket: BucketConfig { bucket_width: args.bucket_width, max_speed: args.max_speed },
        speed_split: args.speed_split,
        class_map,
        use_size_buckets: args.size_buckets,
        containment_margin: args.margin,
    };
    let outcome = evaluate_dataset(&args.data, &args.pred, &config)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    outcome.report.save(&args.out)?;

    let r = &outcome.report;
    println!("sequences evaluated:          {}", r.sequences.len());
    println!("points evaluated:             {}", r.total_points_evaluated);
    println!("mean static EPE:              {}", fmt_opt(r.mean.mean_static_epe));
    println!("mean static EPE (foreground): {}", fmt_opt(r.mean.mean_static_epe_foreground));
    println!("mean dynamic normalized EPE:  {}", fmt_opt(r.mean.mean_dynamic_normalized_epe));
    println!("threeway mean EPE:            {}", fmt_opt(r.threeway.mean));
    if !r.missing_predictions.is_empty() {
        println!(
            "missing predictions:          {} frame pairs skipped (see report)",
            r.missing_predictions.len()
        );
    }
    println!("report: {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// stats

#[derive(Args)]
struct StatsArgs {
    /// Dataset directory to scan.
    #[arg(long, conflicts_with = "report")]
    data: Option<PathBuf>,
    /// Report file to summarize.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Taxonomy config file (with --data).
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Group boxes by physical size instead of semantic class (with --data).
    #[arg(long)]
    size_buckets: bool,
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    match (&args.data, &args.report) {
        (Some(data), None) => stats_data(data, &args),
        (None, Some(report)) => stats_report(report),
        _ => bail!("pass exactly one of --data or --report"),
    }
}

fn stats_data(data: &Path, args: &StatsArgs) -> Result<()> {
    let class_map = load_class_map(args.taxonomy.as_deref(), args.size_buckets)?;
    let taxonomy = class_map.taxonomy().clone();
    let params = GtFlowParams::default();
    let names = dataset::list_sequences(data)?;
    if names.is_empty() {
        bail!("no sequences found under {}", data.display());
    }

    struct SeqStats {
        frames: usize,
        pairs: usize,
        points: u64,
        histogram: Vec<u64>,
    }
    let per_seq: Vec<SeqStats> = names
        .par_iter()
        .map(|name| -> Result<SeqStats> {
            let seq = dataset::load_sequence(data, name)?;
            let mut histogram = vec![0u64; taxonomy.len()];
            let mut pairs = 0;
            let mut points = 0u64;
            for rec in &seq.frames {
                points += rec.cloud_sensor.len() as u64;
            }
            for i in 0..seq.frames.len().saturating_sub(1) {
                let dt = seq.frames[i + 1].timestamp - seq.frames[i].timestamp;
                let mut frame_t = annotated(&seq.frames[i], dt);
                let mut frame_t1 = annotated(&seq.frames[i + 1], dt);
                if args.size_buckets {
                    frame_t.boxes = sceneflow_core::metrics::size_bucket_classes(&frame_t.boxes);
                    frame_t1.boxes = sceneflow_core::metrics::size_bucket_classes(&frame_t1.boxes);
                }
                let gt = generate_gt_flow(&frame_t, &frame_t1, &class_map, &params).with_context(
                    || format!("sequence `{name}`, frame {}", seq.frames[i].frame_id),
                )?;
                for (h, c) in
                    histogram.iter_mut().zip(class_point_histogram(std::iter::once(&gt), &taxonomy))
                {
                    *h += c;
                }
                pairs += 1;
            }
            Ok(SeqStats { frames: seq.frames.len(), pairs, points, histogram })
        })
        .collect::<Result<_>>()?;

    let mut histogram = vec![0u64; taxonomy.len()];
    let (mut frames, mut pairs, mut points) = (0usize, 0usize, 0u64);
    for s in &per_seq {
        frames += s.frames;
        pairs += s.pairs;
        points += s.points;
        for (h, c) in histogram.iter_mut().zip(&s.histogram) {
            *h += c;
        }
    }
    let total_flow_points: u64 = histogram.iter().sum();
    println!("sequences:   {}", names.len());
    println!("frames:      {frames}");
    println!("frame pairs: {pairs}");
    println!("points:      {points}");
    println!("valid flow points by class:");
    for (id, count) in taxonomy.ids().zip(&histogram) {
        let share = if total_flow_points > 0 {
            100.0 * *count as f64 / total_flow_points as f64
        } else {
            0.0
        };
        println!("  {:<16} {:>10}  ({share:.2}%)", taxonomy.name(id), count);
    }
    Ok(())
}

fn stats_report(path: &Path) -> Result<()> {
    let report = ReportDocument::load(path)?;
    println!(
        "report {} (tool {}, schema {})",
        path.display(),
        report.tool_version,
        report.schema_version
    );
    println!("sequences: {}", report.sequences.len());
    println!("{:<16} {:>10}  {:>12}  {:>14}", "class", "points", "static EPE", "dynamic n-EPE");
    for c in &report.classes {
        println!(
            "{:<16} {:>10}  {:>12}  {:>14}",
            c.name,
            c.point_count,
            fmt_opt(c.static_epe),
            fmt_opt(c.dynamic_normalized_epe)
        );
    }
    // recompute the summary means from the per-class table
    let background = report
        .classes
        .iter()
        .find(|c| c.name == report.config.background_class)
        .map(|c| c.class)
        .unwrap_or(sceneflow_core::taxonomy::ClassId(0));
    let mean = mean_summary(&report.classes, background);
    println!("mean static EPE:              {}", fmt_opt(mean.mean_static_epe));
    println!("mean static EPE (foreground): {}", fmt_opt(mean.mean_static_epe_foreground));
    println!("mean dynamic normalized EPE:  {}", fmt_opt(mean.mean_dynamic_normalized_epe));
    if mean != report.mean {
        log::warn!("stored summary means disagree with the per-class table");
    }
    if !report.missing_predictions.is_empty() {
        println!("missing predictions: {}", report.missing_predictions.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plot

#[derive(Args)]
struct PlotArgs {
    /// Report files to chart.
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// One label per report (defaults to file stems).
    #[arg(long, num_args = 0..)]
    labels: Vec<String>,
    /// Output directory for the SVG files.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    if !args.labels.is_empty() && args.labels.len() != args.reports.len() {
        bail!("{} labels for {} reports; counts must match", args.labels.len(), args.reports.len());
    }
    let docs: Vec<ReportDocument> =
        args.reports.iter().map(|p| ReportDocument::load(p)).collect::<Result<_, _>>()?;
    let labeled: Vec<(String, &ReportDocument)> = docs
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let label = args.labels.get(i).cloned().unwrap_or_else(|| {
                args.reports[i]
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("report {i}"))
            });
            (label, doc)
        })
        .collect();

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let charts = [
        ("mean_dynamic.svg", svg::mean_dynamic_chart(&labeled)?),
        ("per_class_dynamic.svg", svg::per_class_dynamic_chart(&labeled)?),
        ("class_histogram.svg", svg::class_histogram_chart(&labeled)?),
    ];
    for (file, content) in charts {
        let path = args.out.join(file);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// convert

#[derive(Args)]
struct ConvertArgs {
    /// Source dataset directory.
    #[arg(long)]
    input: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    bail!(
        "no external dataset adapters are built in yet; write the documented \
         directory layout directly (refusing to guess the format of {})",
        args.input.display()
    )
}
