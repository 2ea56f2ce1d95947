//! `ptzcal`: synthetic experiments, forest training, calibration and the
//! annotation service from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use ptzcal_core::camera::{parse_base, parse_cameras, BaseRecord, CameraBase, PtzCamera, PtzParams};
use ptzcal_core::descriptor::GrayImage;
use ptzcal_core::forest::{Descriptor, PanTiltForest};
use ptzcal_core::metrics::{compute_iou, evaluate, EvalResult};
use ptzcal_core::pose::{calibrate_image, format_observations, observations_from_forest, RansacConfig};
use ptzcal_core::two_point::calibrate_two_points;
use ptzcal_core::{Correspondence, FieldModel, TwoPointProblem};
use ptzcal_service::api::{extract_keypoints, KeypointPayload, SolutionPayload, DEFAULT_MAX_KEYPOINTS};
use ptzcal_synth::forest_experiment::{failures_above_fov, forest_scene, fov_report, query_view, train_experiment_forest};
use ptzcal_synth::report::{format_fov, format_sweep, to_csv, to_json, OutputFormat};
use ptzcal_synth::{generate_scene, run_base_uncertainty_sweep, run_noise_sweep, BaseMode, ExperimentConfig};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "ptzcal", version, about = "PTZ sports-camera calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noise or base-uncertainty sweep on the synthetic stadium.
    SynthSweep(SweepArgs),
    /// Train a pan-tilt forest on synthetic reference views.
    TrainForest(TrainArgs),
    /// Write a synthetic image record (keypoints, base, ground truth).
    SynthImage(SynthImageArgs),
    /// Calibrate an image from its keypoints with a trained forest.
    Calibrate(CalibrateArgs),
    /// Two-point calibration from two named field key points.
    TwoPoint(TwoPointArgs),
    /// Compare estimated cameras against ground truth.
    Evaluate(EvaluateArgs),
    /// IoU against horizontal field of view on synthetic queries.
    FovReport(FovArgs),
    /// Run the HTTP annotation service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// 100 cameras with 100 trials each.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Fixed feature-distance threshold instead of the calibrated one.
    #[arg(long)]
    threshold: Option<f64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(t) = self.trees {
            cfg.forest.trees.tree_count = t;
        }
        if let Some(d) = self.max_depth {
            cfg.forest.trees.max_depth = d;
        }
        if let Some(t) = self.threshold {
            cfg.forest.trees.feature_distance_threshold = Some(t);
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// table, csv or json
    #[arg(long, default_value = "table")]
    format: OutputFormat,
}

impl OutputArgs {
    fn emit(&self, text: &str) -> Result<(), String> {
        match &self.out {
            Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SweepKind {
    Noise,
    Location,
    Rotation,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum, default_value = "noise")]
    kind: SweepKind,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Output forest file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthImageArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Index of the held-out view.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    forest: PathBuf,
    /// Image record (JSON) with base, keypoints and optional ground truth.
    #[arg(long, conflicts_with_all = ["image", "base"])]
    record: Option<PathBuf>,
    /// Binary PGM image; keypoints are detected in it.
    #[arg(long, requires = "base")]
    image: Option<PathBuf>,
    /// Camera base (TOML), used with --image.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    field: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-keypoint ray predictions (CSV) here.
    #[arg(long)]
    dump_observations: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TwoPointArgs {
    /// Camera base (TOML).
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    field: Option<PathBuf>,
    /// `name:x,y`, given exactly twice.
    #[arg(long = "point", required = true)]
    points: Vec<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth camera file (TOML).
    #[arg(long)]
    gt: PathBuf,
    /// Estimated camera file, same order.
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    field: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FovArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Use this forest instead of training one.
    #[arg(long)]
    forest: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long)]
    field: Option<PathBuf>,
    /// Directory for per-session files.
    #[arg(long)]
    persist: Option<PathBuf>,
}

/// Keypoints of one image with its camera base.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageRecord {
    base: BaseRecord,
    #[serde(default)]
    ground_truth: Option<PtzParams>,
    keypoints: Vec<KeypointPayload>,
}

#[derive(Serialize)]
struct CalibrationOutput {
    pan: f64,
    tilt: f64,
    focal_length: f64,
    inlier_count: usize,
    reprojection_rmse: f64,
    iterations_used: usize,
    iou: Option<f64>,
}

#[derive(Serialize)]
struct EvalRow {
    index: usize,
    #[serde(flatten)]
    result: EvalResult,
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_field(path: Option<&PathBuf>) -> Result<FieldModel, String> {
    match path {
        Some(p) => FieldModel::from_toml(&read(p)?).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(FieldModel::default()),
    }
}

fn load_base(path: &Path) -> Result<CameraBase, String> {
    parse_base(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_forest(path: &Path) -> Result<PanTiltForest, String> {
    PanTiltForest::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn synth_sweep(args: &SweepArgs) -> Result<(), String> {
    let cfg = args.experiment.load()?;
    let start = Instant::now();
    let scene = generate_scene(&cfg);
    let rows = match args.kind {
        SweepKind::Noise => run_noise_sweep(&scene, &cfg),
        SweepKind::Location => run_base_uncertainty_sweep(&scene, &cfg, BaseMode::Location),
        SweepKind::Rotation => run_base_uncertainty_sweep(&scene, &cfg, BaseMode::Rotation),
    };
    eprintln!(
        "{} cameras x {} trials per level in {:.1} s",
        cfg.cameras_count,
        cfg.trials_per_camera,
        start.elapsed().as_secs_f64()
    );
    args.output.emit(&format_sweep(&rows, args.output.format))
}

fn train(args: &TrainArgs) -> Result<(), String> {
    let cfg = args.experiment.load()?;
    let scene = forest_scene(&cfg);
    let forest = train_experiment_forest(&scene, &cfg).map_err(|e| e.to_string())?;
    forest.save(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    eprintln!(
        "{} trees, feature-distance threshold {:.6}",
        forest.trees().len(),
        forest.feature_distance_threshold()
    );
    Ok(())
}

fn synth_image(args: &SynthImageArgs) -> Result<(), String> {
    let cfg = args.experiment.load()?;
    let scene = forest_scene(&cfg);
    let view = query_view(&scene, &cfg, args.index);
    let record = ImageRecord {
        base: BaseRecord::from(&scene.base),
        ground_truth: Some(view.ptz),
        keypoints: view
            .keypoints
            .iter()
            .map(|(p, d)| KeypointPayload {
                pixel: [p.x, p.y],
                descriptor: d.values().to_vec(),
            })
            .collect(),
    };
    std::fs::write(&args.out, to_json(&record)).map_err(|e| format!("{}: {e}", args.out.display()))
}

fn calibrate(args: &CalibrateArgs) -> Result<(), String> {
    let forest = load_forest(&args.forest)?;
    let field = load_field(args.field.as_ref())?;
    let (base, keypoints, gt) = if let Some(path) = &args.record {
        let record: ImageRecord = serde_json::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = CameraBase::try_from(&record.base).map_err(|e| format!("{}: {e}", path.display()))?;
        let kps = record
            .keypoints
            .iter()
            .map(|k| Descriptor::new(k.descriptor.clone()).map(|d| (Vector2::from(k.pixel), d)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        (base, kps, record.ground_truth)
    } else if let (Some(image), Some(base)) = (&args.image, &args.base) {
        let bytes = std::fs::read(image).map_err(|e| format!("{}: {e}", image.display()))?;
        let img = GrayImage::from_pgm(&bytes).map_err(|e| format!("{}: {e}", image.display()))?;
        (load_base(base)?, extract_keypoints(&img, DEFAULT_MAX_KEYPOINTS), None)
    } else {
        return Err("give either --record or --image with --base".into());
    };
    if let Some(path) = &args.dump_observations {
        let obs = observations_from_forest(&forest, &keypoints).map_err(|e| e.to_string())?;
        std::fs::write(path, format_observations(&obs)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let cfg = RansacConfig {
        seed: args.seed,
        ..RansacConfig::default()
    };
    let est = calibrate_image(&base, &forest, &keypoints, &cfg).map_err(|e| e.to_string())?;
    let iou = match gt {
        Some(gt) => Some(
            compute_iou(&PtzCamera::new(base.clone(), gt), &PtzCamera::new(base.clone(), est.ptz), &field)
                .map_err(|e| e.to_string())?,
        ),
        None => None,
    };
    let out = CalibrationOutput {
        pan: est.ptz.pan,
        tilt: est.ptz.tilt,
        focal_length: est.ptz.focal_length,
        inlier_count: est.inlier_indices.len(),
        reprojection_rmse: est.reprojection_rmse,
        iterations_used: est.iterations_used,
        iou,
    };
    let text = match args.output.format {
        OutputFormat::Json => to_json(&out),
        OutputFormat::Csv => to_csv(&[out]),
        OutputFormat::Table => format!(
            "pan {:.6} deg\ntilt {:.6} deg\nfocal {:.3} px\ninliers {}\nrmse {:.4} px\niou {}\n",
            out.pan,
            out.tilt,
            out.focal_length,
            out.inlier_count,
            out.reprojection_rmse,
            out.iou.map_or("n/a".to_string(), |v| format!("{v:.6}"))
        ),
    };
    args.output.emit(&text)
}

fn parse_point(s: &str) -> Result<(String, Vector2<f64>), String> {
    let (name, xy) = s.rsplit_once(':').ok_or_else(|| format!("point `{s}` is not name:x,y"))?;
    let (x, y) = xy.split_once(',').ok_or_else(|| format!("point `{s}` is not name:x,y"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad coordinate `{v}` in `{s}`"));
    Ok((name.to_string(), Vector2::new(parse(x)?, parse(y)?)))
}

fn two_point(args: &TwoPointArgs) -> Result<(), String> {
    if args.points.len() != 2 {
        return Err(format!("expected exactly two --point values, got {}", args.points.len()));
    }
    let base = load_base(&args.base)?;
    let field = load_field(args.field.as_ref())?;
    let mut corr = Vec::new();
    for p in &args.points {
        let (name, pixel) = parse_point(p)?;
        let kp = field.key_point(&name).ok_or_else(|| format!("unknown key point `{name}`"))?;
        corr.push(Correspondence::new(kp.world(), pixel));
    }
    let problem = TwoPointProblem::new(base, corr[0], corr[1]).map_err(|e| e.to_string())?;
    let sol = calibrate_two_points(&problem).map_err(|e| e.to_string())?;
    let payload = SolutionPayload::from(&sol);
    let text = match args.output.format {
        OutputFormat::Json => to_json(&payload),
        OutputFormat::Csv => to_csv(&[payload]),
        OutputFormat::Table => format!(
            "pan {:.9} deg\ntilt {:.9} deg\nfocal {:.6} px\nrmse {:.3e} px\n",
            payload.pan, payload.tilt, payload.focal_length, payload.reprojection_rmse
        ),
    };
    args.output.emit(&text)
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), String> {
    let gt = parse_cameras(&read(&args.gt)?).map_err(|e| format!("{}: {e}", args.gt.display()))?;
    let est = parse_cameras(&read(&args.est)?).map_err(|e| format!("{}: {e}", args.est.display()))?;
    if gt.len() != est.len() {
        return Err(format!("{} ground-truth cameras but {} estimates", gt.len(), est.len()));
    }
    let field = load_field(args.field.as_ref())?;
    let mut rows = Vec::new();
    for (i, (g, e)) in gt.iter().zip(&est).enumerate() {
        if g.base != e.base {
            return Err(format!("camera {i}: estimate uses a different base"));
        }
        let result = evaluate(g, &e.ptz, &field).map_err(|err| format!("camera {i}: {err}"))?;
        rows.push(EvalRow { index: i, result });
    }
    let text = match args.output.format {
        OutputFormat::Json => to_json(&rows),
        OutputFormat::Csv => to_csv(&rows),
        OutputFormat::Table => {
            let mut s = format!("{:>5} {:>10} {:>12} {:>12} {:>12}\n", "index", "iou", "rot_err_deg", "focal_err_px", "pan_err_deg");
            for r in &rows {
                s += &format!(
                    "{:>5} {:>10.6} {:>12.6} {:>12.4} {:>12.6}\n",
                    r.index, r.result.iou, r.result.rotation_error, r.result.focal_error, r.result.pan_error
                );
            }
            s
        }
    };
    args.output.emit(&text)
}

fn fov(args: &FovArgs) -> Result<(), String> {
    let cfg = args.experiment.load()?;
    let scene = forest_scene(&cfg);
    let forest = match &args.forest {
        Some(p) => load_forest(p)?,
        None => train_experiment_forest(&scene, &cfg).map_err(|e| e.to_string())?,
    };
    let out = fov_report(&scene, &forest, &cfg);
    eprintln!(
        "{} queries, {} failures, {} failures above 40 deg",
        out.len(),
        out.iter().filter(|o| o.failed()).count(),
        failures_above_fov(&out, 40.0)
    );
    args.output.emit(&format_fov(&out, args.output.format))
}

fn serve(args: &ServeArgs) -> Result<(), String> {
    let opts = ptzcal_service::ServiceOptions {
        port: args.port,
        forest: args.forest.clone(),
        field: args.field.clone(),
        persist: args.persist.clone(),
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(ptzcal_service::serve(opts)).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SynthSweep(a) => synth_sweep(a),
        Command::TrainForest(a) => train(a),
        Command::SynthImage(a) => synth_image(a),
        Command::Calibrate(a) => calibrate(a),
        Command::TwoPoint(a) => two_point(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::FovReport(a) => fov(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
