//! Command-line interface: dataset synthesis, training, inference,
//! evaluation, and benchmarking, wired together from the library modules.
//!
//! Every subcommand echoes its fully resolved configuration next to its
//! outputs so a run can be reproduced from the artifacts alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::imgio::{save_mask, save_unit_image, CaseManifest, ImgIoError, SliceEntry};
use crate::metrics::{
    aggregate, confusion, dice, hd95, jaccard, lesion_confusion, normal_vs_abnormal_matrix,
    precision, recall, rows_to_csv, BinaryMask, CaseClassRow, LesionConfusion, MetricError,
    WmhTypeMatrix,
};
use crate::nn::generator::GeneratorConfig;
use crate::nn::train::logs_to_csv;
use crate::nn::{train, DiscriminatorConfig, GanModel, Mode, NnError, Tensor, TrainSample};
use crate::phantom::{generate_dataset, PhantomCase};
use crate::postproc::{
    decode_classes, morphological_cleanup, to_native, PostprocError,
};
use crate::preproc::{
    compute_norm_params, denoise, encode_target, extract_brain, fit_to_frame, normalize,
    warp_nearest, AffineTransform, PreprocError,
};
use crate::types::{ClassMask, Slice, TypeError, CLASS_NAMES, NUM_CLASSES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<ImgIoError> for CliError {
    fn from(e: ImgIoError) -> Self {
        CliError::Data(e.to_string())
    }
}
impl From<TypeError> for CliError {
    fn from(e: TypeError) -> Self {
        CliError::Data(e.to_string())
    }
}
impl From<PreprocError> for CliError {
    fn from(e: PreprocError) -> Self {
        CliError::Data(e.to_string())
    }
}
impl From<PostprocError> for CliError {
    fn from(e: PostprocError) -> Self {
        CliError::Data(e.to_string())
    }
}
impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}
impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "wmhseg",
    about = "Simultaneous ventricle and white-matter-lesion segmentation on 2D slices",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Args)]
pub struct CommonOpts {
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Inline config overrides, e.g. --set epochs=30 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with exact ground-truth masks.
    Phantom {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train the adversarial segmentation model on a dataset directory.
    Train {
        /// Directory of case subdirectories, each with a manifest.txt.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Segment a dataset with trained weights.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compare predicted masks against ground truth.
    Eval {
        /// Directory written by `infer`.
        #[arg(long)]
        pred: PathBuf,
        /// Dataset directory holding the ground-truth manifests.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Time the preprocess/inference/postprocess stages per slice.
    Bench {
        /// Optional trained weights; random initialization otherwise.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

/// Resolve the configuration (defaults, then file, then overrides), validate
/// it, create the output directory, and echo the resolved config there.
fn resolve_config(common: &CommonOpts, echo_name: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&common.set)?;
    cfg.validate()?;
    fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    let echo = common.out.join(echo_name);
    fs::write(&echo, cfg.to_text()).map_err(|e| io_err(&echo, e))?;
    Ok(cfg)
}

/// Generator/discriminator architecture for a given frame size: stage count
/// is log2(size) so the bottleneck is 1x1; widths follow a doubling ramp
/// capped at 512.
pub fn model_for(size: usize) -> (GeneratorConfig, DiscriminatorConfig) {
    let depth = size.trailing_zeros() as usize;
    let enc: Vec<usize> = (0..depth).map(|i| (64usize << i).min(512)).collect();
    (
        GeneratorConfig {
            enc_channels: enc,
            ..Default::default()
        },
        DiscriminatorConfig::default(),
    )
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Phantom { common } => cmd_phantom(&common),
        Command::Train { data, common } => cmd_train(&data, &common),
        Command::Infer {
            weights,
            data,
            common,
        } => cmd_infer(&weights, &data, &common),
        Command::Eval { pred, data, common } => cmd_eval(&pred, &data, &common),
        Command::Bench { weights, common } => cmd_bench(weights.as_deref(), &common),
    }
}

// ---------------------------------------------------------------- phantom

fn write_cases(cases: &[PhantomCase], dir: &Path) -> Result<(), CliError> {
    for case in cases {
        let case_dir = dir.join(&case.case_id);
        fs::create_dir_all(&case_dir).map_err(|e| io_err(&case_dir, e))?;
        let mut manifest = CaseManifest::new(&case.case_id, &case_dir);
        if let Some((s, _)) = case.slices.first() {
            manifest.spacing = (s.spacing_x, s.spacing_y, s.slice_thickness);
        }
        for (slice, mask) in &case.slices {
            let img_name = format!("slice_{:03}.pgm", slice.slice_index);
            let mask_name = format!("mask_{:03}.pgm", mask.slice_index);
            save_unit_image(
                &slice.pixels,
                slice.height,
                slice.width,
                &case_dir.join(&img_name),
            )?;
            save_mask(mask, &case_dir.join(&mask_name))?;
            manifest.slices.push(SliceEntry {
                slice_index: slice.slice_index,
                image: PathBuf::from(&img_name),
                mask: Some(PathBuf::from(&mask_name)),
            });
        }
        manifest.save(&case_dir.join("manifest.txt"))?;
    }
    Ok(())
}

fn cmd_phantom(common: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve_config(common, "phantom.config.txt")?;
    let (train_cases, test_cases) =
        generate_dataset(&cfg.phantom(), cfg.phantom_cases, cfg.seed);
    write_cases(&train_cases, &common.out.join("train"))?;
    write_cases(&test_cases, &common.out.join("test"))?;
    println!(
        "wrote {} training and {} test cases to {}",
        train_cases.len(),
        test_cases.len(),
        common.out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------ data

/// Load every case manifest found one level below `dir`, sorted by case id.
pub fn load_dataset(dir: &Path) -> Result<Vec<(Slice, Option<ClassMask>)>, CliError> {
    let mut manifests: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| {
            let p = entry.ok()?.path();
            let m = p.join("manifest.txt");
            m.is_file().then_some(m)
        })
        .collect();
    manifests.sort();
    if manifests.is_empty() {
        return Err(CliError::Data(format!(
            "no case manifests under {}",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    for m in &manifests {
        out.extend(CaseManifest::load(m)?.load_case()?);
    }
    Ok(out)
}

/// Everything inference needs from one preprocessed slice.
pub struct PreprocessedSlice {
    pub frame: Vec<f32>,
    pub transform: AffineTransform,
}

pub fn preprocess_slice(slice: &Slice, cfg: &RunConfig) -> Result<PreprocessedSlice, CliError> {
    let pre = cfg.preproc();
    let den = denoise(slice, &pre)?;
    let brain = extract_brain(&den, &pre)?;
    let norm = compute_norm_params(&den, &brain, &pre)?;
    let normalized = normalize(&den, &norm);
    let (frame, transform) = fit_to_frame(&normalized, &brain, &pre)?;
    Ok(PreprocessedSlice { frame, transform })
}

// ----------------------------------------------------------------- train

fn cmd_train(data: &Path, common: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve_config(common, "train.config.txt")?;
    let dataset = load_dataset(data)?;
    let mut samples = Vec::with_capacity(dataset.len());
    for (slice, mask) in &dataset {
        let mask = mask.as_ref().ok_or_else(|| {
            CliError::Data(format!(
                "case {} slice {} has no mask; training needs labeled data",
                slice.case_id, slice.slice_index
            ))
        })?;
        let p = preprocess_slice(slice, &cfg)?;
        let warped = warp_nearest(
            &mask.labels,
            mask.height,
            mask.width,
            &p.transform,
            cfg.image_size,
            cfg.image_size,
        )?;
        let frame_mask = ClassMask::new(
            warped,
            cfg.image_size,
            cfg.image_size,
            &slice.case_id,
            slice.slice_index,
        )?;
        samples.push(TrainSample {
            case_id: slice.case_id.clone(),
            input: p.frame,
            target: encode_target(&frame_mask),
        });
    }
    let (gen_cfg, disc_cfg) = model_for(cfg.image_size);
    let mut model = GanModel::new(gen_cfg, disc_cfg, cfg.seed);
    let result = train(&mut model, &samples, &cfg.train(), &mut |log| {
        let pr = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:3}  loss_G {:8.4}  loss_D {:7.4}  L1 {:7.4}  val {:8.4}  AP v/n/a {}/{}/{}",
            log.epoch,
            log.loss_g,
            log.loss_d,
            log.loss_l1,
            log.val_loss,
            pr(log.auc_pr[0]),
            pr(log.auc_pr[1]),
            pr(log.auc_pr[2]),
        );
    })?;
    model.save_weights(&common.out.join("weights.bin"))?;
    let log_path = common.out.join("training_log.csv");
    fs::write(&log_path, logs_to_csv(&result.logs)).map_err(|e| io_err(&log_path, e))?;
    println!(
        "kept epoch {} (held-out loss {:.4}); weights and log in {}",
        result.best_epoch,
        result.best_val_loss,
        common.out.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- infer

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub slices: usize,
    /// Mean per-slice milliseconds of each stage.
    pub preprocess_ms: f64,
    pub inference_ms: f64,
    pub postprocess_ms: f64,
    /// Mean per-slice total; equals the sum of the stage means.
    pub total_ms: f64,
}

impl TimingReport {
    fn from_sums(slices: usize, pre: f64, inf: f64, post: f64) -> Self {
        let n = slices.max(1) as f64;
        TimingReport {
            slices,
            preprocess_ms: pre / n,
            inference_ms: inf / n,
            postprocess_ms: post / n,
            total_ms: (pre + inf + post) / n,
        }
    }
}

/// Run the full pipeline on one slice, timing each stage (milliseconds).
pub fn infer_slice(
    model: &mut GanModel,
    slice: &Slice,
    cfg: &RunConfig,
) -> Result<(ClassMask, [f64; 3]), CliError> {
    let t0 = Instant::now();
    let p = preprocess_slice(slice, cfg)?;
    let t_pre = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let x = Tensor::from_vec([1, 1, cfg.image_size, cfg.image_size], p.frame);
    let mut rng = ChaCha8Rng::seed_from_u64(0); // eval mode draws nothing
    let gen_out = model.gen.forward(&x, Mode::Eval, &mut rng);
    let t_inf = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let native = to_native(
        &gen_out.data,
        cfg.image_size,
        &p.transform,
        slice.height,
        slice.width,
    )?;
    let decoded = decode_classes(
        &native,
        slice.height,
        slice.width,
        &slice.case_id,
        slice.slice_index,
        &cfg.postproc(),
    )?;
    let mut cleaned = morphological_cleanup(&decoded, &cfg.postproc());
    cleaned = cleaned.with_spacing(slice.spacing_x, slice.spacing_y, slice.slice_thickness)?;
    let t_post = t2.elapsed().as_secs_f64() * 1e3;
    Ok((cleaned, [t_pre, t_inf, t_post]))
}

fn cmd_infer(weights: &Path, data: &Path, common: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve_config(common, "infer.config.txt")?;
    let dataset = load_dataset(data)?;
    let (gen_cfg, disc_cfg) = model_for(cfg.image_size);
    let mut model = GanModel::new(gen_cfg, disc_cfg, cfg.seed);
    model.load_weights(weights)?;
    let (mut pre, mut inf, mut post) = (0.0, 0.0, 0.0);
    for (slice, _) in &dataset {
        let (mask, times) = infer_slice(&mut model, slice, &cfg)?;
        pre += times[0];
        inf += times[1];
        post += times[2];
        let case_dir = common.out.join(&slice.case_id);
        fs::create_dir_all(&case_dir).map_err(|e| io_err(&case_dir, e))?;
        save_mask(&mask, &case_dir.join(format!("pred_{:03}.pgm", slice.slice_index)))?;
    }
    let report = TimingReport::from_sums(dataset.len(), pre, inf, post);
    let timing_path = common.out.join("timing.json");
    fs::write(
        &timing_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| io_err(&timing_path, e))?;
    println!(
        "segmented {} slices; mean per-slice ms: preprocess {:.1}, inference {:.1}, postprocess {:.1}",
        report.slices, report.preprocess_ms, report.inference_ms, report.postprocess_ms
    );
    Ok(())
}

// ------------------------------------------------------------------ eval

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub per_class: crate::metrics::AggregateReport,
    /// Lesion-level detection counts for the pathological class.
    pub lesion_detection: LesionConfusion,
    /// Voxel confusion between the two change types over truth-WMH voxels.
    pub wmh_type_matrix: Option<WmhTypeMatrix>,
}

/// Per-slice, per-class rows against ground truth. HD95 is reported missing
/// (None) when either boundary is empty, never coerced to a number.
pub fn evaluate_pair(pred: &ClassMask, truth: &ClassMask) -> Result<Vec<CaseClassRow>, CliError> {
    let mut rows = Vec::new();
    for class_id in 1..NUM_CLASSES as u8 {
        let p = BinaryMask::new_2d(
            pred.class_mask(class_id),
            pred.height,
            pred.width,
            truth.spacing_x,
            truth.spacing_y,
        );
        let t = BinaryMask::new_2d(
            truth.class_mask(class_id),
            truth.height,
            truth.width,
            truth.spacing_x,
            truth.spacing_y,
        );
        let c = confusion(&p, &t)?;
        let hd = match hd95(&p, &t) {
            Ok(v) => Some(v),
            Err(MetricError::UndefinedBoundary(_)) => None,
            Err(e) => return Err(e.into()),
        };
        rows.push(CaseClassRow {
            case_id: format!("{}:{:03}", truth.case_id, truth.slice_index),
            class_name: CLASS_NAMES[class_id as usize].to_string(),
            precision: precision(&c),
            recall: recall(&c),
            dice: dice(&p, &t)?,
            jaccard: jaccard(&p, &t)?,
            hd95_mm: hd,
        });
    }
    Ok(rows)
}

fn cmd_eval(pred_dir: &Path, data: &Path, common: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve_config(common, "eval.config.txt")?;
    let _ = &cfg;
    let dataset = load_dataset(data)?;
    let mut rows = Vec::new();
    let mut lesions = LesionConfusion {
        counts: crate::metrics::ConfusionCounts::default(),
        tn_defined: false,
    };
    let mut type_matrix: Option<WmhTypeMatrix> = None;
    for (slice, truth) in &dataset {
        let truth = truth.as_ref().ok_or_else(|| {
            CliError::Data(format!("case {} has no ground-truth masks", slice.case_id))
        })?;
        let pred_path = pred_dir
            .join(&slice.case_id)
            .join(format!("pred_{:03}.pgm", slice.slice_index));
        let pred = crate::imgio::load_mask(&pred_path)?;
        if (pred.height, pred.width) != (truth.height, truth.width) {
            return Err(CliError::Data(format!(
                "{}: prediction geometry {}x{} does not match truth {}x{}",
                pred_path.display(),
                pred.height,
                pred.width,
                truth.height,
                truth.width
            )));
        }
        rows.extend(evaluate_pair(&pred, truth)?);
        let lc = lesion_confusion(&pred, truth, crate::types::CLASS_ABNORMAL_WMH)?;
        lesions.counts.tp += lc.counts.tp;
        lesions.counts.fp += lc.counts.fp;
        lesions.counts.fn_ += lc.counts.fn_;
        match normal_vs_abnormal_matrix(&pred, truth) {
            Ok(m) => {
                let acc = type_matrix.get_or_insert(WmhTypeMatrix {
                    matrix: [[0; 2]; 2],
                    unassigned: 0,
                });
                for i in 0..2 {
                    for j in 0..2 {
                        acc.matrix[i][j] += m.matrix[i][j];
                    }
                }
                acc.unassigned += m.unassigned;
            }
            Err(MetricError::NoWmhVoxels) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let csv_path = common.out.join("metrics.csv");
    fs::write(&csv_path, rows_to_csv(&rows)).map_err(|e| io_err(&csv_path, e))?;
    let summary = EvalSummary {
        per_class: aggregate(&rows)?,
        lesion_detection: lesions,
        wmh_type_matrix: type_matrix,
    };
    let json_path = common.out.join("summary.json");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| io_err(&json_path, e))?;
    for (class, metrics) in &summary.per_class.per_class {
        if let Some(d) = metrics.get("dice") {
            println!("{class}: mean Dice {:.3} over {} slices", d.mean, d.n);
        }
    }
    Ok(())
}

// ----------------------------------------------------------------- bench

fn cmd_bench(weights: Option<&Path>, common: &CommonOpts) -> Result<(), CliError> {
    let cfg = resolve_config(common, "bench.config.txt")?;
    let (gen_cfg, disc_cfg) = model_for(cfg.image_size);
    let mut model = GanModel::new(gen_cfg, disc_cfg, cfg.seed);
    if let Some(w) = weights {
        model.load_weights(w)?;
    }
    let case = crate::phantom::generate_case(&cfg.phantom(), "bench", cfg.seed);
    let (mut pre, mut inf, mut post) = (0.0, 0.0, 0.0);
    let mut n = 0usize;
    for _ in 0..cfg.bench_iterations {
        for (slice, _) in &case.slices {
            let (_, times) = infer_slice(&mut model, slice, &cfg)?;
            pre += times[0];
            inf += times[1];
            post += times[2];
            n += 1;
        }
    }
    let report = TimingReport::from_sums(n, pre, inf, post);
    let path = common.out.join("bench.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| io_err(&path, e))?;
    println!(
        "{} slice runs; mean per-slice ms: preprocess {:.1}, inference {:.1}, postprocess {:.1}, total {:.1}",
        report.slices, report.preprocess_ms, report.inference_ms, report.postprocess_ms, report.total_ms
    );
    Ok(())
}
