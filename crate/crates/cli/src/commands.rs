//! The four subcommands, callable as library functions. Each returns a
//! [`CliError`] whose [`exit_code`](CliError::exit_code) is what the binary
//! exits with.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use convmcd::autograd::Fault;
use convmcd::gradcheck::{gradcheck_with, GradcheckReport};
use convmcd::loss::{HeadVariant, LossWeights};
use convmcd::metrics::{evaluate_pair, MetricProtocol, MetricsReport, Prediction};
use convmcd::targets::{make_targets_with, ContourRadius, D1Direction, DistanceMapKind};
use convmcd::train::{predict_probability, run_demo, DemoConfig, Optimizer, DEMO_LEARNING_RATE};
use convmcd::{BinaryMask, Error};
use serde::Serialize;

use crate::fmap::Fmap;
use crate::pngio::{read_mask, write_gray, write_mask};
use crate::report::EvalReport;
use crate::snapshot::write_snapshot;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, mismatched directories or invalid settings.
    #[error("{0}")]
    Input(String),
    #[error("{file}: mask has no contour, so the signed distance map (d3) is undefined")]
    EmptyContour { file: String },
    #[error("training diverged in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("gradient check failed for: {}", .failed.join(", "))]
    GradcheckFailed { failed: Vec<String> },
    /// Failures writing outputs.
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Output(_) => 1,
            Self::Input(_) => 2,
            Self::EmptyContour { .. } => 3,
            Self::Divergence { .. } => 4,
            Self::GradcheckFailed { .. } => 5,
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| output_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| output_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    write_text(path, &(text + "\n"))
}

/// Files in `dir` keyed by stem, for the given lowercase extensions, in
/// sorted order. A stem present with two extensions is an error.
fn list_files(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(previous) = out.insert(stem.to_string(), path.clone()) {
            return Err(CliError::Input(format!(
                "{} and {} share the name {stem:?}",
                previous.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetsOptions {
    pub masks: PathBuf,
    pub out: PathBuf,
    pub distance: DistanceMapKind,
    pub radius: ContourRadius,
    pub d1_direction: D1Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetEntry {
    pub name: String,
    pub mask: String,
    pub width: usize,
    pub height: usize,
    pub radius: u32,
    pub contour: String,
    pub distance: String,
    pub source_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetsManifest {
    pub distance: String,
    pub radius: String,
    pub d1_direction: &'static str,
    pub normalized: bool,
    pub foreground_threshold: u8,
    pub entries: Vec<TargetEntry>,
}

pub const TARGETS_MANIFEST: &str = "manifest.json";

/// Writes `<name>.contour.png`, `<name>.dist.fmap` per mask and a
/// `manifest.json`. All masks are processed before anything is written.
pub fn cmd_targets(opts: &TargetsOptions) -> Result<TargetsManifest, CliError> {
    let masks = list_files(&opts.masks, &["png"])?;
    let mut outputs = Vec::with_capacity(masks.len());
    for (name, path) in &masks {
        let mask = read_mask(path).map_err(|e| CliError::Input(e.to_string()))?;
        let targets = make_targets_with(&mask, opts.distance, opts.radius, opts.d1_direction)
            .map_err(|e| match e {
                Error::EmptyContour => CliError::EmptyContour {
                    file: path.display().to_string(),
                },
                other => CliError::Input(format!("{}: {other}", path.display())),
            })?;
        outputs.push((name, path, targets));
    }

    create_dir(&opts.out)?;
    let mut entries = Vec::with_capacity(outputs.len());
    for (name, path, t) in outputs {
        let contour = format!("{name}.contour.png");
        let distance = format!("{name}.dist.fmap");
        let cpath = opts.out.join(&contour);
        write_mask(&cpath, &t.contour).map_err(|e| CliError::Output(e.to_string()))?;
        let dpath = opts.out.join(&distance);
        Fmap::from_grids(&[&t.distance.grid])
            .and_then(|f| f.write_file(&dpath))
            .map_err(|e| output_err(&dpath, e))?;
        let (width, height) = t.mask.dims();
        entries.push(TargetEntry {
            name: name.clone(),
            mask: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            width,
            height,
            radius: opts.radius.resolve(width, height),
            contour,
            distance,
            source_empty: t.distance.source_empty,
        });
    }
    let manifest = TargetsManifest {
        distance: opts.distance.to_string(),
        radius: opts.radius.to_string(),
        d1_direction: match opts.d1_direction {
            D1Direction::ToForeground => "to_foreground",
            D1Direction::ToBackground => "to_background",
        },
        normalized: true,
        foreground_threshold: crate::pngio::FOREGROUND_THRESHOLD,
        entries,
    };
    write_json(&opts.out.join(TARGETS_MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub report: PathBuf,
    pub csv: Option<PathBuf>,
    pub trimap: Option<PathBuf>,
    pub protocol: MetricProtocol,
}

/// Reads a prediction: a PNG mask, or an FMAP of probabilities with one
/// channel (foreground) or two (background, foreground).
pub fn read_prediction(path: &Path) -> Result<Prediction, CliError> {
    let is_fmap = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("fmap"));
    if !is_fmap {
        return read_mask(path)
            .map(Prediction::Mask)
            .map_err(|e| CliError::Input(e.to_string()));
    }
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let f = Fmap::read_file(path).map_err(|e| bad(e.to_string()))?;
    let grid = match f.channels() {
        1 => f.channel(0),
        2 => f.channel(1),
        c => return Err(bad(format!("expected 1 or 2 channels, found {c}"))),
    }
    .map_err(|e| bad(e.to_string()))?;
    if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(bad(format!("probability {v} outside [0, 1]")));
    }
    Ok(Prediction::Probability(grid))
}

/// Evaluates every prediction against the ground-truth mask of the same
/// name and writes the JSON report plus the optional CSV files.
pub fn cmd_eval(opts: &EvalOptions) -> Result<EvalReport, CliError> {
    let preds = list_files(&opts.pred, &["png", "fmap"])?;
    let gts = list_files(&opts.gt, &["png"])?;
    let only_pred: Vec<&str> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .map(String::as_str)
        .collect();
    let only_gt: Vec<&str> = gts
        .keys()
        .filter(|k| !preds.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !only_pred.is_empty() || !only_gt.is_empty() {
        return Err(CliError::Input(format!(
            "prediction and ground-truth names differ; only in --pred: [{}]; only in --gt: [{}]",
            only_pred.join(", "),
            only_gt.join(", ")
        )));
    }
    if gts.is_empty() {
        return Err(CliError::Input(format!(
            "no images to evaluate in {} and {}",
            opts.pred.display(),
            opts.gt.display()
        )));
    }

    let mut rows = Vec::with_capacity(gts.len());
    for (name, gt_path) in &gts {
        let gt: BinaryMask = read_mask(gt_path).map_err(|e| CliError::Input(e.to_string()))?;
        let pred = read_prediction(&preds[name])?;
        let m = evaluate_pair(name.clone(), &pred, &gt, &opts.protocol)
            .map_err(|e| CliError::Input(format!("{name}: {e}")))?;
        let missing: Vec<&str> = [("HD", m.hd.is_none()), ("MF", m.mf.is_none())]
            .into_iter()
            .filter_map(|(k, none)| none.then_some(k))
            .collect();
        if !missing.is_empty() {
            eprintln!(
                "warning: {name}: empty boundary, {} recorded as null and left out of the means",
                missing.join("/")
            );
        }
        rows.push(m);
    }
    let metrics = MetricsReport::from_images(rows);
    let report = EvalReport::new(&metrics, &opts.protocol);
    write_json(&opts.report, &report)?;

    if let Some(path) = &opts.csv {
        write_rows_csv(path, &report)?;
    }
    if let Some(path) = &opts.trimap {
        let mut w = csv_writer(path)?;
        let mut put = |rec: &[String]| w.write_record(rec).map_err(|e| output_err(path, e));
        put(&["width".into(), "error".into(), "band_size".into()])?;
        match &metrics.trimap {
            Some(curve) => {
                for i in 0..curve.widths.len() {
                    put(&[
                        curve.widths[i].to_string(),
                        curve.errors[i].to_string(),
                        curve.band_sizes[i].to_string(),
                    ])?;
                }
            }
            None => eprintln!("warning: no image has a ground-truth boundary; trimap curve is empty"),
        }
        w.flush().map_err(|e| output_err(path, e))?;
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| output_err(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut put = |rec: [String; 5]| w.write_record(&rec).map_err(|e| output_err(path, e));
    put(["name", "dice", "jaccard", "hd", "mf"].map(String::from))?;
    for r in &report.images {
        put([r.name.clone(), r.dice.to_string(), r.jaccard.to_string(), opt(r.hd), opt(r.mf)])?;
    }
    let m = &report.mean;
    put(["mean".into(), m.dice.to_string(), m.jaccard.to_string(), opt(m.hd), opt(m.mf)])?;
    w.flush().map_err(|e| output_err(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub iters: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub variant: HeadVariant,
    pub distance: DistanceMapKind,
    pub radius: ContourRadius,
    pub weights: LossWeights,
    pub learning_rate: f64,
}

impl DemoOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            iters: 500,
            seed: 0,
            out: out.into(),
            variant: HeadVariant::Mcd,
            distance: DistanceMapKind::D3,
            radius: ContourRadius::Auto,
            weights: LossWeights::default(),
            learning_rate: DEMO_LEARNING_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub iters: usize,
    pub seed: u64,
    pub variant: String,
    pub distance: String,
    pub radius: String,
    pub learning_rate: f64,
    pub images: usize,
    pub size: usize,
    pub parameters: usize,
    pub train_dice: f64,
}

pub const LOSS_CSV: &str = "loss.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Trains the toy network on synthetic shapes and writes:
///
/// - `loss.csv` with one row per epoch (row 0 is the untrained network),
/// - `images/`, `masks/` and `pred/` PNGs and `prob/` probability FMAPs,
/// - `params.json` + `params.fmap`,
/// - `summary.json`.
pub fn cmd_train_demo(opts: &DemoOptions) -> Result<DemoSummary, CliError> {
    if !(opts.learning_rate.is_finite() && opts.learning_rate >= 0.0) {
        return Err(CliError::Input(format!(
            "learning rate must be finite and >= 0, got {}",
            opts.learning_rate
        )));
    }
    let mut config = DemoConfig::default();
    config.train.epochs = opts.iters;
    config.train.seed = opts.seed;
    config.train.variant = opts.variant;
    config.train.weights = opts.weights;
    config.train.optimizer = Optimizer::adam(opts.learning_rate);
    config.distance = opts.distance;
    config.radius = opts.radius;
    let result = run_demo(&config).map_err(|e| match e {
        Error::DivergenceDetected { epoch } => CliError::Divergence { epoch },
        other => CliError::Input(other.to_string()),
    })?;

    let out = &opts.out;
    let dirs = ["images", "masks", "pred", "prob"].map(|d| out.join(d));
    for d in &dirs {
        create_dir(d)?;
    }
    let mut csv = String::from("epoch,total,mask,contour,distance\n");
    for r in &result.trace.records {
        csv += &format!(
            "{},{},{},{},{}\n",
            r.epoch, r.total, r.parts.mask, r.parts.contour, r.parts.distance
        );
    }
    write_text(&out.join(LOSS_CSV), &csv)?;

    for (i, s) in result.samples.iter().enumerate() {
        let name = format!("sample_{i}");
        let prob = predict_probability(&result.net, &s.image)
            .map_err(|e| CliError::Output(e.to_string()))?;
        let png = |dir: &PathBuf| dir.join(format!("{name}.png"));
        write_gray(&png(&dirs[0]), &s.image).map_err(|e| CliError::Output(e.to_string()))?;
        write_mask(&png(&dirs[1]), &s.targets.mask).map_err(|e| CliError::Output(e.to_string()))?;
        write_mask(&png(&dirs[2]), &prob.threshold(convmcd::metrics::PROBABILITY_THRESHOLD))
            .map_err(|e| CliError::Output(e.to_string()))?;
        let fpath = dirs[3].join(format!("{name}.fmap"));
        Fmap::from_grids(&[&prob])
            .and_then(|f| f.write_file(&fpath))
            .map_err(|e| output_err(&fpath, e))?;
    }
    write_snapshot(out, &result.net).map_err(|e| output_err(out, e))?;

    let summary = DemoSummary {
        iters: opts.iters,
        seed: opts.seed,
        variant: opts.variant.to_string(),
        distance: opts.distance.to_string(),
        radius: opts.radius.to_string(),
        learning_rate: opts.learning_rate,
        images: config.images,
        size: config.size,
        parameters: result.net.parameter_count(),
        train_dice: result.train_dice,
    };
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}

/// Runs every registered gradient check. `corrupt_conv` injects a wrong
/// conv2d backward pass, which must make the suite fail.
pub fn cmd_gradcheck(seed: u64, corrupt_conv: bool) -> GradcheckReport {
    gradcheck_with(seed, corrupt_conv.then_some(Fault::ConvBackward))
}

pub fn gradcheck_outcome(report: &GradcheckReport) -> Result<(), CliError> {
    if report.passed() {
        return Ok(());
    }
    Err(CliError::GradcheckFailed {
        failed: report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.to_string())
            .collect(),
    })
}

/// One line per check: name, max relative error, compared entries, verdict.
pub fn format_gradcheck(report: &GradcheckReport) -> String {
    let mut out = String::new();
    for c in &report.checks {
        out += &format!(
            "{:<20} {:>10.3e} {:>6} {}\n",
            c.name,
            c.max_rel_error,
            c.entries,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    out
}
