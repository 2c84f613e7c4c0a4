use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{EvalLevel, RunConfig};
use crate::data_io::{
    load_checkpoint, load_dataset, save_checkpoint, Checkpoint, GroundTruth, HyperspectralImage,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, pixel_eval_pairs, pixel_expand, render_map, EvalReport, Palette,
};
use crate::model::{ModelConfig, ModelParams};
use crate::segmentation::{
    region_features, region_labels, slic_segment, RegionGraph, SegmentationMap,
};
use crate::training::{
    predict, select_labels, split_train_val, train, LabelSplit, TrainGraph, TrainHistory,
};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const MAP_FILE: &str = "map.ppm";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Data, segmentation, graph and label split of one run.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// The resolved configuration.
    pub config: RunConfig,
    pub image: HyperspectralImage,
    pub gt: GroundTruth,
    pub seg: SegmentationMap,
    pub regions: RegionGraph,
    pub region_classes: Vec<u16>,
    pub graph: TrainGraph,
    pub split: LabelSplit,
    pub model: ModelConfig,
}

/// Reads the dataset named by `cfg` and prepares it.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (image, gt) = load_dataset(&cfg.data_dir)?;
    prepare_with(cfg, image, gt)
}

/// Segments, builds region features and graphs, and draws the label split.
pub fn prepare_with(
    cfg: &RunConfig,
    image: HyperspectralImage,
    gt: GroundTruth,
) -> Result<Prepared> {
    cfg.validate()?;
    gt.validate_for(&image)?;
    let n_classes = gt.n_classes();
    if n_classes < 2 {
        return Err(Error::Data(format!(
            "ground truth has {n_classes} classes, need at least 2"
        )));
    }
    let config = cfg.resolve(image.height(), image.width(), n_classes);
    let s = &config.segmentation;
    let n_regions = s.n_regions.expect("resolved");
    let seg = slic_segment(&image, n_regions, s.compactness, s.max_iters)?;
    let regions = if config.standardize_features {
        region_features(&image.standardized(), &seg)?
    } else {
        region_features(&image, &seg)?
    };
    let region_classes = region_labels(&seg, &gt)?;
    let model = config.model.to_model_config(n_classes, image.bands());
    model.validate()?;
    let graph = TrainGraph::from_regions(&regions, model.hops)?;
    let t = &config.train;
    let selected = select_labels(
        &region_classes,
        n_classes,
        t.per_class_labels,
        t.fallback_labels,
        t.seed,
    )?;
    let split = split_train_val(&selected, t.val_fraction, t.seed)?;
    Ok(Prepared {
        config,
        image,
        gt,
        seg,
        regions,
        region_classes,
        graph,
        split,
        model,
    })
}

/// Predictions of trained parameters and their test report.
#[derive(Clone, Debug)]
pub struct Assessment {
    pub predictions: Vec<u16>,
    pub map: GroundTruth,
    pub report: EvalReport,
}

pub fn assess(prep: &Prepared, params: &ModelParams) -> Result<Assessment> {
    let predictions = predict(params, &prep.graph, &prep.model)?;
    let map = pixel_expand(&predictions, &prep.seg)?;
    let pairs = match prep.config.eval_level {
        EvalLevel::Pixel => {
            pixel_eval_pairs(&prep.seg, &prep.gt, &predictions, &prep.split.test_ids)?
        }
        EvalLevel::Region => prep
            .split
            .test_ids
            .iter()
            .map(|&r| (prep.region_classes[r], predictions[r]))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(Error::Data(
            "no test samples remain after label selection".into(),
        ));
    }
    let report = evaluate(pairs, prep.model.n_classes)?;
    Ok(Assessment {
        predictions,
        map,
        report,
    })
}

/// Everything a training run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub params: ModelParams,
    pub history: TrainHistory,
    pub assessment: Assessment,
}

/// Trains and assesses without touching the file system.
pub fn fit(prep: Prepared) -> Result<RunOutcome> {
    let (params, history) = train(&prep.graph, &prep.split, &prep.model, &prep.config.train)?;
    let assessment = assess(&prep, &params)?;
    Ok(RunOutcome {
        prepared: prep,
        params,
        history,
        assessment,
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn report_text(prep: &Prepared, report: &EvalReport, selected_iteration: u64) -> String {
    let c = &prep.config;
    report.to_text(&[
        ("model", prep.model.variant_name().to_string()),
        ("seed", c.train.seed.to_string()),
        ("regions", prep.seg.n_regions().to_string()),
        ("train_regions", prep.split.train_ids.len().to_string()),
        ("val_regions", prep.split.val_ids.len().to_string()),
        ("test_regions", prep.split.test_ids.len().to_string()),
        ("selected_iteration", selected_iteration.to_string()),
        (
            "eval_level",
            match c.eval_level {
                EvalLevel::Pixel => "pixel",
                EvalLevel::Region => "region",
            }
            .to_string(),
        ),
    ])
}

/// Full training run: prepares the data, writes the resolved configuration,
/// trains, and writes the checkpoint, history, test report and map into the
/// output directory.
pub fn run_train(cfg: &RunConfig) -> Result<RunOutcome> {
    let prep = prepare(cfg)?;
    let out = prep.config.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(&out.join(RUN_CONFIG_FILE), prep.config.to_json())?;

    let outcome = fit(prep)?;
    let prep = &outcome.prepared;
    let selected = outcome.history.selected_iteration as u64;
    let ckpt = Checkpoint::new(selected, prep.config.to_json(), outcome.params.to_named());
    save_checkpoint(&ckpt, &out.join(CHECKPOINT_FILE))?;
    write(&out.join(HISTORY_FILE), outcome.history.to_csv())?;
    write(
        &out.join(REPORT_FILE),
        report_text(prep, &outcome.assessment.report, selected),
    )?;
    render_map(
        &outcome.assessment.map,
        &Palette::for_classes(prep.model.n_classes),
        &out.join(MAP_FILE),
    )?;
    Ok(outcome)
}

/// Options of [`run_eval`].
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Dataset to evaluate on instead of the one recorded in the checkpoint.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Write only the map.
    pub render_only: bool,
}

/// Predicts with a saved checkpoint, reusing the configuration stored in it.
/// Returns the test report unless only the map was requested.
pub fn run_eval(checkpoint: &Path, opts: &EvalOptions) -> Result<Option<EvalReport>> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut cfg = RunConfig::from_json(&ckpt.config_json, checkpoint)?;
    if let Some(d) = &opts.data_dir {
        cfg.data_dir = d.clone();
    }
    cfg.output_dir = opts.output_dir.clone();
    let prep = prepare(&cfg)?;
    let params = ModelParams::from_checkpoint(&ckpt, &prep.model)?;
    let assessment = assess(&prep, &params)?;
    let out = &opts.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    render_map(
        &assessment.map,
        &Palette::for_classes(prep.model.n_classes),
        &out.join(MAP_FILE),
    )?;
    if opts.render_only {
        return Ok(None);
    }
    write(
        &out.join(REPORT_FILE),
        report_text(&prep, &assessment.report, ckpt.iteration),
    )?;
    Ok(Some(assessment.report))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed results and their aggregate.
#[derive(Clone, Debug)]
pub struct SeedSummary {
    pub runs: Vec<(u64, EvalReport)>,
    pub oa: (f64, f64),
    pub aa: (f64, f64),
    pub kappa: (f64, f64),
}

impl SeedSummary {
    fn new(runs: Vec<(u64, EvalReport)>) -> Self {
        let pick = |f: fn(&EvalReport) -> f64| {
            mean_std(&runs.iter().map(|(_, r)| f(r)).collect::<Vec<_>>())
        };
        Self {
            oa: pick(|r| r.overall_accuracy),
            aa: pick(|r| r.average_accuracy),
            kappa: pick(|r| r.kappa),
            runs,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "runs = {}", self.runs.len());
        for (name, (m, s)) in [
            ("overall_accuracy", self.oa),
            ("average_accuracy", self.aa),
            ("kappa", self.kappa),
        ] {
            let _ = writeln!(out, "{name}_mean = {m}");
            let _ = writeln!(out, "{name}_std = {s}");
        }
        out.push_str("seed,overall_accuracy,average_accuracy,kappa\n");
        for (seed, r) in &self.runs {
            let _ = writeln!(
                out,
                "{seed},{},{},{}",
                r.overall_accuracy, r.average_accuracy, r.kappa
            );
        }
        out
    }
}

/// Runs seeds `seed, seed + 1, ...` of `cfg`, each in its own `seed_<k>`
/// subdirectory, and writes a summary with means and standard deviations.
pub fn run_seeds(cfg: &RunConfig, n_seeds: usize) -> Result<SeedSummary> {
    if n_seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let base = cfg.train.seed;
    let mut runs = Vec::with_capacity(n_seeds);
    for k in 0..n_seeds as u64 {
        let mut c = cfg.clone();
        c.train.seed = base + k;
        c.output_dir = cfg.output_dir.join(format!("seed_{}", base + k));
        let outcome = run_train(&c)?;
        runs.push((c.train.seed, outcome.assessment.report));
    }
    let summary = SeedSummary::new(runs);
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    write(&cfg.output_dir.join(SUMMARY_FILE), summary.to_text())?;
    Ok(summary)
}

/// Quantity varied by [`run_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    /// Labeled regions per class.
    Labels,
    /// Hop count of the wider branch, with the narrow branch fixed at 1.
    S2,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Labels => "labels",
            SweepKind::S2 => "s2",
        }
    }

    /// The values swept when none are given.
    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepKind::Labels => vec![5, 10, 15, 20, 25, 30],
            SweepKind::S2 => vec![2, 3, 4, 5],
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(SweepKind::Labels),
            "s2" => Ok(SweepKind::S2),
            other => Err(Error::Config(format!(
                "unknown sweep `{other}` (expected labels or s2)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: usize,
    pub summary: SeedSummary,
}

pub fn sweep_table(kind: SweepKind, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{},runs,overall_accuracy_mean,overall_accuracy_std,average_accuracy_mean,kappa_mean\n",
        kind.name()
    );
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.value,
            s.runs.len(),
            s.oa.0,
            s.oa.1,
            s.aa.0,
            s.kappa.0
        );
    }
    out
}

/// Repeats training over `values` of one setting and writes a
/// comma-separated table. The region count is resolved once from the base
/// configuration so every value sees the same segmentation.
pub fn run_sweep(
    cfg: &RunConfig,
    kind: SweepKind,
    values: &[usize],
    n_seeds: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    let (image, gt) = load_dataset(&cfg.data_dir)?;
    let base = cfg.resolve(image.height(), image.width(), gt.n_classes());
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = base.clone();
        match kind {
            SweepKind::Labels => {
                if v == 0 {
                    return Err(Error::Config("labels per class must be >= 1".into()));
                }
                c.train.per_class_labels = v;
                c.train.fallback_labels = c.train.fallback_labels.min(v);
            }
            SweepKind::S2 => c.model.hops = [1, v],
        }
        c.output_dir = cfg.output_dir.join(format!("{}_{v}", kind.name()));
        c.validate()?;
        rows.push(SweepRow {
            value: v,
            summary: run_seeds(&c, n_seeds)?,
        });
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    write(&cfg.output_dir.join(SWEEP_FILE), sweep_table(kind, &rows))?;
    Ok(rows)
}
