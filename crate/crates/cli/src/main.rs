//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error (including bad flags),
//! 3 data, shape, format or i/o error, 4 numerical abort during training.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgcn_agl::data_io::{save_dataset, synth_hsi, ClassLayout, SynthConfig};
use mgcn_agl::evaluation::EvalReport;
use mgcn_agl::pipeline::{
    run_eval, run_seeds, run_sweep, run_train, sweep_table, EvalLevel, EvalOptions, RunConfig,
    SweepKind,
};
use mgcn_agl::training::Selection;
use mgcn_agl::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "mgcn-agl",
    version,
    about = "Superpixel graph classification of multiband images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled cube.
    Synth(SynthArgs),
    /// Segment, train, and evaluate on the held-out regions.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(EvalArgs),
    /// Repeat training over a list of label counts or hop sizes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long = "h", alias = "height", default_value_t = 40)]
    height: usize,
    #[arg(long = "w", alias = "width", default_value_t = 40)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    bands: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// blocks, stripes or split_pairs
    #[arg(long, default_value = "blocks")]
    layout: String,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by `train` and `sweep`. Flags override the config file.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    compactness: Option<f64>,
    #[arg(long)]
    slic_iters: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    s1: Option<usize>,
    #[arg(long)]
    s2: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// `--global-enabled=false` runs the local-only model.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    global_enabled: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize_adjacency: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    mean_reconstruction: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    standardize_features: Option<bool>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    fallback: Option<usize>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    val_interval: Option<usize>,
    /// best_validation or final
    #[arg(long)]
    selection: Option<String>,
    /// pixel or region
    #[arg(long)]
    eval_level: Option<String>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write only the classification map.
    #[arg(long)]
    render_only: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// labels or s2
    #[arg(long)]
    kind: String,
    /// Comma-separated values; defaults to 5,10,...,30 for labels and 2..5
    /// for s2.
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_enum<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("invalid value `{value}` for --{flag}")))
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            c.data_dir = v.clone();
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.regions {
            c.segmentation.n_regions = Some(v);
        }
        if let Some(v) = self.compactness {
            c.segmentation.compactness = v;
        }
        if let Some(v) = self.slic_iters {
            c.segmentation.max_iters = v;
        }
        if let Some(v) = self.hidden {
            c.model.hidden = v;
        }
        if let Some(v) = self.s1 {
            c.model.hops[0] = v;
        }
        if let Some(v) = self.s2 {
            c.model.hops[1] = v;
        }
        if let Some(v) = self.beta {
            c.model.beta = v;
        }
        if let Some(v) = self.global_enabled {
            c.model.global_enabled = v;
        }
        if let Some(v) = self.normalize_adjacency {
            c.model.normalize_adjacency = v;
        }
        if let Some(v) = self.mean_reconstruction {
            c.model.mean_reconstruction = v;
        }
        if let Some(v) = self.standardize_features {
            c.standardize_features = v;
        }
        if let Some(v) = self.iterations {
            c.train.iterations = v;
        }
        if let Some(v) = self.lr {
            c.train.learning_rate = v;
        }
        if let Some(v) = self.seed {
            c.train.seed = v;
        }
        if let Some(v) = self.per_class {
            c.train.per_class_labels = v;
        }
        if let Some(v) = self.fallback {
            c.train.fallback_labels = v;
        }
        if let Some(v) = self.val_fraction {
            c.train.val_fraction = v;
        }
        if let Some(v) = self.val_interval {
            c.train.val_interval = v;
        }
        if let Some(v) = &self.selection {
            c.train.selection = parse_enum::<Selection>("selection", v)?;
        }
        if let Some(v) = &self.eval_level {
            c.eval_level = parse_enum::<EvalLevel>("eval-level", v)?;
        }
        if self.seeds == 0 {
            return Err(Error::Config("--seeds must be >= 1".into()));
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label}OA {:.4}  AA {:.4}  kappa {:.4}  ({} samples)",
        r.overall_accuracy, r.average_accuracy, r.kappa, r.n_eval
    );
}

fn synth(a: &SynthArgs) -> Result<(), Error> {
    let layout: ClassLayout = a.layout.parse()?;
    let cfg = SynthConfig {
        height: a.height,
        width: a.width,
        bands: a.bands,
        n_classes: a.classes,
        layout,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let (image, gt) = synth_hsi(&cfg)?;
    save_dataset(&a.out, &image, &gt)?;
    println!(
        "wrote {}x{}x{} cube with {} classes to {}",
        image.height(),
        image.width(),
        image.bands(),
        gt.n_classes(),
        a.out.display()
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<(), Error> {
    let cfg = a.run.resolve()?;
    if a.run.seeds == 1 {
        let outcome = run_train(&cfg)?;
        let variant = outcome.prepared.model.variant_name();
        print_report(&format!("{variant}: "), &outcome.assessment.report);
        println!("outputs in {}", cfg.output_dir.display());
    } else {
        let s = run_seeds(&cfg, a.run.seeds)?;
        for (seed, r) in &s.runs {
            print_report(&format!("seed {seed}: "), r);
        }
        println!(
            "mean over {} seeds: OA {:.4} ± {:.4}  AA {:.4} ± {:.4}  kappa {:.4} ± {:.4}",
            s.runs.len(),
            s.oa.0,
            s.oa.1,
            s.aa.0,
            s.aa.1,
            s.kappa.0,
            s.kappa.1
        );
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), Error> {
    let opts = EvalOptions {
        data_dir: a.data.clone(),
        output_dir: a.out.clone(),
        render_only: a.render_only,
    };
    match run_eval(&a.checkpoint, &opts)? {
        Some(r) => print_report("", &r),
        None => println!("map written to {}", a.out.display()),
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<(), Error> {
    let kind: SweepKind = a.kind.parse()?;
    let values = if a.values.is_empty() {
        kind.default_values()
    } else {
        a.values.clone()
    };
    let cfg = a.run.resolve()?;
    let rows = run_sweep(&cfg, kind, &values, a.run.seeds)?;
    print!("{}", sweep_table(kind, &rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
