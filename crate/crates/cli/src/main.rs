//! Command-line front end for the band-selection pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iwgs_core::data::{generate_synthetic, load_labels, save_cube, save_labels};
use iwgs_core::experiment::{
    patch_sweep, robustness_sweep, run_pipeline, DataSource, RunOptions, RunRecord, Stage,
};
use iwgs_core::{Criterion, Error, ErrorKind, ExperimentConfig, Result, SplitSpec, SyntheticSpec};

#[derive(Parser, Debug)]
#[command(
    name = "iwgs",
    version,
    about = "Wavelet-domain greedy band selection for hyperspectral cubes"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recompute stages even when cached artifacts match.
    #[arg(long, global = true)]
    fresh: bool,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a default experiment config.
    InitConfig {
        /// Destination file.
        path: PathBuf,
    },
    /// Generate a synthetic cube and labels plus a config that reads them.
    GenSynth(SynthArgs),
    /// Split labeled pixels into train and test sets.
    Split(Overrides),
    /// Train the all-band classifier.
    Train(Overrides),
    /// Run greedy channel selection.
    Select(Overrides),
    /// Retrain on the selected channels and evaluate on clean test pixels.
    Eval(Overrides),
    /// Evaluate under noise plus PGD.
    Attack(Overrides),
    /// Every stage in order.
    Run(Overrides),
    /// One pipeline per patch size and a combined accuracy table.
    SweepPatch(Overrides),
    /// Attacked κ per patch size with undersampled training sets.
    SweepRobust(Overrides),
    /// Render a label map as an indexed-colour PNG.
    RenderMap {
        /// Label header (JSON).
        #[arg(long)]
        labels: PathBuf,
        /// Output PNG.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        palette_seed: Option<u64>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 4)]
    classes: u16,
    /// Comma-separated informative band indices.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10])]
    informative: Vec<usize>,
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CriterionArg {
    AbsMin,
    SignedMin,
    AbsMax,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::AbsMin => Criterion::AbsMin,
            CriterionArg::SignedMin => Criterion::SignedMin,
            CriterionArg::AbsMax => Criterion::AbsMax,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    patch_size: Option<usize>,
    /// Number of channels to select.
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Per-class training cap; also enables undersampling.
    #[arg(long)]
    quota: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(p) = self.patch_size {
            c.patch_size = Some(p);
        }
        if let Some(n) = self.ns {
            c.iwgs.num_bands = n;
        }
        if let Some(k) = self.criterion {
            c.iwgs.criterion = k.into();
        }
        if let Some(e) = self.epsilon {
            c.attack.epsilon = e;
        }
        if let Some(a) = self.alpha {
            c.attack.alpha = a;
        }
        if let Some(s) = self.steps {
            c.attack.steps = s;
        }
        if let Some(s) = self.noise_sigma {
            c.attack.noise_sigma = s;
        }
        if let Some(q) = self.quota {
            c.quota = q;
            c.undersample = true;
        }
    }
}

fn default_synthetic(args: &SynthArgs, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        height: args.height,
        width: args.width,
        bands: args.bands,
        num_classes: args.classes,
        informative_bands: args.informative.clone(),
        noise_sigma: args.noise,
        seed,
    }
}

/// Demonstration config: the default synthetic scene with training settings
/// that fit it and the signed first-order selection rule.
fn default_config() -> ExperimentConfig {
    let args = SynthArgs::default();
    let mut c = ExperimentConfig::synthetic(default_synthetic(&args, 0), 0);
    c.split = SplitSpec::uniform(50, 0);
    c.train.epochs = 200;
    c.train.learning_rate = 0.1;
    c.iwgs.criterion = Criterion::SignedMin;
    c.patch_sizes = vec![1, 3, 5];
    c
}

impl Default for SynthArgs {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            bands: 16,
            classes: 4,
            informative: vec![5, 10],
            noise: 0.03,
        }
    }
}

fn load_config(cli: &Cli, overrides: &Overrides) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn print_record(record: &RunRecord, dir: &Path) {
    println!("output: {}", dir.display());
    println!(
        "train/test pixels: {}/{}",
        record.train_pixels, record.test_pixels
    );
    if let Some(ch) = &record.selected_channels {
        println!("selected channels: {ch:?}");
    }
    for (label, eval) in [
        ("all bands", &record.full),
        ("selected", &record.selected),
        ("attacked", &record.attacked),
    ] {
        if let Some(e) = eval {
            println!(
                "{label:>9}: OA {:.2}%  AA {:.2}%  kappa {:.2}%",
                100.0 * e.report.overall_accuracy,
                100.0 * e.report.average_accuracy,
                100.0 * e.report.kappa
            );
        }
    }
}

fn pipeline(cli: &Cli, overrides: &Overrides, until: Stage) -> Result<()> {
    let config = load_config(cli, overrides)?;
    let options = RunOptions {
        output_dir: config.output_dir.clone(),
        until,
        fresh: cli.fresh,
    };
    let record = run_pipeline(&config, &options)?;
    print_record(&record, &options.output_dir);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::InitConfig { path } => {
            let mut config = default_config();
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(out) = &cli.out {
                config.output_dir = out.clone();
            }
            config.save(path)?;
            println!("wrote {}", path.display());
        }
        Command::GenSynth(args) => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let seed = cli.seed.unwrap_or(0);
            let spec = match &cli.config {
                Some(path) => match ExperimentConfig::load(path)?.resolved().data {
                    DataSource::Synthetic(spec) => spec,
                    DataSource::Files { .. } => {
                        return Err(Error::Config(
                            "config does not describe synthetic data".into(),
                        ))
                    }
                },
                None => default_synthetic(args, seed),
            };
            let (cube, labels) = generate_synthetic(&spec)?;
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            save_cube(&cube, dir.join("cube.hdr.json"))?;
            save_labels(&labels, dir.join("labels.hdr.json"))?;
            let mut config = default_config();
            config.data = DataSource::Files {
                cube: "cube.hdr.json".into(),
                labels: "labels.hdr.json".into(),
            };
            config.seed = seed;
            config.output_dir = PathBuf::from("runs");
            config.save(dir.join("experiment.json"))?;
            println!(
                "wrote cube.hdr.json, labels.hdr.json and experiment.json to {}",
                dir.display()
            );
        }
        Command::Split(o) => pipeline(cli, o, Stage::Split)?,
        Command::Train(o) => pipeline(cli, o, Stage::Train)?,
        Command::Select(o) => pipeline(cli, o, Stage::Select)?,
        Command::Eval(o) => pipeline(cli, o, Stage::Eval)?,
        Command::Attack(o) | Command::Run(o) => pipeline(cli, o, Stage::Attack)?,
        Command::SweepPatch(o) => {
            let config = load_config(cli, o)?;
            let sweep = patch_sweep(&config, &config.output_dir, cli.fresh)?;
            print!("{}", sweep.to_markdown());
        }
        Command::SweepRobust(o) => {
            let config = load_config(cli, o)?;
            let sweep = robustness_sweep(&config, &config.output_dir, cli.fresh)?;
            print!(
                "{}",
                iwgs_core::metrics::markdown_table(
                    &sweep.header(),
                    &[sweep.attacked_row(), sweep.clean_row()]
                )
            );
        }
        Command::RenderMap {
            labels,
            output,
            palette_seed,
        } => {
            let map = load_labels(labels)?;
            let seed = palette_seed.or(cli.seed).unwrap_or(0);
            iwgs_core::render_map(&map, seed, output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
