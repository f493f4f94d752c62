use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddf2pol::evaluation::render_map;
use ddf2pol::model::{count_flops_macs, ModelConfig, ModelParams};
use ddf2pol::pipeline::{self, EvalSet, RunManifest};
use ddf2pol::polsar::{render_pauli, write_packed};
use ddf2pol::synth::{sample_scene, SceneSpec};
use ddf2pol::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Dual-domain PolSAR land-cover classifier.
#[derive(Parser)]
#[command(name = "ddf2pol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic scene (packed raster + label map).
    Synth {
        /// Scene spec (TOML); the built-in 3-class scene when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        /// Override the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load data, draw the stratified split, fit normalization.
    Prepare(RunArgs),
    /// Prepare and train; writes checkpoint, history and normalization.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Print the parameter ledger and exit without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score a checkpoint on labeled pixels.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint (default: <out>/model.ddf2pol).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Pixels to score.
        #[arg(long, value_enum, default_value = "test")]
        on: OnSet,
    },
    /// Classify every pixel and render the class map.
    Map {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output image (default: <out>/map.png).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parameter ledger and FLOPs/MACs for one patch.
    Complexity {
        #[arg(long, default_value_t = ddf2pol::model::DEFAULT_PATCH)]
        patch: usize,
        #[arg(long, default_value_t = 15)]
        classes: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnSet {
    Train,
    Test,
    All,
}

/// Run settings; flags override the manifest.
#[derive(Args)]
struct RunArgs {
    /// Run manifest (TOML).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Coherency raster: packed file or t3 directory.
    #[arg(long)]
    raster: Option<PathBuf>,
    /// Label map: 8-bit PNG or raw grid.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory [default: run].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of classes [default: largest label id].
    #[arg(long)]
    classes: Option<usize>,
    /// Patch side, odd [default: 15].
    #[arg(long)]
    patch: Option<usize>,
    /// Fraction of labeled pixels used for training [default: 0.01].
    #[arg(long)]
    fraction: Option<f64>,
    /// Seed for the split, initialization and shuffling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 128].
    #[arg(long)]
    batch: Option<usize>,
    /// Epoch limit [default: 100].
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 10].
    #[arg(long)]
    patience: Option<usize>,
}

impl RunArgs {
    fn manifest(&self) -> Result<RunManifest> {
        let mut m = match &self.manifest {
            Some(path) => RunManifest::load(path)?,
            None => RunManifest::default(),
        };
        if let Some(v) = &self.raster {
            m.raster = Some(v.clone());
        }
        if let Some(v) = &self.labels {
            m.labels = Some(v.clone());
        }
        if let Some(v) = &self.out {
            m.out = v.clone();
        }
        if let Some(v) = self.classes {
            m.num_classes = Some(v);
        }
        m.patch = self.patch.unwrap_or(m.patch);
        m.fraction = self.fraction.unwrap_or(m.fraction);
        m.seed = self.seed.unwrap_or(m.seed);
        m.train.learning_rate = self.lr.unwrap_or(m.train.learning_rate);
        m.train.batch_size = self.batch.unwrap_or(m.train.batch_size);
        m.train.max_epochs = self.epochs.unwrap_or(m.train.max_epochs);
        m.train.patience = self.patience.unwrap_or(m.train.patience);
        if m.patch % 2 == 0 || m.patch < 5 {
            return Err(Error::Usage(format!("patch must be odd and at least 5, got {}", m.patch)));
        }
        Ok(m)
    }
}

fn synth(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec {
        Some(p) => SceneSpec::load(p)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (raster, labels) = sample_scene(&spec)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    let write = |name: &str, text: String| {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    };
    write_packed(&raster, &out.join("scene.polt3"))?;
    labels.save_png(&out.join("labels.png"))?;
    render_pauli(&raster, &out.join("pauli.png"))?;
    write("scene.toml", spec.to_toml())?;
    let manifest = RunManifest {
        raster: Some("scene.polt3".into()),
        labels: Some("labels.png".into()),
        out: "run".into(),
        num_classes: Some(spec.classes.len()),
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        ..RunManifest::default()
    };
    write("manifest.toml", manifest.to_toml())?;
    println!("wrote {}x{} scene with {} classes to {}", spec.height, spec.width, spec.classes.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, seed } => synth(spec.as_deref(), &out, seed),
        Command::Prepare(args) => {
            let m = args.manifest()?;
            let p = pipeline::run_prepare(&m)?;
            println!(
                "{} classes, {} per class, {} train / {} test pixels; outputs in {}",
                p.num_classes,
                p.split.per_class,
                p.split.train.len(),
                p.split.test.len(),
                m.out.display()
            );
            Ok(())
        }
        Command::Train { run, dry_run } => {
            let m = run.manifest()?;
            if dry_run {
                let k = m.num_classes.ok_or_else(|| {
                    Error::Usage("--dry-run needs the class count (--classes or manifest num_classes)".into())
                })?;
                let params = ModelParams::zeros(ModelConfig::new(m.patch, k)?);
                println!("{}", params.ledger());
                return Ok(());
            }
            let r = pipeline::run_train(&m)?;
            let last = r.history.records.last().map_or(0.0, |e| e.accuracy);
            let best = r.history.best_record().map_or(0.0, |e| e.accuracy);
            println!(
                "trained {} epochs (best epoch {}), final train accuracy {:.2}%, best-epoch train accuracy {:.2}%",
                r.history.records.len(),
                r.history.best_epoch.map_or("-".into(), |e| e.to_string()),
                100.0 * last,
                100.0 * best
            );
            println!("checkpoint: {}", m.out.join(pipeline::CHECKPOINT_FILE).display());
            Ok(())
        }
        Command::Eval { run, checkpoint, on } => {
            let m = run.manifest()?;
            let ckpt = checkpoint.unwrap_or_else(|| m.out.join(pipeline::CHECKPOINT_FILE));
            let on = match on {
                OnSet::Train => EvalSet::Train,
                OnSet::Test => EvalSet::Test,
                OnSet::All => EvalSet::All,
            };
            let r = pipeline::run_eval(&m, &ckpt, on)?;
            print!("{}", std::fs::read_to_string(m.out.join(pipeline::METRICS_FILE)).unwrap_or_default());
            render_map(
                &r.map,
                &ddf2pol::evaluation::Palette::for_classes(r.metrics.per_class.len()),
                &m.out.join(pipeline::MAP_FILE),
            )
        }
        Command::Map { run, checkpoint, output } => {
            let m = run.manifest()?;
            let ckpt = checkpoint.unwrap_or_else(|| m.out.join(pipeline::CHECKPOINT_FILE));
            let output = output.unwrap_or_else(|| m.out.join(pipeline::MAP_FILE));
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            let map = pipeline::run_map(&m, &ckpt, &output)?;
            println!("wrote {}x{} map to {}", map.height, map.width, output.display());
            Ok(())
        }
        Command::Complexity { patch, classes } => {
            let config = ModelConfig::new(patch, classes)?;
            println!("parameters (patch {patch}, {classes} classes)");
            println!("{}", ModelParams::zeros(config).ledger());
            println!();
            println!("{}", count_flops_macs(&config));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
