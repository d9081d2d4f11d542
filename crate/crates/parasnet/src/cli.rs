//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use parasnet_core::adam::AdamConfig;
use parasnet_core::augment::AugmentConfig;
use parasnet_core::baseline::{train_baseline, BaselineConfig};
use parasnet_core::checkpoint::Checkpoint;
use parasnet_core::eval::{evaluate, filter_sweep, per_class_accuracy, silhouette, ConfusionMatrix};
use parasnet_core::synth::{gen_split, Dataset, GenConfig, Split};
use parasnet_core::train::{fit, EpochStats, Observer, TrainConfig};
use parasnet_core::tsne::{tsne_embed, TsneConfig};
use parasnet_core::{Class, ParasNet};

use crate::bench::benchmark;
use crate::dataset::{read_dataset, read_splits, write_dataset, TEST_DIR, TRAIN_DIR};
use crate::parallel::Pool;
use crate::{report, store};

pub const OUT_DIR_ENV: &str = "PARASNET_OUT";

#[derive(Debug, Parser)]
#[command(name = "parasnet", version, about = "Parasite scattering-image classifier: CNN, SIFT baseline and evaluation")]
pub struct Cli {
    /// Worker threads (default: all logical CPUs; 1 forces fully serial runs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "parasnet-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (train/ and test/ trees of PGM files).
    Gen(GenArgs),
    /// Train ParasNet and write a checkpoint plus a per-epoch CSV.
    Train(TrainArgs),
    /// Confusion matrix of a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Train one model per filter count and tabulate the best test accuracy.
    Sweep(SweepArgs),
    /// t-SNE of the 128-unit hidden features of a checkpoint.
    Embed(EmbedArgs),
    /// Train the SIFT + bag-of-words + SVM + naive Bayes baseline.
    BaselineTrain(BaselineTrainArgs),
    /// Confusion matrix of a baseline model on a dataset split.
    BaselineEval(BaselineEvalArgs),
    /// Single-image inference throughput and latency.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl SplitArg {
    fn dir(self) -> &'static str {
        match self {
            SplitArg::Train => TRAIN_DIR,
            SplitArg::Test => TEST_DIR,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory [default: <out-dir>/data].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
    /// 5000 training and 1000 test images per class.
    #[arg(long, conflicts_with_all = ["train_per_class", "test_per_class"])]
    pub full_scale: bool,
    /// Render at 648x488 and area-downscale to the network input size.
    #[arg(long)]
    pub full_resolution: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Per-step multiplicative learning-rate decay (1 disables it).
    #[arg(long, default_value_t = 0.9999)]
    pub decay: f64,
    /// Train on the raw images without augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Stop after the first epoch reaching this test accuracy.
    #[arg(long)]
    pub target_accuracy: Option<f64>,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            augment: if self.no_augment {
                AugmentConfig::disabled()
            } else {
                AugmentConfig::default()
            },
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                decay: self.decay,
                ..AdamConfig::default()
            },
            seed: self.seed,
            target_accuracy: self.target_accuracy,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `gen` (holds train/ and test/).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub filters: usize,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Checkpoint path [default: <out-dir>/parasnet-f<F>.pnet].
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Training CSV path [default: <out-dir>/train-f<F>.csv].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Confusion CSV path [default: <out-dir>/confusion.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Ascending filter counts.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub filters: Vec<usize>,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Sweep CSV path [default: <out-dir>/sweep.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Embedding CSV path [default: <out-dir>/embedding.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineTrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Codebook size.
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Model path [default: <out-dir>/baseline.pbsl].
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Confusion CSV path [default: <out-dir>/baseline-confusion.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// ParasNet checkpoint to time.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Baseline model to time.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Dataset directory supplying the images.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Benchmark CSV path [default: <out-dir>/bench.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Prints per-epoch progress to stderr and supplies wall-clock time.
struct Progress {
    start: Instant,
    label: String,
}

impl Progress {
    fn new(label: impl Into<String>) -> Self {
        Self {
            start: Instant::now(),
            label: label.into(),
        }
    }
}

impl Observer for Progress {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn epoch_done(&mut self, s: &EpochStats) {
        eprintln!(
            "{} epoch {:>3}: loss {:.4}  test accuracy {:.4}  ({:.1}s)",
            self.label, s.epoch, s.train_loss, s.test_accuracy, s.seconds
        );
    }
}

fn require_dir(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_dir() {
        bail!("{}: {what} directory not found", path.display());
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{}: {what} not found", path.display());
    }
    Ok(())
}

fn or_default(path: &mut Option<PathBuf>, out_dir: &Path, name: &str) -> PathBuf {
    path.get_or_insert_with(|| out_dir.join(name)).clone()
}

fn print_confusion(cm: &ConfusionMatrix) {
    eprintln!("confusion (rows actual, columns predicted: others, crypto, giardia):");
    for c in Class::ALL {
        eprintln!("  {:<8} {:?}", c.name(), cm.counts[c.index()]);
    }
    if let Ok(acc) = per_class_accuracy(cm) {
        eprintln!(
            "accuracy: overall {:.4}, others {:.4}, crypto {:.4}, giardia {:.4}",
            cm.accuracy(),
            acc[0],
            acc[1],
            acc[2]
        );
    }
}

fn load_split(data: &Path, split: SplitArg, pool: &Pool) -> anyhow::Result<Dataset> {
    Ok(read_dataset(&data.join(split.dir()), pool)?)
}

/// Parses `args`, runs the subcommand, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> std::process::ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return std::process::ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let pool = Pool::new(cli.threads)?;
    let out_dir = cli.out_dir;
    eprintln!("threads={} out_dir={}", pool.threads(), out_dir.display());
    match cli.command {
        Command::Gen(mut a) => {
            let out = or_default(&mut a.out, &out_dir, "data");
            eprintln!("config: {a:?}");
            let mut cfg = if a.full_scale {
                GenConfig::full_scale()
            } else {
                GenConfig {
                    train_per_class: a.train_per_class,
                    test_per_class: a.test_per_class,
                    ..GenConfig::default()
                }
            };
            cfg.seed = a.seed;
            cfg.render_full_resolution = a.full_resolution;
            for (split, dir) in [(Split::Train, TRAIN_DIR), (Split::Test, TEST_DIR)] {
                let ds = gen_split(&cfg, split, &pool)?;
                write_dataset(&ds, &out.join(dir), dir, cfg.seed, &pool)?;
                eprintln!("wrote {} images to {}", ds.len(), out.join(dir).display());
            }
        }
        Command::Train(mut a) => {
            require_dir(&a.data, "dataset")?;
            let ckpt = or_default(&mut a.ckpt, &out_dir, &format!("parasnet-f{}.pnet", a.filters));
            let csv = or_default(&mut a.report, &out_dir, &format!("train-f{}.csv", a.filters));
            eprintln!("config: {a:?}");
            let cfg = a.opts.config();
            let (train, test) = read_splits(&a.data, &pool)?;
            let mut model = ParasNet::<f32>::build(a.filters, cfg.seed)?;
            eprintln!("model: F={} with {} parameters", a.filters, model.param_count());
            let report = fit(&mut model, &train, &test, &cfg, &pool, &mut Progress::new("train"))?;
            let metadata = format!(
                "filters={} seed={} epochs={} final_loss={} max_test_accuracy={}",
                a.filters,
                cfg.seed,
                report.epochs.len(),
                report.final_loss(),
                report.max_test_accuracy()
            );
            store::save_checkpoint(&ckpt, &Checkpoint { model, metadata })?;
            report::write_csv(&csv, report::training_csv(&report))?;
            print_confusion(&report.confusion);
            eprintln!("wrote {} and {}", ckpt.display(), csv.display());
        }
        Command::Eval(mut a) => {
            require_file(&a.ckpt, "checkpoint")?;
            require_dir(&a.data, "dataset")?;
            let out = or_default(&mut a.out, &out_dir, "confusion.csv");
            eprintln!("config: {a:?}");
            let ckpt = store::load_checkpoint(&a.ckpt)?;
            let data = load_split(&a.data, a.split, &pool)?;
            let cm = evaluate(&ckpt.model, &data, a.batch_size, &pool)?;
            report::write_csv(&out, report::confusion_csv(&cm))?;
            print_confusion(&cm);
            eprintln!("wrote {}", out.display());
        }
        Command::Sweep(mut a) => {
            require_dir(&a.data, "dataset")?;
            let out = or_default(&mut a.out, &out_dir, "sweep.csv");
            eprintln!("config: {a:?}");
            let cfg = a.opts.config();
            let (train, test) = read_splits(&a.data, &pool)?;
            let runs = filter_sweep(&a.filters, &train, &test, &cfg, &pool, &mut Progress::new("sweep"))?;
            let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
            for r in &rows {
                eprintln!("F={:<3} params={:<7} max test accuracy {:.4}", r.filters, r.params, r.max_test_accuracy);
            }
            report::write_csv(&out, report::sweep_csv(&rows))?;
            eprintln!("wrote {}", out.display());
        }
        Command::Embed(mut a) => {
            require_file(&a.ckpt, "checkpoint")?;
            require_dir(&a.data, "dataset")?;
            let out = or_default(&mut a.out, &out_dir, "embedding.csv");
            eprintln!("config: {a:?}");
            let ckpt = store::load_checkpoint(&a.ckpt)?;
            let data = load_split(&a.data, a.split, &pool)?;
            let features = hidden_features(&ckpt.model, &data, &pool)?;
            let cfg = TsneConfig {
                perplexity: a.perplexity,
                iterations: a.iterations,
                seed: a.seed,
                ..TsneConfig::default()
            };
            let result = tsne_embed(&features, &cfg)?;
            let labels: Vec<Class> = data.samples.iter().map(|s| s.label).collect();
            let points: Vec<Vec<f64>> = result.coords.iter().map(|p| p.to_vec()).collect();
            let idx: Vec<usize> = labels.iter().map(|c| c.index()).collect();
            eprintln!(
                "t-SNE: {} points, KL {:.4}, silhouette {:.4}",
                points.len(),
                result.kl,
                silhouette(&points, &idx)?
            );
            report::write_csv(&out, report::embedding_csv(&result.coords, &labels))?;
            eprintln!("wrote {}", out.display());
        }
        Command::BaselineTrain(mut a) => {
            require_dir(&a.data, "dataset")?;
            let path = or_default(&mut a.model, &out_dir, "baseline.pbsl");
            eprintln!("config: {a:?}");
            let train = load_split(&a.data, SplitArg::Train, &pool)?;
            let cfg = BaselineConfig {
                codebook_size: a.k,
                seed: a.seed,
                ..BaselineConfig::default()
            };
            let trained = train_baseline(&train, &cfg, &pool)?;
            eprintln!(
                "baseline: {} descriptors, {} image(s) without keypoints",
                trained.descriptors, trained.zero_keypoint_images
            );
            store::save_baseline(&path, &trained.model)?;
            eprintln!("wrote {}", path.display());
        }
        Command::BaselineEval(mut a) => {
            require_file(&a.model, "baseline model")?;
            require_dir(&a.data, "dataset")?;
            let out = or_default(&mut a.out, &out_dir, "baseline-confusion.csv");
            eprintln!("config: {a:?}");
            let model = store::load_baseline(&a.model)?;
            let data = load_split(&a.data, a.split, &pool)?;
            let cm = evaluate(&model, &data, 32, &pool)?;
            report::write_csv(&out, report::confusion_csv(&cm))?;
            print_confusion(&cm);
            eprintln!("wrote {}", out.display());
        }
        Command::Bench(mut a) => {
            if a.ckpt.is_none() && a.baseline.is_none() {
                bail!("bench needs --ckpt, --baseline, or both");
            }
            for p in a.ckpt.iter().chain(&a.baseline) {
                require_file(p, "model file")?;
            }
            require_dir(&a.data, "dataset")?;
            let out = or_default(&mut a.out, &out_dir, "bench.csv");
            eprintln!("config: {a:?}");
            let images: Vec<_> = load_split(&a.data, a.split, &pool)?
                .samples
                .into_iter()
                .map(|s| s.pixels)
                .collect();
            let mut reports = Vec::new();
            if let Some(p) = &a.ckpt {
                let ckpt = store::load_checkpoint(p)?;
                let name = format!("parasnet-f{}", ckpt.model.filters());
                reports.push(benchmark(&name, &ckpt.model, &images, a.warmup, a.iters)?);
            }
            if let Some(p) = &a.baseline {
                let model = store::load_baseline(p)?;
                reports.push(benchmark("baseline", &model, &images, a.warmup, a.iters)?);
            }
            for r in &reports {
                eprintln!(
                    "{}: {:.1} images/s, p50 {:.2} ms, p90 {:.2} ms, p99 {:.2} ms",
                    r.model, r.stats.fps, r.stats.p50_ms, r.stats.p90_ms, r.stats.p99_ms
                );
            }
            if let [cnn, base] = reports.as_slice() {
                eprintln!("speed ratio (cnn / baseline): {:.1}x", cnn.stats.fps / base.stats.fps);
            }
            report::write_csv(&out, report::bench_csv(&reports))?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

/// 128-d pre-dropout hidden activations in inference mode.
pub fn hidden_features(model: &ParasNet<f32>, data: &Dataset, pool: &Pool) -> anyhow::Result<Vec<Vec<f64>>> {
    use parasnet_core::exec::Executor;
    pool.map(data.len(), |i| {
        model
            .infer(&data.samples[i].pixels)
            .map(|o| o.hidden.data().iter().map(|&v| v as f64).collect())
    })
    .into_iter()
    .collect::<Result<_, _>>()
    .context("feature extraction failed")
}
