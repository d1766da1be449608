//! `paintnt`: synthetic data, training, evaluation, relevance maps and cost
//! accounting for the video pain-estimation transformer.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use pain_tnt::accounting::count_flops;
use pain_tnt::bench::{bench_inference, stride_table_csv};
use pain_tnt::checkpoint;
use pain_tnt::config::RunConfig;
use pain_tnt::data::{
    generate_synthetic, load_frame_directory, load_video, save_dataset, DatasetManifest, SynthConfig, Task,
    MANIFEST_FILE,
};
use pain_tnt::eval::{compute_metrics, run_task, ConfusionMatrix, FoldReport, MetricsReport};
use pain_tnt::interpret::{export_map_image, relevance_maps, RelevanceMap};
use pain_tnt::model::PainModel;
use pain_tnt::train::fit;

#[derive(Parser)]
#[command(name = "paintnt", version, about = "Transformer video pain estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic blob-intensity video dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Leave-one-subject-out cross-validation.
    Loso(LosoArgs),
    /// Accuracy and runtime for several frame strides.
    SweepStride(SweepArgs),
    /// Relevance map of one video for one class.
    Relevance(RelevanceArgs),
    /// Parameter and FLOP counts for a configuration.
    Count(CountArgs),
    /// Inference runtime of full-length videos.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mc")]
    task: Task,
    /// Run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Subjects held out as a validation set, e.g. `4,5`.
    #[arg(long, value_delimiter = ',')]
    val_subjects: Vec<usize>,
    /// Per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mc")]
    task: Task,
}

#[derive(Args)]
struct LosoArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mc")]
    task: Task,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mc")]
    task: Task,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    strides: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RelevanceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory of `.ppm` frames.
    #[arg(long)]
    video: PathBuf,
    #[arg(long = "class")]
    class: usize,
    /// Graymap path; per-frame maps get a `_fNNNNN` suffix.
    #[arg(long)]
    out: PathBuf,
    /// One map per frame instead of the mean over frames.
    #[arg(long)]
    per_frame: bool,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 138)]
    frames: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mc")]
    task: Task,
    #[arg(long, default_value_t = 20)]
    runs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Loso(a) => loso(a),
        Command::SweepStride(a) => sweep(a),
        Command::Relevance(a) => relevance(a),
        Command::Count(a) => count(a),
        Command::Bench(a) => bench(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn load_data(dir: &Path) -> Result<DatasetManifest> {
    let manifest = load_frame_directory(dir, &dir.join(MANIFEST_FILE))?;
    ensure!(!manifest.is_empty(), "dataset {} has no videos", dir.display());
    Ok(manifest)
}

/// Checkpoint plus the dataset prepared for `task`, after checking that the
/// classifier width matches the task.
fn load_model_and_data(ckpt: &Path, data: &Path, task: Task) -> Result<(PainModel, DatasetManifest)> {
    let (_, model) = checkpoint::load(ckpt)?;
    ensure!(
        model.num_classes() == task.num_classes(),
        "checkpoint predicts {} classes but task {task} has {}",
        model.num_classes(),
        task.num_classes()
    );
    Ok((model, task.prepare(&load_data(data)?)?))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        subjects: a.subjects,
        per_class: a.per_class,
        frames: a.frames,
        size: a.size,
        ..SynthConfig::default()
    };
    ensure!(
        cfg.subjects > 0 && cfg.per_class > 0,
        "subjects and per-class counts must be positive"
    );
    ensure!(cfg.frames > 0 && cfg.size > 0, "frame count and size must be positive");
    let manifest = generate_synthetic(&cfg);
    save_dataset(&manifest, &a.out)?;
    println!("wrote {} videos to {}", manifest.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?.for_task(a.task);
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let data = a.task.prepare(&load_data(&a.data)?)?;
    let train = data.filter_subjects(&a.val_subjects, false);
    let val = data.filter_subjects(&a.val_subjects, true);
    ensure!(
        !train.is_empty(),
        "no training videos left after holding out {:?}",
        a.val_subjects
    );
    if let Some(s) = train
        .iter()
        .find(|s| s.frame_size() != (cfg.spatial.image_size, cfg.spatial.image_size))
    {
        bail!(
            "frames are {:?} but the configuration expects {}x{}",
            s.frame_size(),
            cfg.spatial.image_size,
            cfg.spatial.image_size
        );
    }

    let mut model = PainModel::from_config(&cfg)?;
    let log = fit(
        &mut model,
        &train,
        (!val.is_empty()).then_some(val.as_slice()),
        &cfg.train,
        |r| {
            let val = r.val_acc.map(|v| format!(" val_acc={v:.4}")).unwrap_or_default();
            eprintln!(
                "epoch {:>3} lr={:.3e} loss={:.4} train_acc={:.4}{val}",
                r.epoch, r.lr, r.train_loss, r.train_acc
            );
        },
    )?;
    checkpoint::save(&a.out, &cfg, &model)?;
    if let Some(path) = &a.log {
        write_file(path, &log.to_csv())?;
    }
    println!("saved {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.ckpt, &a.data, a.task)?;
    let mut cm = ConfusionMatrix::new(a.task.num_classes());
    for s in &data.samples {
        cm.record(s.label, model.predict(&s.frames)?)?;
    }
    let report = compute_metrics(&cm, &a.task.to_string())?;
    println!("{}\n{}", MetricsReport::CSV_HEADER, report.csv_row());
    Ok(())
}

fn report_csv(report: &MetricsReport) -> String {
    format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row())
}

fn loso(a: LosoArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let data = load_data(&a.data)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written: Result<()> = Ok(());
    let report = run_task(&data, a.task, &cfg, |fold: &FoldReport| {
        eprintln!(
            "fold {} (subject {}): accuracy {:.4}",
            fold.fold.index, fold.fold.test_subject, fold.metrics.micro_accuracy
        );
        let path = a.out.join(format!(
            "fold_{:02}_subject_{}.csv",
            fold.fold.index, fold.fold.test_subject
        ));
        if written.is_ok() {
            written = write_file(&path, &report_csv(&fold.metrics));
        }
    })?;
    written?;
    write_file(&a.out.join("pooled.csv"), &report_csv(&report.pooled))?;
    println!("{}", report.pooled);
    println!("mean per-fold accuracy: {:.4}", report.mean_fold_accuracy);
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.ckpt, &a.data, a.task)?;
    let rows = bench_inference(&model, &data.samples, &a.strides, a.runs)?;
    let csv = stride_table_csv(&rows);
    match &a.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn relevance(a: RelevanceArgs) -> Result<()> {
    let (_, model) = checkpoint::load(&a.ckpt)?;
    let frames = load_video(&a.video)?;
    let maps = relevance_maps(&model, &frames, a.class)?;
    if a.per_frame {
        let stem = a
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (i, (map, frame)) in maps.iter().zip(&frames).enumerate() {
            let path = a.out.with_file_name(format!("{stem}_f{i:05}.pgm"));
            export_map_image(map, &path, Some(frame))?;
        }
        println!("wrote {} per-frame maps next to {}", maps.len(), a.out.display());
    } else {
        let mean = RelevanceMap::mean(&maps)?;
        let (map, overlay) = export_map_image(&mean, &a.out, frames.first())?;
        println!("wrote {} and {}", map.display(), overlay.display());
    }
    Ok(())
}

fn count(a: CountArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    ensure!(a.frames > 0, "frame count must be positive");
    print!("{}", count_flops(&cfg.spatial, &cfg.temporal, a.frames)?);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let (model, data) = load_model_and_data(&a.ckpt, &a.data, a.task)?;
    let rows = bench_inference(&model, &data.samples, &[1], a.runs)?;
    let r = &rows[0];
    println!(
        "frames={} runs={} mean_ms={:.3} std_ms={:.3} accuracy={:.4}",
        r.frames, a.runs, r.runtime_mean_ms, r.runtime_std_ms, r.accuracy
    );
    Ok(())
}
