//! Command-line front end: dataset synthesis, training, evaluation,
//! classifier handling, and prompt diagnostics as one binary.

use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mio_ir::dataio::{
    build_dataset, generate_gt_images, load_png, save_png, DatasetManifest, LoadedDataset,
    MANIFEST_FILE,
};
use mio_ir::degrade::{DegradeParams, DepthKind, Group, ParamRanges, TaskId};
use mio_ir::error::Error;
use mio_ir::eval::{
    degraded_input_row, eval_model, format_db, improvement_table, prompt_cluster_report,
    render_scatter, ReportRow,
};
use mio_ir::imagebuf::ImageBuffer;
use mio_ir::model::{
    restore_image, BackboneConfig, PromptMode, PromptSpec, RestorationModel,
};
use mio_ir::nncore::CosineSchedule;
use mio_ir::train::{
    advise_sequence, load_checkpoint, load_classifier, run_training, save_classifier,
    train_classifier, validate_sequence, ClassifierTrainConfig, RunState, Strategy, TaskSequence,
    TrainPlan,
};
use mio_ir::Result;

#[derive(Parser)]
#[command(name = "mio-ir", version, about = "Multiple-in-one image restoration experiments")]
struct Cli {
    /// Base directory all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Worker threads for dataset builds and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic ground-truth images.
    GenGt(GenGtArgs),
    /// Build a degraded dataset plus manifest from ground-truth images.
    Synth(SynthArgs),
    /// Train a restoration model.
    Train(TrainArgs),
    /// Evaluate checkpoints into a PSNR report table.
    Eval(EvalArgs),
    /// Train or evaluate the degradation classifier.
    Classifier(ClassifierArgs),
    /// Prompt-feature clustering report (CHI + scatter plot).
    PromptAnalyze(PromptAnalyzeArgs),
    /// Restore one image under interpolated prompts.
    PromptInterp(PromptInterpArgs),
}

#[derive(Args)]
struct GenGtArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// in (in_dis) or out (out_dis) parameter ranges.
    #[arg(long, default_value = "in")]
    group: String,
    /// Task letters, e.g. SBNJRHL or SL.
    #[arg(long, default_value = "SBNJRHL")]
    tasks: String,
    /// Depth model for haze: smooth-random or vertical-ramp.
    #[arg(long, default_value = "smooth-random")]
    depth: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest file or dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with the same keys as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    /// none, explicit, or adaptive.
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    iters_per_period: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    body_modules: Option<usize>,
    #[arg(long)]
    prompt_dim: Option<usize>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    learnable_prompts: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a run checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override the derived run tag.
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Repeatable: tag=checkpoint.ckpt.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    /// Baseline row tag; defaults to the first model.
    #[arg(long)]
    baseline: Option<String>,
    /// Classifier checkpoint for explicit-prompt models.
    #[arg(long)]
    classifier: Option<PathBuf>,
    /// Add a row scoring the degraded inputs themselves.
    #[arg(long)]
    with_input_row: bool,
}

#[derive(Args)]
struct ClassifierArgs {
    #[command(subcommand)]
    cmd: ClassifierCmd,
}

#[derive(Subcommand)]
enum ClassifierCmd {
    Train(ClassifierTrainArgs),
    Eval(ClassifierEvalArgs),
}

#[derive(Args)]
struct ClassifierTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ClassifierEvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct PromptAnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n_per_task: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PromptInterpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    task_a: TaskId,
    #[arg(long)]
    task_b: TaskId,
    /// Comma-separated interpolation weights in [0,1].
    #[arg(long, default_value = "0,0.5,1")]
    alphas: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let workdir = cli.workdir.clone();
    let outcome = match cli.cmd {
        Cmd::GenGt(a) => cmd_gen_gt(&workdir, a),
        Cmd::Synth(a) => cmd_synth(&workdir, a),
        Cmd::Train(a) => cmd_train(&workdir, a),
        Cmd::Eval(a) => cmd_eval(&workdir, a),
        Cmd::Classifier(a) => match a.cmd {
            ClassifierCmd::Train(t) => cmd_classifier_train(&workdir, t),
            ClassifierCmd::Eval(t) => cmd_classifier_eval(&workdir, t),
        },
        Cmd::PromptAnalyze(a) => cmd_prompt_analyze(&workdir, a),
        Cmd::PromptInterp(a) => cmd_prompt_interp(&workdir, a),
    };
    match outcome {
        Ok(()) => {}
        Err(e @ Error::InvalidArgument(_)) => {
            eprintln!("error: {e}");
            exit(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(2);
        }
    }
}

fn resolve(workdir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        workdir.join(p)
    }
}

fn env_seed() -> u64 {
    std::env::var("MIO_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn write_resolved<T: Serialize>(out_dir: &Path, resolved: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let text = toml::to_string_pretty(resolved)
        .map_err(|e| Error::Other(format!("config serialization: {e}")))?;
    let path = out_dir.join("resolved.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

fn load_dataset(workdir: &Path, data: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::load(&manifest_path(&resolve(workdir, data)))?;
    LoadedDataset::load(&manifest)
}

fn cmd_gen_gt(workdir: &Path, a: GenGtArgs) -> Result<()> {
    let out = resolve(workdir, &a.out);
    let seed = a.seed.unwrap_or_else(env_seed);
    let paths = generate_gt_images(&out, a.count, a.size, seed)?;
    write_resolved(
        &out,
        &serde_json::json!({ "command": "gen-gt", "count": a.count, "size": a.size, "seed": seed }),
    )?;
    println!("wrote {} ground-truth images to {}", paths.len(), out.display());
    Ok(())
}

fn parse_group(s: &str) -> Result<Group> {
    match s {
        "in" | "in_dis" | "in-dis" => Ok(Group::InDis),
        "out" | "out_dis" | "out-dis" => Ok(Group::OutDis),
        other => Err(Error::invalid(format!("unknown group '{other}', use in or out"))),
    }
}

fn parse_depth(s: &str) -> Result<DepthKind> {
    match s {
        "smooth-random" | "smooth" => Ok(DepthKind::SmoothRandom),
        "vertical-ramp" | "ramp" => Ok(DepthKind::VerticalRamp),
        other => Err(Error::invalid(format!(
            "unknown depth kind '{other}', use smooth-random or vertical-ramp"
        ))),
    }
}

fn param_scalar(p: &DegradeParams) -> (&'static str, f64) {
    match p {
        DegradeParams::S { scale } => ("scale", *scale as f64),
        DegradeParams::B { sigma, .. } => ("sigma", *sigma),
        DegradeParams::N { sigma255 } => ("sigma255", *sigma255),
        DegradeParams::J { quality } => ("quality", *quality as f64),
        DegradeParams::R { strength } => ("strength", *strength),
        DegradeParams::H { beta, .. } => ("beta", *beta),
        DegradeParams::L { gamma } => ("gamma", *gamma),
    }
}

fn print_param_histograms(manifest: &DatasetManifest) {
    for &task in &manifest.tasks {
        let values: Vec<f64> = manifest
            .records
            .iter()
            .filter(|r| r.task == task)
            .map(|r| param_scalar(&r.params).1)
            .collect();
        if values.is_empty() {
            continue;
        }
        let name = param_scalar(&manifest.records.iter().find(|r| r.task == task).unwrap().params).0;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut bins = [0usize; 8];
        let span = (max - min).max(1e-12);
        for &v in &values {
            let b = (((v - min) / span) * 8.0).min(7.0) as usize;
            bins[b] += 1;
        }
        println!(
            "  task {task} ({name}): n={} range [{min:.3}, {max:.3}] hist {bins:?}",
            values.len()
        );
    }
}

fn cmd_synth(workdir: &Path, a: SynthArgs) -> Result<()> {
    let gt_dir = resolve(workdir, &a.gt_dir);
    let out = resolve(workdir, &a.out);
    let group = parse_group(&a.group)?;
    let depth = parse_depth(&a.depth)?;
    let tasks = TaskSequence::parse(&a.tasks)?.tasks().to_vec();
    let seed = a.seed.unwrap_or_else(env_seed);
    let manifest =
        build_dataset(&gt_dir, &tasks, group, &ParamRanges::default(), depth, seed, &out)?;
    write_resolved(
        &out,
        &serde_json::json!({
            "command": "synth",
            "gt_dir": gt_dir,
            "group": group.name(),
            "tasks": a.tasks,
            "depth": a.depth,
            "seed": seed,
        }),
    )?;
    println!("built {} records into {}", manifest.records.len(), out.display());
    print_param_histograms(&manifest);
    println!("manifest: {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

/// Optional file-based defaults for `train`; flags win over file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    strategy: Option<String>,
    prompt: Option<String>,
    sequence: Option<String>,
    periods: Option<usize>,
    iters_per_period: Option<usize>,
    batch: Option<usize>,
    patch: Option<usize>,
    channels: Option<usize>,
    body_modules: Option<usize>,
    prompt_dim: Option<usize>,
    eta_max: Option<f64>,
    eta_min: Option<f64>,
    learnable_prompts: Option<bool>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ResolvedTrainConfig {
    tag: String,
    plan: TrainPlan,
    model: BackboneConfig,
}

fn run_tag(strategy: Strategy, prompt: PromptMode) -> String {
    let s = match strategy {
        Strategy::Mixed => "M",
        Strategy::Sequential => "S",
    };
    let p = match prompt {
        PromptMode::None => "",
        PromptMode::Explicit => "+EP",
        PromptMode::Adaptive => "+AP",
    };
    format!("mini-{s}{p}")
}

fn cmd_train(workdir: &Path, a: TrainArgs) -> Result<()> {
    let file: TrainFileConfig = match &a.config {
        Some(p) => {
            let path = resolve(workdir, p);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            toml::from_str(&text)
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        }
        None => TrainFileConfig::default(),
    };

    let strategy: Strategy =
        a.strategy.or(file.strategy).unwrap_or_else(|| "mixed".to_string()).parse()?;
    let prompt: PromptMode =
        a.prompt.or(file.prompt).unwrap_or_else(|| "none".to_string()).parse()?;
    let sequence_str =
        a.sequence.or(file.sequence).unwrap_or_else(|| TaskSequence::FULL.to_string());
    // Full-length sequences must be permutations; shorter ones are allowed
    // for reduced task studies. Advisory warnings never block the run.
    let sequence = TaskSequence::parse(&sequence_str)?;
    let advisory = if sequence.is_full_permutation() {
        validate_sequence(&sequence_str)?
    } else {
        advise_sequence(&sequence)
    };
    for w in &advisory.warnings {
        eprintln!("advisory: {w}");
    }

    let iters = a.iters_per_period.or(file.iters_per_period).unwrap_or(500);
    let seed = a.seed.or(file.seed).unwrap_or_else(env_seed);
    let plan = TrainPlan {
        strategy,
        sequence,
        periods: a.periods.or(file.periods).unwrap_or(10),
        iters_per_period: iters,
        batch_size: a.batch.or(file.batch).unwrap_or(8),
        patch: a.patch.or(file.patch).unwrap_or(32),
        schedule: CosineSchedule::new(
            a.eta_max.or(file.eta_max).unwrap_or(2e-4),
            a.eta_min.or(file.eta_min).unwrap_or(1e-7),
            iters as u64,
            true,
        ),
        seed,
    };
    let model_config = BackboneConfig {
        channels: a.channels.or(file.channels).unwrap_or(16),
        body_modules: a.body_modules.or(file.body_modules).unwrap_or(4),
        patch: plan.patch,
        prompt_mode: prompt,
        prompt_dim: a.prompt_dim.or(file.prompt_dim).unwrap_or(32),
        learnable_prompts: a.learnable_prompts || file.learnable_prompts.unwrap_or(false),
    };
    let tag = a.tag.clone().unwrap_or_else(|| run_tag(strategy, prompt));
    let out_dir = resolve(workdir, &a.out).join(&tag);

    let state = match &a.resume {
        Some(p) => load_checkpoint(&resolve(workdir, p))?,
        None => RunState::new(plan.clone(), RestorationModel::new(model_config.clone(), seed)),
    };
    write_resolved(
        &out_dir,
        &ResolvedTrainConfig {
            tag: tag.clone(),
            plan: state.plan.clone(),
            model: state.model.config.clone(),
        },
    )?;

    let ds = load_dataset(workdir, &a.data)?;
    let state = run_training(state, &ds, &out_dir)?;
    let last = state.loss_history.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "run {tag}: {} iterations, final loss {last:.6}, checkpoints in {}",
        state.iteration,
        out_dir.display()
    );
    Ok(())
}

fn cmd_eval(workdir: &Path, a: EvalArgs) -> Result<()> {
    let ds = load_dataset(workdir, &a.data)?;
    let classifier = match &a.classifier {
        Some(p) => Some(load_classifier(&resolve(workdir, p))?),
        None => None,
    };
    let mut rows: Vec<ReportRow> = Vec::new();
    if a.with_input_row {
        rows.push(degraded_input_row(&ds, "input")?);
    }
    let mut first_tag = None;
    for spec in &a.models {
        let (tag, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--model wants tag=path, got '{spec}'")))?;
        let state = load_checkpoint(&resolve(workdir, Path::new(path)))?;
        if state.model.config.prompt_mode == PromptMode::Explicit && classifier.is_none() {
            eprintln!("note: {tag} is an explicit-prompt model; using ground-truth task labels (pass --classifier for predicted prompts)");
        }
        rows.push(eval_model(&state.model, &ds, tag, classifier.as_ref())?);
        first_tag.get_or_insert_with(|| tag.to_string());
    }
    let baseline = a
        .baseline
        .clone()
        .or(first_tag)
        .ok_or_else(|| Error::invalid("no models to evaluate"))?;
    let tasks = ds.tasks();
    let table = improvement_table(
        ds.records.first().map(|r| r.group.name()).unwrap_or("in_dis"),
        &tasks,
        &rows,
        &baseline,
    )?;

    let out = resolve(workdir, &a.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let md = table.markdown();
    std::fs::write(out.join("report.md"), &md).map_err(|e| Error::io(&out, e))?;
    std::fs::write(out.join("report.json"), table.to_json().to_string())
        .map_err(|e| Error::io(&out, e))?;
    write_resolved(
        &out,
        &serde_json::json!({
            "command": "eval",
            "data": a.data,
            "models": a.models,
            "baseline": baseline,
            "with_input_row": a.with_input_row,
        }),
    )?;
    print!("{md}");
    Ok(())
}

fn cmd_classifier_train(workdir: &Path, a: ClassifierTrainArgs) -> Result<()> {
    let ds = load_dataset(workdir, &a.data)?;
    let cfg = ClassifierTrainConfig {
        steps: a.steps.unwrap_or(2000),
        batch_size: a.batch.unwrap_or(16),
        patch: a.patch.unwrap_or(32),
        lr: a.lr.unwrap_or(1e-3),
        holdout_fraction: a.holdout.unwrap_or(0.25),
        seed: a.seed.unwrap_or_else(env_seed),
        ..ClassifierTrainConfig::default()
    };
    let out = resolve(workdir, &a.out);
    write_resolved(&out, &cfg)?;
    let outcome = train_classifier(&ds, &cfg)?;
    let path = out.join("classifier.ckpt");
    save_classifier(&outcome.classifier, outcome.holdout_accuracy, &path)?;
    println!(
        "classifier: held-out accuracy {:.4} over {} samples, checkpoint {}",
        outcome.holdout_accuracy,
        outcome.holdout_count,
        path.display()
    );
    Ok(())
}

fn cmd_classifier_eval(workdir: &Path, a: ClassifierEvalArgs) -> Result<()> {
    let ds = load_dataset(workdir, &a.data)?;
    let clf = load_classifier(&resolve(workdir, &a.checkpoint))?;
    let all: Vec<usize> = (0..ds.records.len()).collect();
    let (acc, n) = mio_ir::train::classifier_accuracy(&clf, &ds, &all)?;
    println!("accuracy {acc:.4} over {n} samples");
    Ok(())
}

fn cmd_prompt_analyze(workdir: &Path, a: PromptAnalyzeArgs) -> Result<()> {
    let state = load_checkpoint(&resolve(workdir, &a.checkpoint))?;
    let ds = load_dataset(workdir, &a.data)?;
    let seed = a.seed.unwrap_or_else(env_seed);
    let report = prompt_cluster_report(&state.model, &ds, a.n_per_task, seed)?;
    let out = resolve(workdir, &a.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    std::fs::write(out.join("clusters.json"), report.to_json().to_string())
        .map_err(|e| Error::io(&out, e))?;
    save_png(&render_scatter(&report, 512)?, &out.join("clusters.png"))?;
    write_resolved(
        &out,
        &serde_json::json!({
            "command": "prompt-analyze",
            "checkpoint": a.checkpoint,
            "n_per_task": a.n_per_task,
            "seed": seed,
        }),
    )?;
    println!("{} prompt features, CHI = {}", report.coords.len(), format_db(report.chi));
    Ok(())
}

fn parse_alphas(s: &str) -> Result<Vec<f64>> {
    let mut alphas = Vec::new();
    for part in s.split(',') {
        let a: f64 = part
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad alpha '{part}'")))?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("alpha {a} outside [0,1]")));
        }
        alphas.push(a);
    }
    if alphas.is_empty() {
        return Err(Error::invalid("no alphas given"));
    }
    alphas.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(alphas)
}

/// Horizontal contact sheet with a white separator, tiles ordered as given.
fn contact_sheet(tiles: &[ImageBuffer]) -> Result<ImageBuffer> {
    let (h, w) = (tiles[0].height(), tiles[0].width());
    let gap = 2;
    let total_w = tiles.len() * w + (tiles.len() - 1) * gap;
    let mut sheet = ImageBuffer::constant(h, total_w, 1.0)?;
    for (i, tile) in tiles.iter().enumerate() {
        if (tile.height(), tile.width()) != (h, w) {
            return Err(Error::shape("contact sheet tiles must share one size"));
        }
        let left = i * (w + gap);
        for r in 0..h {
            for c in 0..w {
                for ch in 0..3 {
                    sheet.set(r, left + c, ch, tile.get(r, c, ch));
                }
            }
        }
    }
    Ok(sheet)
}

fn cmd_prompt_interp(workdir: &Path, a: PromptInterpArgs) -> Result<()> {
    let state = load_checkpoint(&resolve(workdir, &a.checkpoint))?;
    let model = &state.model;
    if model.config.prompt_mode != PromptMode::Explicit {
        return Err(Error::invalid("prompt interpolation needs an explicit-prompt model"));
    }
    let img = load_png(&resolve(workdir, &a.input))?;
    let alphas = parse_alphas(&a.alphas)?;
    let out = resolve(workdir, &a.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let patch = model.config.patch;
    let mut tiles = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let prompt = model.interpolated_prompt(a.task_a, a.task_b, alpha, patch, patch)?;
        let restored = restore_image(model, &img, &PromptSpec::Image(prompt))?;
        save_png(&restored, &out.join(format!("alpha_{alpha:.2}.png")))?;
        tiles.push(restored);
    }
    save_png(&contact_sheet(&tiles)?, &out.join("contact_sheet.png"))?;
    write_resolved(
        &out,
        &serde_json::json!({
            "command": "prompt-interp",
            "checkpoint": a.checkpoint,
            "input": a.input,
            "task_a": a.task_a.letter().to_string(),
            "task_b": a.task_b.letter().to_string(),
            "alphas": alphas,
        }),
    )?;
    println!("wrote {} restored images and contact_sheet.png to {}", alphas.len(), out.display());
    Ok(())
}
