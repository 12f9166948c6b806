//! Mixed and sequential training runs: period planning, batch scheduling,
//! the optimization loop, and resumable checkpoints.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{sample_batch, LoadedDataset};
use crate::degrade::{TaskCategory, TaskId};
use crate::error::{Error, Result};
use crate::model::{
    read_checkpoint, write_checkpoint, CheckpointPayload, Classifier, ClassifierConfig, ParamSet,
    PromptMode, RestorationModel,
};
use crate::nncore::{AdamState, CosineSchedule, Graph};
use crate::rng::{stable_hash, RngStream};

/// Ordered task list for sequential learning. Full runs use a permutation
/// of all seven letters ("SBNJRHL"); reduced runs may use a distinct
/// subset (e.g. "NL" for a two-task study).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSequence {
    tasks: Vec<TaskId>,
}

impl TaskSequence {
    pub const FULL: &'static str = "SBNJRHL";

    /// Accepts plain letters ("SBNJRHL") or comma/space separated ("N,L").
    pub fn parse(s: &str) -> Result<TaskSequence> {
        let mut tasks = Vec::new();
        for c in s.chars() {
            if c == ',' || c.is_whitespace() {
                continue;
            }
            let t = TaskId::from_letter(c)?;
            if tasks.contains(&t) {
                return Err(Error::invalid(format!("task {t} repeats in sequence '{s}'")));
            }
            tasks.push(t);
        }
        if tasks.is_empty() {
            return Err(Error::invalid(format!("empty task sequence '{s}'")));
        }
        Ok(TaskSequence { tasks })
    }

    pub fn full() -> TaskSequence {
        TaskSequence::parse(Self::FULL).expect("static sequence")
    }

    pub fn tasks(&self) -> &[TaskId] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn is_full_permutation(&self) -> bool {
        self.tasks.len() == TaskId::ALL.len()
    }
}

impl fmt::Display for TaskSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tasks {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl Serialize for TaskSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TaskSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TaskSequence::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Mixed,
    Sequential,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "mixed" | "m" => Ok(Strategy::Mixed),
            "sequential" | "s" => Ok(Strategy::Sequential),
            other => Err(Error::invalid(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub strategy: Strategy,
    pub sequence: TaskSequence,
    pub periods: usize,
    pub iters_per_period: usize,
    pub batch_size: usize,
    pub patch: usize,
    pub schedule: CosineSchedule,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            strategy: Strategy::Mixed,
            sequence: TaskSequence::full(),
            periods: 10,
            iters_per_period: 500,
            batch_size: 8,
            patch: 32,
            schedule: CosineSchedule::new(2e-4, 1e-7, 500, true),
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.iters_per_period == 0 || self.periods == 0 || self.batch_size == 0 {
            return Err(Error::invalid("periods, iterations and batch must be positive"));
        }
        if self.strategy == Strategy::Sequential && self.periods < self.sequence.len() {
            return Err(Error::invalid(format!(
                "sequential plan needs >= {} periods so every task becomes active, got {}",
                self.sequence.len(),
                self.periods
            )));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.periods * self.iters_per_period
    }
}

/// Active task set for (1-based) period k: sequential runs use the first
/// min(k, len) tasks of the sequence, mixed runs always use all of them.
pub fn tasks_for_period(plan: &TrainPlan, k: usize) -> Result<Vec<TaskId>> {
    if k == 0 || k > plan.periods {
        return Err(Error::invalid(format!("period {k} out of range 1..={}", plan.periods)));
    }
    match plan.strategy {
        Strategy::Mixed => Ok(plan.sequence.tasks().to_vec()),
        Strategy::Sequential => Ok(plan.sequence.tasks()[..k.min(plan.sequence.len())].to_vec()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisoryReport {
    pub warnings: Vec<String>,
    /// (letter, category) in sequence order.
    pub category_order: Vec<(char, String)>,
}

fn category_name(c: TaskCategory) -> &'static str {
    match c {
        TaskCategory::DetailEnhancement => "detail-enhancement",
        TaskCategory::LuminanceAdjustment => "luminance-adjustment",
    }
}

/// Advisory warnings for any sequence: luminance-adjustment tasks in the
/// first two positions tend to hurt the later detail tasks.
pub fn advise_sequence(seq: &TaskSequence) -> AdvisoryReport {
    let mut warnings = Vec::new();
    for (pos, &t) in seq.tasks().iter().take(2).enumerate() {
        if t.category() == TaskCategory::LuminanceAdjustment {
            warnings.push(format!(
                "luminance-adjustment task {t} at position {} — detail tasks usually come first",
                pos + 1
            ));
        }
    }
    AdvisoryReport {
        warnings,
        category_order: seq
            .tasks()
            .iter()
            .map(|&t| (t.letter(), category_name(t.category()).to_string()))
            .collect(),
    }
}

/// Strict form for full runs: the string must be a permutation of all
/// seven task letters; advisory warnings never fail the call.
pub fn validate_sequence(s: &str) -> Result<AdvisoryReport> {
    let seq = TaskSequence::parse(s)?;
    if !seq.is_full_permutation() {
        return Err(Error::invalid(format!(
            "sequence '{s}' has {} tasks, expected a permutation of all {}",
            seq.len(),
            TaskId::ALL.len()
        )));
    }
    Ok(advise_sequence(&seq))
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub period: usize,
    pub active_tasks: String,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub plan: TrainPlan,
    pub model: RestorationModel,
    pub adam: AdamState,
    /// Completed optimizer steps; the next step has this global index.
    pub iteration: usize,
    pub loss_history: Vec<LossRecord>,
}

impl RunState {
    pub fn new(plan: TrainPlan, model: RestorationModel) -> Self {
        let adam = AdamState::new(&model.params.sizes());
        RunState { plan, model, adam, iteration: 0, loss_history: Vec::new() }
    }

    pub fn period_of(&self, iteration: usize) -> usize {
        iteration / self.plan.iters_per_period + 1
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.plan.total_iterations()
    }
}

#[derive(Serialize, Deserialize)]
struct RunExtra {
    iteration: usize,
    adam: AdamState,
    loss_history: Vec<LossRecord>,
    model_config: crate::model::BackboneConfig,
}

pub fn save_checkpoint(state: &RunState, path: &Path) -> Result<()> {
    let extra = RunExtra {
        iteration: state.iteration,
        adam: state.adam.clone(),
        loss_history: state.loss_history.clone(),
        model_config: state.model.config.clone(),
    };
    let payload = CheckpointPayload {
        kind: "run".to_string(),
        config: serde_json::to_value(&state.plan)
            .map_err(|e| Error::Checkpoint(format!("plan serialization: {e}")))?,
        extra: serde_json::to_value(&extra)
            .map_err(|e| Error::Checkpoint(format!("state serialization: {e}")))?,
        tensors: state
            .model
            .params
            .names()
            .iter()
            .cloned()
            .zip(state.model.params.tensors().iter().cloned())
            .collect(),
    };
    write_checkpoint(path, &payload)
}

pub fn load_checkpoint(path: &Path) -> Result<RunState> {
    let payload = read_checkpoint(path)?;
    if payload.kind != "run" {
        return Err(Error::Checkpoint(format!(
            "{}: expected a run checkpoint, found kind '{}'",
            path.display(),
            payload.kind
        )));
    }
    let plan: TrainPlan = serde_json::from_value(payload.config.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: bad plan: {e}", path.display())))?;
    let extra: RunExtra = serde_json::from_value(payload.extra.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: bad run state: {e}", path.display())))?;
    let mut params = ParamSet::new();
    for (name, t) in payload.tensors {
        params.push(name, t);
    }
    Ok(RunState {
        plan,
        model: RestorationModel { config: extra.model_config, params },
        adam: extra.adam,
        iteration: extra.iteration,
        loss_history: extra.loss_history,
    })
}

pub fn write_loss_log(history: &[LossRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for rec in history {
        out.push_str(&serde_json::to_string(rec).expect("serialize loss record"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn checkpoint_path(out_dir: &Path, period: usize) -> PathBuf {
    out_dir.join(format!("period_{period:02}.ckpt"))
}

/// Advance a run to completion, checkpointing at every period boundary.
///
/// Batch sampling is re-derived from (seed, period, iteration), so a resumed
/// run continues on the exact trajectory of an uninterrupted one. A
/// non-finite loss aborts with a diagnostic checkpoint next to the others.
pub fn run_training(mut state: RunState, ds: &LoadedDataset, out_dir: &Path) -> Result<RunState> {
    state.plan.validate()?;
    for task in plan_task_set(&state.plan) {
        if ds.indices_for(task).map_or(true, |v| v.is_empty()) {
            return Err(Error::invalid(format!("dataset has no records for planned task {task}")));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let total = state.plan.total_iterations();
    while state.iteration < total {
        let i = state.iteration;
        let period = state.period_of(i);
        let local = i % state.plan.iters_per_period;
        let active = tasks_for_period(&state.plan, period)?;
        let stream = RngStream::new(state.plan.seed, &format!("train/{period}/{local}"));
        let batch = sample_batch(ds, &active, state.plan.batch_size, state.plan.patch, &stream)?;

        let prompt = match state.model.config.prompt_mode {
            PromptMode::None => None,
            PromptMode::Adaptive => Some(batch.lq.clone()),
            PromptMode::Explicit => state.model.prompt_batch(&batch.lq, Some(&batch.tasks))?,
        };
        let mut g = Graph::new();
        let fwd = state.model.forward(&mut g, batch.lq.clone(), prompt)?;
        let gt_id = g.leaf(batch.gt.clone());
        let loss_id = g.l1_loss(fwd.out, gt_id)?;
        let loss = g.value(loss_id).item();
        let lr = state.plan.schedule.lr_at(i as u64);
        if !loss.is_finite() {
            let diag = out_dir.join("diverged.ckpt");
            save_checkpoint(&state, &diag)?;
            write_loss_log(&state.loss_history, &out_dir.join("train_log.jsonl"))?;
            return Err(Error::TrainingAborted(format!(
                "non-finite loss {loss} at iteration {i} (period {period}); diagnostic checkpoint at {}",
                diag.display()
            )));
        }
        let grads = g.backward(loss_id)?;
        let pgrads = state.model.params.grads(&grads, &fwd.param_nodes)?;
        state.adam.adam_step(state.model.params.tensors_mut(), &pgrads, lr)?;
        state.loss_history.push(LossRecord {
            iteration: i,
            period,
            active_tasks: active.iter().map(|t| t.letter()).collect(),
            loss,
            lr,
        });
        state.iteration += 1;
        if state.iteration % state.plan.iters_per_period == 0 {
            save_checkpoint(&state, &checkpoint_path(out_dir, period))?;
            write_loss_log(&state.loss_history, &out_dir.join("train_log.jsonl"))?;
        }
    }
    save_checkpoint(&state, &out_dir.join("final.ckpt"))?;
    write_loss_log(&state.loss_history, &out_dir.join("train_log.jsonl"))?;
    Ok(state)
}

fn plan_task_set(plan: &TrainPlan) -> Vec<TaskId> {
    plan.sequence.tasks().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierTrainConfig {
    pub classifier: ClassifierConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub patch: usize,
    pub lr: f64,
    /// Fraction of GT images (not records) held out for accuracy reporting.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            classifier: ClassifierConfig::default(),
            steps: 2000,
            batch_size: 16,
            patch: 32,
            lr: 1e-3,
            holdout_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Split record indices by GT image so no source image leaks across the
/// train/holdout boundary.
pub fn classifier_split(ds: &LoadedDataset, holdout_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    let threshold = (holdout_fraction.clamp(0.0, 1.0) * 1000.0) as u64;
    for (i, rec) in ds.records.iter().enumerate() {
        let stem = rec.gt_path.file_stem().and_then(|s| s.to_str()).unwrap_or("img");
        if stable_hash(&format!("clf-split/{stem}")) % 1000 < threshold {
            held.push(i);
        } else {
            train.push(i);
        }
    }
    (train, held)
}

pub struct ClassifierOutcome {
    pub classifier: Classifier,
    pub holdout_accuracy: f64,
    pub holdout_count: usize,
    pub loss_history: Vec<f64>,
}

/// Cross-entropy training on (lq patch, task label) pairs drawn uniformly
/// over tasks, then held-out accuracy over full lq images.
pub fn train_classifier(ds: &LoadedDataset, cfg: &ClassifierTrainConfig) -> Result<ClassifierOutcome> {
    use rand::Rng;
    let tasks = ds.tasks();
    if tasks.is_empty() {
        return Err(Error::invalid("dataset has no tasks"));
    }
    let (train_idx, held_idx) = classifier_split(ds, cfg.holdout_fraction);
    let mut by_task: Vec<Vec<usize>> = vec![Vec::new(); TaskId::ALL.len()];
    for &i in &train_idx {
        by_task[ds.records[i].task.index()].push(i);
    }
    for &t in &tasks {
        if by_task[t.index()].is_empty() {
            return Err(Error::invalid(format!("no training records left for task {t}")));
        }
    }

    let mut clf = Classifier::new(cfg.classifier.clone(), cfg.seed);
    let mut adam = AdamState::new(&clf.params.sizes());
    let mut loss_history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let stream = RngStream::new(cfg.seed, &format!("clf/{step}"));
        let mut r = stream.rng();
        let mut data = Vec::with_capacity(cfg.batch_size * 3 * cfg.patch * cfg.patch);
        let mut labels = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let task = tasks[r.gen_range(0..tasks.len())];
            let pool = &by_task[task.index()];
            let idx = pool[r.gen_range(0..pool.len())];
            let img = &ds.lq[idx];
            if img.height() < cfg.patch || img.width() < cfg.patch {
                return Err(Error::invalid(format!(
                    "image smaller than classifier patch {}",
                    cfg.patch
                )));
            }
            let top = r.gen_range(0..=img.height() - cfg.patch);
            let left = r.gen_range(0..=img.width() - cfg.patch);
            let patch = img.crop(top, left, cfg.patch, cfg.patch)?;
            data.extend(crate::dataio::image_to_chw(&patch));
            labels.push(task.index());
        }
        let x = crate::nncore::Tensor::new(
            vec![cfg.batch_size, 3, cfg.patch, cfg.patch],
            data,
        )?;
        let mut g = Graph::new();
        let (logits, param_nodes) = clf.forward(&mut g, x)?;
        let loss_id = g.softmax_cross_entropy(logits, &labels)?;
        let loss = g.value(loss_id).item();
        if !loss.is_finite() {
            return Err(Error::TrainingAborted(format!(
                "non-finite classifier loss at step {step}"
            )));
        }
        loss_history.push(loss);
        let grads = g.backward(loss_id)?;
        let pgrads = clf.params.grads(&grads, &param_nodes)?;
        // Single cosine decay to 1% of the base rate over the full run.
        let progress = step as f64 / cfg.steps.max(1) as f64;
        let lr = cfg.lr * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        adam.adam_step(clf.params.tensors_mut(), &pgrads, lr)?;
    }

    // Tiny datasets can hash every image into the training pool; report NaN
    // accuracy instead of failing the whole run.
    let (accuracy, holdout_count) = if held_idx.is_empty() {
        (f64::NAN, 0)
    } else {
        classifier_accuracy(&clf, ds, &held_idx)?
    };
    Ok(ClassifierOutcome { classifier: clf, holdout_accuracy: accuracy, holdout_count, loss_history })
}

pub fn save_classifier(clf: &Classifier, accuracy: f64, path: &Path) -> Result<()> {
    let payload = CheckpointPayload {
        kind: "classifier".to_string(),
        config: serde_json::to_value(&clf.config)
            .map_err(|e| Error::Checkpoint(format!("classifier config: {e}")))?,
        extra: serde_json::json!({ "holdout_accuracy": accuracy }),
        tensors: clf
            .params
            .names()
            .iter()
            .cloned()
            .zip(clf.params.tensors().iter().cloned())
            .collect(),
    };
    write_checkpoint(path, &payload)
}

pub fn load_classifier(path: &Path) -> Result<Classifier> {
    let payload = read_checkpoint(path)?;
    if payload.kind != "classifier" {
        return Err(Error::Checkpoint(format!(
            "{}: expected a classifier checkpoint, found kind '{}'",
            path.display(),
            payload.kind
        )));
    }
    let config: ClassifierConfig = serde_json::from_value(payload.config.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: bad classifier config: {e}", path.display())))?;
    let mut params = ParamSet::new();
    for (name, t) in payload.tensors {
        params.push(name, t);
    }
    Ok(Classifier { config, params })
}

/// Accuracy over the given record indices, classifying each full lq image.
pub fn classifier_accuracy(
    clf: &Classifier,
    ds: &LoadedDataset,
    indices: &[usize],
) -> Result<(f64, usize)> {
    if indices.is_empty() {
        return Err(Error::invalid("no held-out records to evaluate"));
    }
    let hits: usize = indices
        .iter()
        .map(|&i| {
            let (pred, _) = clf.classify(&ds.lq[i])?;
            Ok(usize::from(pred == ds.records[i].task))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok((hits as f64 / indices.len() as f64, indices.len()))
}
