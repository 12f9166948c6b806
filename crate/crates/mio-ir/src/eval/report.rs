//! PSNR report tables, improvement columns, and prompt-feature cluster
//! reports with a rendered scatter plot.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{image_to_chw, DatasetManifest, LoadedDataset};
use crate::degrade::{Group, TaskId};
use crate::error::{Error, Result};
use crate::imagebuf::ImageBuffer;
use crate::model::{Classifier, PromptMode, PromptSpec, RestorationModel};
use crate::nncore::Tensor;
use crate::rng::RngStream;

use super::metrics::{calinski_harabasz, project_2d, FeatureSet};
use super::psnr;

/// One named test group (in_dis / out_dis) backed by a manifest.
pub struct TestGroup {
    pub group: Group,
    pub manifest: DatasetManifest,
}

impl TestGroup {
    pub fn load(manifest_path: &Path) -> Result<TestGroup> {
        let manifest = DatasetManifest::load(manifest_path)?;
        Ok(TestGroup { group: manifest.group, manifest })
    }

    pub fn name(&self) -> &'static str {
        self.group.name()
    }
}

/// Format a dB value; the +inf sentinel becomes "inf".
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

/// Signed improvement with an explicit sign; negatives use a minus sign.
pub fn format_delta(v: f64) -> String {
    if v < 0.0 {
        format!("\u{2212}{:.2}", -v)
    } else {
        format!("+{v:.2}")
    }
}

fn db_json(v: f64) -> serde_json::Value {
    if v.is_infinite() {
        serde_json::Value::String("inf".to_string())
    } else {
        serde_json::json!(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tag: String,
    /// Mean PSNR per task, aligned with the table's task order.
    pub task_psnr: Vec<f64>,
    pub avg: f64,
    pub improvement: Option<f64>,
    pub baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub group: String,
    pub tasks: Vec<TaskId>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Model |");
        for t in &self.tasks {
            out.push_str(&format!(" {t} |"));
        }
        out.push_str(" Avg. | Ipv. |\n|---|");
        for _ in &self.tasks {
            out.push_str("---|");
        }
        out.push_str("---|---|\n");
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.tag));
            for v in &row.task_psnr {
                out.push_str(&format!(" {} |", format_db(*v)));
            }
            let ipv = if row.baseline {
                "baseline".to_string()
            } else {
                row.improvement.map(format_delta).unwrap_or_default()
            };
            out.push_str(&format!(" {} | {} |\n", format_db(row.avg), ipv));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "group": self.group,
            "tasks": self.tasks.iter().map(|t| t.letter().to_string()).collect::<Vec<_>>(),
            "rows": self.rows.iter().map(|r| serde_json::json!({
                "tag": r.tag,
                "task_psnr": r.task_psnr.iter().map(|&v| db_json(v)).collect::<Vec<_>>(),
                "avg": db_json(r.avg),
                "improvement": r.improvement.map(db_json),
                "baseline": r.baseline,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Evaluate one model over every task of a loaded test group.
///
/// Explicit-prompt models use the classifier when given one and the
/// ground-truth task label otherwise; adaptive models prompt with the
/// input itself.
pub fn eval_model(
    model: &RestorationModel,
    ds: &LoadedDataset,
    tag: &str,
    classifier: Option<&Classifier>,
) -> Result<ReportRow> {
    let tasks = ds.tasks();
    if tasks.is_empty() {
        return Err(Error::invalid("test group has no tasks"));
    }
    let mut task_psnr = Vec::with_capacity(tasks.len());
    for &task in &tasks {
        let indices = ds.indices_for(task).expect("task listed");
        let values: Vec<f64> = indices
            .par_iter()
            .map(|&i| -> Result<f64> {
                let lq = &ds.lq[i];
                let spec = match model.config.prompt_mode {
                    PromptMode::None => PromptSpec::None,
                    PromptMode::Adaptive => PromptSpec::Adaptive,
                    PromptMode::Explicit => match classifier {
                        Some(clf) => PromptSpec::Task(clf.classify(lq)?.0),
                        None => PromptSpec::Task(task),
                    },
                };
                let restored = crate::model::restore_image(model, lq, &spec)?;
                psnr(&restored, &ds.gt[i])
            })
            .collect::<Result<Vec<_>>>()?;
        task_psnr.push(values.iter().sum::<f64>() / values.len() as f64);
    }
    let avg = task_psnr.iter().sum::<f64>() / task_psnr.len() as f64;
    Ok(ReportRow { tag: tag.into(), task_psnr, avg, improvement: None, baseline: false })
}

/// Mean PSNR of the degraded inputs themselves — the no-op reference.
pub fn degraded_input_row(ds: &LoadedDataset, tag: &str) -> Result<ReportRow> {
    let tasks = ds.tasks();
    let mut task_psnr = Vec::with_capacity(tasks.len());
    for &task in &tasks {
        let indices = ds.indices_for(task).expect("task listed");
        let mut sum = 0.0;
        for &i in indices {
            sum += psnr(&ds.lq[i], &ds.gt[i])?;
        }
        task_psnr.push(sum / indices.len() as f64);
    }
    let avg = task_psnr.iter().sum::<f64>() / task_psnr.len() as f64;
    Ok(ReportRow { tag: tag.into(), task_psnr, avg, improvement: None, baseline: false })
}

/// Attach the Ipv. column: row avg minus the baseline row's avg.
pub fn improvement_table(
    group: &str,
    tasks: &[TaskId],
    rows: &[ReportRow],
    baseline_tag: &str,
) -> Result<ReportTable> {
    let baseline = rows
        .iter()
        .find(|r| r.tag == baseline_tag)
        .ok_or_else(|| Error::invalid(format!("baseline tag '{baseline_tag}' not in rows")))?
        .clone();
    let rows = rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.baseline = r.tag == baseline_tag;
            r.improvement = if r.baseline { Some(0.0) } else { Some(r.avg - baseline.avg) };
            r
        })
        .collect();
    Ok(ReportTable { group: group.into(), tasks: tasks.to_vec(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub mode: String,
    pub n_per_task: usize,
    pub chi: f64,
    pub coords: Vec<[f64; 2]>,
    /// Task index per row, aligned with `coords`.
    pub labels: Vec<usize>,
}

impl ClusterReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode,
            "n_per_task": self.n_per_task,
            "chi": db_json(self.chi),
            "coords": self.coords,
            "labels": self.labels,
        })
    }
}

/// Prompt features for n_per_task samples of every dataset task.
///
/// Explicit prompts are fixed per task, so their rows replicate one
/// feature vector; adaptive prompts are patch crops of the actual inputs.
pub fn prompt_feature_set(
    model: &RestorationModel,
    ds: &LoadedDataset,
    n_per_task: usize,
    seed: u64,
) -> Result<FeatureSet> {
    use rand::Rng;
    if model.config.prompt_mode == PromptMode::None {
        return Err(Error::invalid("prompt analysis needs a prompted model"));
    }
    if n_per_task < 2 {
        return Err(Error::invalid("need at least 2 samples per task"));
    }
    let patch = model.config.patch;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &task in &ds.tasks() {
        match model.config.prompt_mode {
            PromptMode::Explicit => {
                let img = model.prompt_image(task, patch, patch);
                let t = Tensor::new(vec![1, 3, patch, patch], image_to_chw(&img))?;
                let feat = model.extract_prompt_features(&t)?.remove(0);
                for _ in 0..n_per_task {
                    features.push(feat.clone());
                    labels.push(task.index());
                }
            }
            PromptMode::Adaptive => {
                let indices = ds
                    .indices_for(task)
                    .ok_or_else(|| Error::invalid(format!("no samples for task {task}")))?;
                let mut data = Vec::with_capacity(n_per_task * 3 * patch * patch);
                for j in 0..n_per_task {
                    let idx = indices[j % indices.len()];
                    let img = &ds.lq[idx];
                    if img.height() < patch || img.width() < patch {
                        return Err(Error::invalid("image smaller than analysis patch"));
                    }
                    let mut r = RngStream::new(seed, &format!("cluster/{task}/{j}")).rng();
                    let top = r.gen_range(0..=img.height() - patch);
                    let left = r.gen_range(0..=img.width() - patch);
                    data.extend(image_to_chw(&img.crop(top, left, patch, patch)?));
                }
                let t = Tensor::new(vec![n_per_task, 3, patch, patch], data)?;
                for feat in model.extract_prompt_features(&t)? {
                    features.push(feat);
                    labels.push(task.index());
                }
            }
            PromptMode::None => unreachable!(),
        }
    }
    FeatureSet::new(features, labels)
}

pub fn prompt_cluster_report(
    model: &RestorationModel,
    ds: &LoadedDataset,
    n_per_task: usize,
    seed: u64,
) -> Result<ClusterReport> {
    let set = prompt_feature_set(model, ds, n_per_task, seed)?;
    let chi = calinski_harabasz(&set)?;
    let coords = project_2d(&set)?;
    let mode = match model.config.prompt_mode {
        PromptMode::Explicit => "explicit",
        PromptMode::Adaptive => "adaptive",
        PromptMode::None => unreachable!("checked above"),
    };
    Ok(ClusterReport {
        mode: mode.into(),
        n_per_task,
        chi,
        coords,
        labels: set.labels().to_vec(),
    })
}

const SCATTER_COLORS: [[f64; 3]; 7] = [
    [0.89, 0.10, 0.11],
    [0.22, 0.49, 0.72],
    [0.30, 0.69, 0.29],
    [0.60, 0.31, 0.64],
    [1.00, 0.50, 0.00],
    [0.65, 0.34, 0.16],
    [0.12, 0.12, 0.12],
];

/// Render the 2-D projection as a scatter image (white background,
/// one color per task).
pub fn render_scatter(report: &ClusterReport, size: usize) -> Result<ImageBuffer> {
    let size = size.max(64);
    let mut img = ImageBuffer::constant(size, size, 1.0)?;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &[x, y] in &report.coords {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let margin = 8;
    let scale = (size - 2 * margin) as f64;
    for (&[x, y], &label) in report.coords.iter().zip(&report.labels) {
        let cx = margin as f64 + (x - min_x) / span_x * scale;
        let cy = margin as f64 + (1.0 - (y - min_y) / span_y) * scale;
        let color = SCATTER_COLORS[label % SCATTER_COLORS.len()];
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let r = (cy as i64 + dr).clamp(0, size as i64 - 1) as usize;
                let c = (cx as i64 + dc).clamp(0, size as i64 - 1) as usize;
                for ch in 0..3 {
                    img.set(r, c, ch, color[ch]);
                }
            }
        }
    }
    Ok(img)
}
