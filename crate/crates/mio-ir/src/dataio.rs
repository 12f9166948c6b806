//! Dataset materialization and batch serving: ingest GT images, write
//! degraded counterparts plus a line-delimited manifest, cut aligned patch
//! batches for training.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::{self, DegradeParams, DepthKind, Group, ParamRanges, TaskId};
use crate::error::{Error, Result};
use crate::imagebuf::{ImageBuffer, CHANNELS};
use crate::nncore::Tensor;
use crate::rng::{stable_hash, RngStream};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub gt_path: PathBuf,
    pub lq_path: PathBuf,
    pub task: TaskId,
    pub group: Group,
    pub params: DegradeParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestHeader {
    schema: String,
    version: u32,
    tasks: Vec<TaskId>,
    group: Group,
    seed: u64,
    depth_kind: DepthKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub tasks: Vec<TaskId>,
    pub group: Group,
    pub seed: u64,
    pub depth_kind: DepthKind,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let header = ManifestHeader {
            schema: "mio-manifest".to_string(),
            version: MANIFEST_VERSION,
            tasks: self.tasks.clone(),
            group: self.group,
            seed: self.seed,
            depth_kind: self.depth_kind,
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("serialize header")).unwrap();
        for rec in &self.records {
            writeln!(out, "{}", serde_json::to_string(rec).expect("serialize record")).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("empty manifest {}", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::invalid(format!("bad manifest header: {e}")))?;
        if header.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                header.version
            )));
        }
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::invalid(format!("bad manifest record: {e}")))?,
            );
        }
        Ok(DatasetManifest {
            records,
            tasks: header.tasks,
            group: header.group,
            seed: header.seed,
            depth_kind: header.depth_kind,
        })
    }
}

pub fn load_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| Error::Codec { path: path.into(), message: e.to_string() })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImageBuffer::from_vec(h as usize, w as usize, data)
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| ((v * 255.0) + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Codec { path: path.into(), message: e.to_string() })
}

/// Deterministic synthetic ground-truth image: smooth color gradient,
/// random rectangles and disks, mild sinusoidal texture.
pub fn synthetic_gt(size: usize, stream: &RngStream) -> ImageBuffer {
    let mut rng = stream.rng();
    let mut img = ImageBuffer::new(size, size).expect("size >= 8");
    let base: [f64; 3] = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
    let grad: [f64; 3] = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
    let (fy, fx) = (rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6));
    for r in 0..size {
        for c in 0..size {
            let t = (r + c) as f64 / (2 * size) as f64;
            let tex = 0.08 * ((r as f64 * fy).sin() * (c as f64 * fx).cos());
            for ch in 0..CHANNELS {
                img.set(r, c, ch, (base[ch] + grad[ch] * t + tex).clamp(0.02, 0.98));
            }
        }
    }
    for _ in 0..rng.gen_range(3..8) {
        let shape_color: [f64; 3] =
            [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let cy = rng.gen_range(0..size);
        let cx = rng.gen_range(0..size);
        let half = rng.gen_range(2..size / 3 + 2);
        let disk = rng.gen::<bool>();
        for r in cy.saturating_sub(half)..(cy + half).min(size) {
            for c in cx.saturating_sub(half)..(cx + half).min(size) {
                let dr = r as isize - cy as isize;
                let dc = c as isize - cx as isize;
                if disk && dr * dr + dc * dc > (half * half) as isize {
                    continue;
                }
                for ch in 0..CHANNELS {
                    let mixed = 0.7 * shape_color[ch] + 0.3 * img.get(r, c, ch);
                    img.set(r, c, ch, mixed.clamp(0.02, 0.98));
                }
            }
        }
    }
    // Thin high-contrast lines: sharp luminance steps like branches or wires,
    // the main carriers of ringing and blocking artifacts after degradation.
    for _ in 0..rng.gen_range(2..6) {
        let color: [f64; 3] =
            [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let horizontal = rng.gen::<bool>();
        let pos = rng.gen_range(0..size);
        let thickness = rng.gen_range(1..3usize);
        for along in 0..size {
            for t in 0..thickness {
                let (r, c) = if horizontal { (pos + t, along) } else { (along, pos + t) };
                if r < size && c < size {
                    for ch in 0..CHANNELS {
                        img.set(r, c, ch, color[ch]);
                    }
                }
            }
        }
    }
    // Band-limited value-noise texture: bilinear interpolation of a coarse
    // random lattice. Natural images carry fine stochastic texture at a few
    // pixels' scale; without it the degradation classes that differ only in
    // how they treat high frequencies collapse into one another.
    let cell = rng.gen_range(2..6usize);
    let amp = rng.gen_range(0.05..0.16);
    let gw = size / cell + 2;
    let lattice: Vec<f64> = (0..gw * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for r in 0..size {
        for c in 0..size {
            let (gy, gx) = (r as f64 / cell as f64, c as f64 / cell as f64);
            let (y0, x0) = (gy as usize, gx as usize);
            let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
            let v00 = lattice[y0 * gw + x0];
            let v01 = lattice[y0 * gw + x0 + 1];
            let v10 = lattice[(y0 + 1) * gw + x0];
            let v11 = lattice[(y0 + 1) * gw + x0 + 1];
            let v = v00 * (1.0 - fy) * (1.0 - fx)
                + v01 * (1.0 - fy) * fx
                + v10 * fy * (1.0 - fx)
                + v11 * fy * fx;
            for ch in 0..CHANNELS {
                img.set(r, c, ch, (img.get(r, c, ch) + amp * v).clamp(0.02, 0.98));
            }
        }
    }
    img
}

/// Write `count` synthetic GT PNGs into `dir`, named gt_0000.png onward.
pub fn generate_gt_images(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let stream = RngStream::new(seed, &format!("gt/{i}"));
        let img = synthetic_gt(size, &stream);
        let path = dir.join(format!("gt_{i:04}.png"));
        save_png(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

fn list_gt_images(gt_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(gt_dir)
        .map_err(|e| Error::io(gt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("png") | Some("jpg") | Some("jpeg")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no decodable images in {}", gt_dir.display())));
    }
    Ok(paths)
}

/// Degrade every GT once per task and write the manifest.
///
/// Per-record seeds hash (global seed, gt filename, task, group), so the
/// result is independent of build order and worker count.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    gt_dir: &Path,
    tasks: &[TaskId],
    group: Group,
    ranges: &ParamRanges,
    depth_kind: DepthKind,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if tasks.is_empty() {
        return Err(Error::invalid("no tasks requested"));
    }
    let gt_paths = list_gt_images(gt_dir)?;

    let work: Vec<(PathBuf, TaskId)> = gt_paths
        .iter()
        .flat_map(|p| tasks.iter().map(move |&t| (p.clone(), t)))
        .collect();

    let results: Vec<Option<SampleRecord>> = work
        .par_iter()
        .map(|(gt_path, task)| {
            let name = gt_path.file_stem().and_then(|s| s.to_str()).unwrap_or("img");
            let gt = match load_png(gt_path) {
                Ok(img) => img,
                Err(e) => {
                    eprintln!("warning: skipping unreadable image {}: {e}", gt_path.display());
                    return None;
                }
            };
            let stream_label = format!("{name}/{}/{}", task.letter(), group.name());
            let record_seed = stable_hash(&format!("{seed}/{stream_label}"));
            let stream = RngStream::new(seed, &stream_label);
            let (lq, params) = match degrade::degrade(&gt, *task, group, ranges, depth_kind, &stream)
            {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("warning: degradation failed for {}: {e}", gt_path.display());
                    return None;
                }
            };
            let lq_path =
                out_dir.join(group.name()).join(task.letter().to_string()).join(format!("{name}.png"));
            if let Err(e) = save_png(&lq, &lq_path) {
                eprintln!("warning: could not write {}: {e}", lq_path.display());
                return None;
            }
            Some(SampleRecord {
                gt_path: gt_path.clone(),
                lq_path,
                task: *task,
                group,
                params,
                seed: record_seed,
            })
        })
        .collect();

    let records: Vec<SampleRecord> = results.into_iter().flatten().collect();
    if records.is_empty() {
        return Err(Error::invalid(format!("no records built from {}", gt_dir.display())));
    }
    let manifest = DatasetManifest {
        records,
        tasks: tasks.to_vec(),
        group,
        seed,
        depth_kind,
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// All manifest images decoded into memory, indexed per task.
pub struct LoadedDataset {
    pub records: Vec<SampleRecord>,
    pub lq: Vec<ImageBuffer>,
    pub gt: Vec<ImageBuffer>,
    by_task: BTreeMap<TaskId, Vec<usize>>,
}

impl LoadedDataset {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let mut lq = Vec::with_capacity(manifest.records.len());
        let mut gt = Vec::with_capacity(manifest.records.len());
        let mut by_task: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
        for (i, rec) in manifest.records.iter().enumerate() {
            let lq_img = load_png(&rec.lq_path)?;
            let gt_img = load_png(&rec.gt_path)?;
            if (lq_img.height(), lq_img.width()) != (gt_img.height(), gt_img.width()) {
                return Err(Error::invalid(format!(
                    "lq/gt size mismatch for {}",
                    rec.lq_path.display()
                )));
            }
            lq.push(lq_img);
            gt.push(gt_img);
            by_task.entry(rec.task).or_default().push(i);
        }
        Ok(LoadedDataset { records: manifest.records.clone(), lq, gt, by_task })
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.by_task.keys().copied().collect()
    }

    pub fn indices_for(&self, task: TaskId) -> Option<&[usize]> {
        self.by_task.get(&task).map(|v| v.as_slice())
    }
}

/// Aligned LQ/GT patch batch in N x C x H x W layout.
pub struct PatchBatch {
    pub lq: Tensor,
    pub gt: Tensor,
    pub tasks: Vec<TaskId>,
    /// (record index, top, left) per batch item.
    pub crops: Vec<(usize, usize, usize)>,
}

pub fn image_to_chw(img: &ImageBuffer) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0.0; CHANNELS * h * w];
    for ch in 0..CHANNELS {
        for r in 0..h {
            for c in 0..w {
                out[(ch * h + r) * w + c] = img.get(r, c, ch);
            }
        }
    }
    out
}

pub fn chw_to_image(data: &[f64], h: usize, w: usize) -> Result<ImageBuffer> {
    let mut img = ImageBuffer::new(h, w)?;
    for ch in 0..CHANNELS {
        for r in 0..h {
            for c in 0..w {
                img.set(r, c, ch, data[(ch * h + r) * w + c]);
            }
        }
    }
    Ok(img)
}

/// Draw a batch: task uniform over the active set, record uniform within the
/// task, crop position uniform, lq/gt coordinate-aligned.
pub fn sample_batch(
    ds: &LoadedDataset,
    active_tasks: &[TaskId],
    batch_size: usize,
    patch: usize,
    rng: &RngStream,
) -> Result<PatchBatch> {
    if active_tasks.is_empty() || batch_size == 0 {
        return Err(Error::invalid("empty active task set or batch"));
    }
    for t in active_tasks {
        if ds.indices_for(*t).map_or(true, |v| v.is_empty()) {
            return Err(Error::invalid(format!("no records for active task {t}")));
        }
    }
    let mut r = rng.rng();
    let mut lq = Vec::with_capacity(batch_size * CHANNELS * patch * patch);
    let mut gt = Vec::with_capacity(batch_size * CHANNELS * patch * patch);
    let mut tasks = Vec::with_capacity(batch_size);
    let mut crops = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let task = active_tasks[r.gen_range(0..active_tasks.len())];
        let candidates = ds.indices_for(task).expect("checked above");
        let idx = candidates[r.gen_range(0..candidates.len())];
        let img = &ds.lq[idx];
        if img.height() < patch || img.width() < patch {
            return Err(Error::invalid(format!(
                "image {} smaller than patch {patch}",
                ds.records[idx].lq_path.display()
            )));
        }
        let top = r.gen_range(0..=img.height() - patch);
        let left = r.gen_range(0..=img.width() - patch);
        let lq_patch = img.crop(top, left, patch, patch)?;
        let gt_patch = ds.gt[idx].crop(top, left, patch, patch)?;
        lq.extend(image_to_chw(&lq_patch));
        gt.extend(image_to_chw(&gt_patch));
        tasks.push(task);
        crops.push((idx, top, left));
    }
    Ok(PatchBatch {
        lq: Tensor::new(vec![batch_size, CHANNELS, patch, patch], lq)?,
        gt: Tensor::new(vec![batch_size, CHANNELS, patch, patch], gt)?,
        tasks,
        crops,
    })
}
