//! PSNR and clustering metrics.

use crate::error::{Error, Result};
use crate::imagebuf::ImageBuffer;

/// 10*log10(1/MSE) over all RGB values in [0,1], no border crop.
/// Exact equality reports +inf.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::shape(format!(
            "psnr: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Labeled prompt-feature vectors for clustering diagnostics.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    dim: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl FeatureSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::invalid("feature set must not be empty"));
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::shape("inconsistent feature dimensions"));
        }
        Ok(FeatureSet { dim, features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<FeatureSet> {
        FeatureSet::new(self.features.clone(), labels)
    }
}

/// Calinski-Harabasz index: [tr(B)/(k-1)] / [tr(W)/(N-k)].
/// Degenerate case W=0 with B>0 reports +inf.
pub fn calinski_harabasz(set: &FeatureSet) -> Result<f64> {
    let n = set.len();
    let d = set.dim();
    let mut clusters: Vec<usize> = set.labels().to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let k = clusters.len();
    if k < 2 {
        return Err(Error::invalid("Calinski-Harabasz needs at least two labels"));
    }

    let mut global = vec![0.0; d];
    for f in set.features() {
        for (g, &v) in global.iter_mut().zip(f) {
            *g += v;
        }
    }
    for g in &mut global {
        *g /= n as f64;
    }

    let mut tr_b = 0.0;
    let mut tr_w = 0.0;
    for &label in &clusters {
        let members: Vec<&Vec<f64>> = set
            .features()
            .iter()
            .zip(set.labels())
            .filter(|(_, &l)| l == label)
            .map(|(f, _)| f)
            .collect();
        let nk = members.len() as f64;
        // A cluster of bitwise-identical points is its own centroid; computing
        // the mean would introduce rounding and a spurious nonzero scatter.
        let coincident = members.windows(2).all(|w| w[0] == w[1]);
        let centroid = if coincident {
            members[0].clone()
        } else {
            let mut centroid = vec![0.0; d];
            for f in &members {
                for (c, &v) in centroid.iter_mut().zip(f.iter()) {
                    *c += v;
                }
            }
            for c in &mut centroid {
                *c /= nk;
            }
            centroid
        };
        for (c, g) in centroid.iter().zip(&global) {
            tr_b += nk * (c - g) * (c - g);
        }
        for f in &members {
            for (v, c) in f.iter().zip(&centroid) {
                tr_w += (v - c) * (v - c);
            }
        }
    }

    let between = tr_b / (k - 1) as f64;
    let within = tr_w / (n - k) as f64;
    if within == 0.0 {
        Ok(if between > 0.0 { f64::INFINITY } else { 0.0 })
    } else {
        Ok(between / within)
    }
}

/// Top-2 PCA projection after mean centering. Deterministic sign convention:
/// each component's largest-magnitude coordinate is positive. Rank-deficient
/// data gets a zero second coordinate.
pub fn project_2d(set: &FeatureSet) -> Result<Vec<[f64; 2]>> {
    let n = set.len();
    if n < 3 {
        return Err(Error::invalid("projection needs at least 3 samples"));
    }
    let d = set.dim();
    let mut mean = vec![0.0; d];
    for f in set.features() {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = set
        .features()
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(&v, &m)| v - m).collect())
        .collect();

    // Covariance (d x d), then top-2 eigenvectors by power iteration with
    // deflation. Small d keeps this cheap.
    let mut cov = vec![0.0; d * d];
    for f in &centered {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += f[i] * f[j];
            }
        }
    }
    for c in &mut cov {
        *c /= (n - 1) as f64;
    }

    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut work = cov.clone();
    for _ in 0..2 {
        if let Some((vec_, val)) = power_iteration(&work, d) {
            // Deflate: work -= val * v v^T
            for i in 0..d {
                for j in 0..d {
                    work[i * d + j] -= val * vec_[i] * vec_[j];
                }
            }
            components.push(vec_);
        } else {
            components.push(vec![0.0; d]);
        }
    }
    for comp in &mut components {
        let max_idx = comp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if comp[max_idx] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }

    Ok(centered
        .iter()
        .map(|f| {
            let p0 = f.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let p1 = f.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
            [p0, p1]
        })
        .collect())
}

fn power_iteration(m: &[f64], d: usize) -> Option<(Vec<f64>, f64)> {
    let trace: f64 = (0..d).map(|i| m[i * d + i]).sum();
    if trace <= 1e-300 {
        return None;
    }
    // Deterministic start vector.
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + (i as f64) * 1e-3).collect();
    normalize(&mut v);
    let mut val = 0.0;
    for _ in 0..500 {
        let mut next = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                next[i] += m[i * d + j] * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-14 * trace.max(1.0) {
            return None;
        }
        for x in &mut next {
            *x /= norm;
        }
        let new_val = norm;
        let done = (new_val - val).abs() < 1e-13 * new_val.max(1.0);
        v = next;
        val = new_val;
        if done {
            break;
        }
    }
    Some((v, val))
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
