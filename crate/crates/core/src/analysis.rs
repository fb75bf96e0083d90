//! Latent-structure tooling: exact t-SNE, silhouette scores, class-embedding
//! distance statistics, and patch cue maps with thresholded masks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::dataset::{Dataset, FmriSample, SalientBlock};
use crate::error::{Error, Result};
use crate::model::CaptionSystem;
use crate::rng::{normal, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Inputs wider than this are reduced by PCA first.
    pub pca_dims: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 15.0,
            iterations: 1000,
            learning_rate: 100.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            pca_dims: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub coords: Matrix,
    /// `(iteration, KL(P‖Q))` every ten iterations and at the end, with the
    /// unexaggerated affinities.
    pub kl_trace: Vec<(usize, f64)>,
}

impl TsneOutput {
    pub fn final_kl(&self) -> f64 {
        self.kl_trace.last().map(|&(_, kl)| kl).unwrap_or(f64::NAN)
    }
}

const ENTROPY_TOL: f64 = 1e-5;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let mut d = Matrix::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Symmetrized joint affinities with per-point bandwidths binary-searched so
/// each conditional distribution has the requested perplexity.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = x.nrows();
    if !(perplexity > 1.0 && perplexity < n as f64) {
        return Err(Error::Config(format!(
            "perplexity must be in (1, {n}), found {perplexity}"
        )));
    }
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut p = Matrix::zeros((n, n));
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let d_min = others.iter().map(|&j| d[[i, j]]).fold(f64::INFINITY, f64::min);
        let shifted: Vec<f64> = others.iter().map(|&j| d[[i, j]] - d_min).collect();
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut row = vec![0.0; shifted.len()];
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for (r, &s) in row.iter_mut().zip(&shifted) {
                *r = (-beta * s).exp();
                sum += *r;
                weighted += s * *r;
            }
            let entropy = sum.ln() + beta * weighted / sum;
            row.iter_mut().for_each(|r| *r /= sum);
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for (&j, &r) in others.iter().zip(&row) {
            p[[i, j]] = r;
        }
    }
    let sym = &p + &p.t();
    let total = sym.sum();
    Ok(sym.mapv(|v| (v / total).max(P_FLOOR)))
}

fn student_kernel(y: &Matrix) -> (Matrix, f64) {
    let n = y.nrows();
    let d = squared_distances(y);
    let mut num = d.mapv(|v| 1.0 / (1.0 + v));
    for i in 0..n {
        num[[i, i]] = 0.0;
    }
    let z = num.sum();
    (num, z)
}

/// `KL(P‖Q)` for low-dimensional coordinates `y`.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let (num, z) = student_kernel(y);
    let n = y.nrows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[[i, j]] / z).max(P_FLOOR);
                kl += p[[i, j]] * (p[[i, j]] / q).ln();
            }
        }
    }
    kl
}

/// Gradient of [`kl_divergence`] with respect to `y`.
pub fn kl_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    let (num, z) = student_kernel(y);
    let n = y.nrows();
    let mut grad = Matrix::zeros(y.raw_dim());
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = 4.0 * (p[[i, j]] - num[[i, j]] / z) * num[[i, j]];
            for k in 0..y.ncols() {
                grad[[i, k]] += w * (y[[i, k]] - y[[j, k]]);
            }
        }
    }
    grad
}

/// Projects centred rows onto the top `k` principal directions.
pub fn pca(x: &Matrix, k: usize) -> Matrix {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centred = x - &mean;
    let (n, d) = centred.dim();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| centred[[i, j]]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = k.min(order.len());
    Matrix::from_shape_fn((n, k), |(i, c)| {
        let row = order[c];
        (0..d).map(|j| centred[[i, j]] * v_t[(row, j)]).sum()
    })
}

fn jitter_duplicates(x: &mut Matrix, seed: u64) {
    let n = x.nrows();
    let mut dup = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if x.row(i) == x.row(j) {
                dup[j] = true;
            }
        }
    }
    let count = dup.iter().filter(|&&d| d).count();
    if count == 0 {
        return;
    }
    log::warn!("t-SNE input has {count} duplicate points; perturbing by 1e-10");
    let mut rng = rng_from_seed(seed ^ 0x6a09_e667_f3bc_c908);
    for (i, &is_dup) in dup.iter().enumerate() {
        if is_dup {
            x.row_mut(i).iter_mut().for_each(|v| *v += 1e-10 * normal(&mut rng));
        }
    }
}

/// Exact t-SNE to two dimensions.
pub fn tsne(embeddings: &Matrix, cfg: &TsneConfig) -> Result<TsneOutput> {
    let (n, d) = embeddings.dim();
    if n < 4 || d < 2 {
        return Err(Error::Invalid(format!("t-SNE needs n >= 4 and d >= 2, found {n}x{d}")));
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("t-SNE input is not finite".into()));
    }
    if cfg.iterations == 0 {
        return Err(Error::Config("t-SNE iterations must be at least 1".into()));
    }
    let mut x = if d > cfg.pca_dims && cfg.pca_dims >= 2 {
        pca(embeddings, cfg.pca_dims)
    } else {
        embeddings.clone()
    };
    jitter_duplicates(&mut x, cfg.seed);
    let p = joint_probabilities(&x, cfg.perplexity)?;

    let mut rng = rng_from_seed(cfg.seed);
    let mut y = Matrix::from_shape_fn((n, 2), |_| 1e-2 * normal(&mut rng));
    let mut velocity = Matrix::zeros((n, 2));
    let mut gains = Matrix::ones((n, 2));
    let exaggerated = &p * cfg.early_exaggeration;
    let mut kl_trace = Vec::new();
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let grad = kl_gradient(if early { &exaggerated } else { &p }, &y);
        let momentum = if early { 0.5 } else { 0.8 };
        for ((g, v), gain) in grad.iter().zip(velocity.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*v > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(0.01)
            };
            *v = momentum * *v - cfg.learning_rate * *gain * g;
        }
        y += &velocity;
        let mean = y.mean_axis(Axis(0)).expect("non-empty");
        y -= &mean;
        if (it + 1) % 10 == 0 || it + 1 == cfg.iterations {
            kl_trace.push((it + 1, kl_divergence(&p, &y)));
        }
    }
    Ok(TsneOutput { coords: y, kl_trace })
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient with Euclidean distances. Points alone in
/// their cluster contribute 0.
pub fn silhouette(points: &Matrix, labels: &[String]) -> Result<f64> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} points but {} labels", labels.len())));
    }
    let clusters: BTreeMap<&str, Vec<usize>> = labels.iter().enumerate().fold(BTreeMap::new(), |mut m, (i, l)| {
        m.entry(l.as_str()).or_insert_with(Vec::new).push(i);
        m
    });
    if clusters.len() < 2 {
        return Err(Error::Invalid("silhouette needs at least two clusters".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = &clusters[labels[i].as_str()];
        if own.len() == 1 {
            continue;
        }
        let mean_to = |members: &[usize]| {
            members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| euclidean(points.row(i), points.row(j)))
                .sum::<f64>()
        };
        let a = mean_to(own) / (own.len() - 1) as f64;
        let b = clusters
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, m)| mean_to(m) / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub within: f64,
    pub across: f64,
    pub within_pairs: usize,
    pub across_pairs: usize,
}

/// Mean Euclidean distance over same-label pairs and over different-label
/// pairs.
pub fn category_distance_stats(embeddings: &Matrix, labels: &[String]) -> Result<DistanceStats> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings but {} labels", labels.len())));
    }
    let (mut within, mut across, mut nw, mut na) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let dist = euclidean(embeddings.row(i), embeddings.row(j));
            if labels[i] == labels[j] {
                within += dist;
                nw += 1;
            } else {
                across += dist;
                na += 1;
            }
        }
    }
    if nw == 0 || na == 0 {
        return Err(Error::Invalid("need both same- and cross-category pairs".into()));
    }
    Ok(DistanceStats {
        within: within / nw as f64,
        across: across / na as f64,
        within_pairs: nw,
        across_pairs: na,
    })
}

/// Class embeddings of every sample, one row each, with their categories.
pub fn class_embeddings(system: &CaptionSystem, samples: &[FmriSample]) -> Result<(Matrix, Vec<String>)> {
    let dim = system.config.encoder.embed_dim;
    let mut out = Matrix::zeros((samples.len(), dim));
    for (i, s) in samples.iter().enumerate() {
        let z = system.encode(&s.rois)?;
        out.row_mut(i).assign(&z.class_embedding());
    }
    Ok((out, samples.iter().map(|s| s.category.clone()).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CueMap {
    pub grid: Matrix,
    pub mask: Array2<bool>,
    pub threshold: f64,
}

/// Cosine similarity of each of the `G×G` patch rows with the class vector.
/// Zero patches score 0.
pub fn visual_cue_map(patches: &Matrix, grid: usize, class: &[f64]) -> Result<Matrix> {
    if patches.nrows() != grid * grid {
        return Err(Error::Shape(format!(
            "expected {} patch rows for a {grid}x{grid} grid, found {}",
            grid * grid,
            patches.nrows()
        )));
    }
    if patches.ncols() != class.len() {
        return Err(Error::Shape(format!(
            "patch width {} vs class vector width {}",
            patches.ncols(),
            class.len()
        )));
    }
    let class_norm = class.iter().map(|v| v * v).sum::<f64>().sqrt();
    if class_norm == 0.0 || !class_norm.is_finite() {
        return Err(Error::Invalid("class vector must be nonzero and finite".into()));
    }
    Ok(Matrix::from_shape_fn((grid, grid), |(r, c)| {
        let row = patches.row(r * grid + c);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = row.iter().zip(class).map(|(a, b)| a * b).sum();
        (dot / (norm * class_norm)).clamp(-1.0, 1.0)
    }))
}

/// Grid mean plus one population standard deviation.
pub fn default_threshold(grid: &Matrix) -> f64 {
    let mean = grid.mean().unwrap_or(0.0);
    mean + grid.std(0.0)
}

/// `mask = grid >= threshold`. Thresholds outside `[-1, 1]` simply give a
/// constant mask.
pub fn threshold_mask(grid: &Matrix, threshold: f64) -> CueMap {
    CueMap {
        grid: grid.clone(),
        mask: grid.mapv(|v| v >= threshold),
        threshold,
    }
}

/// Cell with the largest value, lowest index on ties.
pub fn argmax_cell(grid: &Matrix) -> (usize, usize) {
    let mut best = (0, 0);
    for ((r, c), &v) in grid.indexed_iter() {
        if v > grid[best] {
            best = (r, c);
        }
    }
    best
}

/// Cue map of one sample under a trained system: patches in the aligned
/// proxy space against the class embedding pulled back into it.
pub fn sample_cue_map(system: &CaptionSystem, sample: &FmriSample, threshold: Option<f64>) -> Result<CueMap> {
    let patches = sample
        .patch_embeddings
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("sample {} has no patch embeddings", sample.sample_id)))?;
    let z = system.encode(&sample.rois)?;
    let class = system.proxy.to_proxy_space(&z.class_embedding().to_vec())?;
    let features = system.proxy.patch_features(patches)?;
    let grid = visual_cue_map(&features, patches.grid, &class)?;
    let t = threshold.unwrap_or_else(|| default_threshold(&grid));
    Ok(threshold_mask(&grid, t))
}

/// Share of samples whose cue-map argmax falls inside the planted block.
pub fn salient_recovery(system: &CaptionSystem, dataset: &Dataset) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for s in &dataset.samples {
        let Some(block) = s.salient_block else { continue };
        let map = sample_cue_map(system, s, None)?;
        let (r, c) = argmax_cell(&map.grid);
        total += 1;
        hit += usize::from(block.contains(r, c));
    }
    if total == 0 {
        return Err(Error::Invalid("no samples carry a planted salient block".into()));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsnePoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

pub fn tsne_points(coords: &Matrix, labels: &[String]) -> Result<Vec<TsnePoint>> {
    if coords.ncols() != 2 || coords.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "coordinates {:?} vs {} labels",
            coords.dim(),
            labels.len()
        )));
    }
    Ok(coords
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(r, l)| TsnePoint {
            x: r[0],
            y: r[1],
            label: l.clone(),
        })
        .collect())
}

const TSNE_HEADER: &str = "x\ty\tlabel";

pub fn write_tsne_tsv(path: &Path, points: &[TsnePoint]) -> Result<()> {
    let mut text = String::from(TSNE_HEADER);
    text.push('\n');
    for p in points {
        // shortest round-tripping representation
        text.push_str(&format!("{:?}\t{:?}\t{}\n", p.x, p.y, p.label));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_tsne_tsv(path: &Path) -> Result<Vec<TsnePoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TSNE_HEADER) {
        return Err(Error::Invalid(format!("{}: missing t-SNE header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Invalid(format!("{}: malformed line {}", path.display(), i + 2));
            let mut cols = line.splitn(3, '\t');
            let x = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let y = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let label = cols.next().ok_or_else(bad)?.to_string();
            Ok(TsnePoint { x, y, label })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueMapExport {
    pub sample_id: String,
    pub category: String,
    pub grid_size: usize,
    pub threshold: f64,
    pub grid: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salient_block: Option<SalientBlock>,
    pub argmax: (usize, usize),
}

impl CueMapExport {
    pub fn new(sample: &FmriSample, map: &CueMap) -> Self {
        Self {
            sample_id: sample.sample_id.clone(),
            category: sample.category.clone(),
            grid_size: map.grid.nrows(),
            threshold: map.threshold,
            grid: map.grid.rows().into_iter().map(|r| r.to_vec()).collect(),
            mask: map.mask.rows().into_iter().map(|r| r.to_vec()).collect(),
            salient_block: sample.salient_block,
            argmax: argmax_cell(&map.grid),
        }
    }
}

pub fn write_cue_maps(path: &Path, maps: &[CueMapExport]) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(maps).expect("cue maps serialize");
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cue_maps(path: &Path) -> Result<Vec<CueMapExport>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clusters(n_per: usize, d: usize, sep: f64, seed: u64) -> (Matrix, Vec<String>) {
        let mut rng = rng_from_seed(seed);
        let x = Matrix::from_shape_fn((2 * n_per, d), |(i, j)| {
            let centre = if i < n_per || j > 0 { 0.0 } else { sep };
            centre + normal(&mut rng)
        });
        let labels = (0..2 * n_per).map(|i| if i < n_per { "a" } else { "b" }.to_string()).collect();
        (x, labels)
    }

    #[test]
    fn affinities_match_requested_perplexity() {
        let (x, _) = clusters(10, 5, 3.0, 1);
        let p = joint_probabilities(&x, 5.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-6);
        assert!((&p - &p.t()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let (x, _) = clusters(5, 4, 2.0, 3);
        let p = joint_probabilities(&x, 3.0).unwrap();
        let mut rng = rng_from_seed(9);
        let y = Matrix::from_shape_fn((10, 2), |_| normal(&mut rng));
        let grad = kl_gradient(&p, &y);
        let h = 1e-5;
        for i in 0..10 {
            for k in 0..2 {
                let mut plus = y.clone();
                plus[[i, k]] += h;
                let mut minus = y.clone();
                minus[[i, k]] -= h;
                let fd = (kl_divergence(&p, &plus) - kl_divergence(&p, &minus)) / (2.0 * h);
                let rel = (fd - grad[[i, k]]).abs() / fd.abs().max(grad[[i, k]].abs()).max(1e-8);
                assert!(rel < 1e-4, "({i},{k}) fd {fd} vs {}", grad[[i, k]]);
            }
        }
    }

    #[test]
    fn tsne_separates_clusters_and_lowers_kl() {
        let (x, labels) = clusters(20, 16, 8.0, 5);
        let cfg = TsneConfig {
            iterations: 400,
            ..TsneConfig::default()
        };
        let out = tsne(&x, &cfg).unwrap();
        assert!(silhouette(&out.coords, &labels).unwrap() > 0.5);
        assert!(out.final_kl() < out.kl_trace[0].1);
        let again = tsne(&x, &cfg).unwrap();
        assert_eq!(out.coords, again.coords);
    }

    #[test]
    fn tsne_rejects_bad_inputs_and_survives_duplicates() {
        assert!(tsne(&Matrix::zeros((3, 4)), &TsneConfig::default()).is_err());
        let mut x = Matrix::from_shape_fn((8, 3), |(i, j)| (i * 3 + j) as f64);
        let first = x.row(0).to_owned();
        x.row_mut(1).assign(&first);
        let cfg = TsneConfig {
            perplexity: 3.0,
            iterations: 50,
            ..TsneConfig::default()
        };
        let out = tsne(&x, &cfg).unwrap();
        assert!(out.coords.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pca_keeps_dominant_direction() {
        let x = Matrix::from_shape_fn((6, 3), |(i, j)| if j == 1 { i as f64 * 10.0 } else { (i % 2) as f64 * 0.01 });
        let low = pca(&x, 1);
        let spread = low.column(0).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(spread > 20.0);
    }

    #[test]
    fn silhouette_extremes() {
        let pts = Matrix::from_shape_vec((4, 1), vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let labels: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        assert!(silhouette(&pts, &labels).unwrap() > 0.95);
        assert!(silhouette(&pts, &vec!["a".to_string(); 4]).is_err());
    }

    #[test]
    fn distance_stats_by_hand() {
        let pts = Matrix::from_shape_vec((3, 1), vec![0.0, 1.0, 5.0]).unwrap();
        let labels: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let s = category_distance_stats(&pts, &labels).unwrap();
        assert_eq!(s.within, 1.0);
        assert_eq!(s.across, 4.5);
    }

    #[test]
    fn cue_map_signs_and_scale() {
        let class = vec![1.0, 2.0, -1.0];
        let mut patches = Matrix::zeros((4, 3));
        patches.row_mut(0).assign(&ndarray::arr1(&class));
        patches.row_mut(1).assign(&ndarray::arr1(&[-1.0, -2.0, 1.0]));
        patches.row_mut(2).assign(&ndarray::arr1(&[2.0, -1.0, 0.0]));
        let grid = visual_cue_map(&patches, 2, &class).unwrap();
        assert!((grid[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((grid[[0, 1]] + 1.0).abs() < 1e-12);
        assert_eq!(grid[[1, 0]], 0.0);
        assert_eq!(grid[[1, 1]], 0.0);
        let scaled: Vec<f64> = class.iter().map(|v| v * 7.5).collect();
        let again = visual_cue_map(&patches, 2, &scaled).unwrap();
        assert!((&grid - &again).iter().all(|v| v.abs() <= 1e-7));
        assert!(visual_cue_map(&patches, 2, &[0.0; 3]).is_err());
        assert_eq!(argmax_cell(&grid), (0, 0));
    }

    #[test]
    fn mask_extremes() {
        let grid = Matrix::from_shape_vec((2, 2), vec![0.1, -0.5, 0.9, 0.3]).unwrap();
        assert!(threshold_mask(&grid, -1.0).mask.iter().all(|&m| m));
        assert!(threshold_mask(&grid, 0.95).mask.iter().all(|&m| !m));
    }

    #[test]
    fn exports_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let points = vec![
            TsnePoint { x: 0.1, y: -2.5e-17, label: "dog".into() },
            TsnePoint { x: 1.0 / 3.0, y: 4.0, label: "car".into() },
        ];
        let path = dir.path().join("tsne.tsv");
        write_tsne_tsv(&path, &points).unwrap();
        assert_eq!(read_tsne_tsv(&path).unwrap(), points);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().skip(1).all(|l| l.split('\t').count() == 3));
    }

    proptest! {
        #[test]
        fn mask_count_is_monotone(values in proptest::collection::vec(-1.0f64..1.0, 9), a in -1.0f64..1.0, b in -1.0f64..1.0) {
            let grid = Matrix::from_shape_vec((3, 3), values).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let count = |t| threshold_mask(&grid, t).mask.iter().filter(|&&m| m).count();
            prop_assert!(count(hi) <= count(lo));
        }

        #[test]
        fn cosine_is_symmetric(u in proptest::collection::vec(-3.0f64..3.0, 4), v in proptest::collection::vec(-3.0f64..3.0, 4)) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
            let uv = visual_cue_map(&Matrix::from_shape_vec((1, 4), u.clone()).unwrap(), 1, &v).unwrap();
            let vu = visual_cue_map(&Matrix::from_shape_vec((1, 4), v).unwrap(), 1, &u).unwrap();
            prop_assert!((uv[[0, 0]] - vu[[0, 0]]).abs() < 1e-12);
        }
    }
}
