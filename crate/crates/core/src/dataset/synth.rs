//! Synthetic datasets with planted, recoverable structure.
//!
//! Per category a proxy centroid is drawn once; each stimulus gets
//! `proxy = centroid + noise`, and each ROI row is a fixed random linear map
//! of the proxy plus voxel noise. ROIs left out of `signal_rois` carry noise
//! only, which is how subset ablations get a known answer. Patch grids contain
//! a square block aligned with the centroid over a weakly aligned background.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{assemble, manifest_bytes, write_dataset_files, RawArrays};
use super::{
    Dataset, ManifestFile, ManifestSample, Normalization, RoiName, RoiSpec, SalientBlock, Split,
    Vocab,
};
use crate::autograd::Matrix;
use crate::error::{Error, Result};
use crate::rng::{normal, SeedStreams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTemplate {
    pub name: String,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_categories: usize,
    pub samples_per_category: usize,
    pub test_stimuli_per_category: usize,
    pub test_repetitions: usize,
    pub roi_specs: Vec<RoiSpec>,
    pub d_proxy: usize,
    pub patch_grid: usize,
    pub salient_block: usize,
    /// Voxel noise σ.
    pub fmri_noise: f64,
    /// Per-stimulus spread of the proxy around its category centroid.
    pub proxy_noise: f64,
    pub signal_rois: Vec<RoiName>,
    pub normalization: Normalization,
    pub templates: Vec<CategoryTemplate>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_categories: 8,
            samples_per_category: 6,
            test_stimuli_per_category: 2,
            test_repetitions: 3,
            roi_specs: default_roi_specs(),
            d_proxy: 32,
            patch_grid: 6,
            salient_block: 2,
            fmri_noise: 0.5,
            proxy_noise: 0.3,
            signal_rois: RoiName::ALL.to_vec(),
            normalization: Normalization::ZscorePerRoi,
            templates: builtin_templates(),
        }
    }
}

pub fn default_roi_specs() -> Vec<RoiSpec> {
    [24, 22, 20, 16, 18, 14, 12]
        .into_iter()
        .zip(RoiName::ALL)
        .map(|(voxel_count, name)| RoiSpec { name, voxel_count })
        .collect()
}

pub fn builtin_templates() -> Vec<CategoryTemplate> {
    let bank: [(&str, [&str; 2]); 12] = [
        ("dog", ["a brown dog running on the grass", "a small dog sitting near a door"]),
        ("car", ["a red car parked on the street", "an old car driving down a road"]),
        ("bird", ["a bird perched on a tree branch", "a small bird flying over water"]),
        ("guitar", ["a wooden guitar leaning against a wall", "a man playing an acoustic guitar"]),
        ("boat", ["a white boat floating on a lake", "a fishing boat tied to a dock"]),
        ("airplane", ["a large airplane flying in the sky", "an airplane parked at the airport"]),
        ("cat", ["a gray cat sleeping on a couch", "a cat looking out of a window"]),
        ("pizza", ["a hot pizza on a wooden table", "a slice of pizza with cheese"]),
        ("clock", ["a round clock hanging on a wall", "an old clock on a tall tower"]),
        ("horse", ["a horse standing in a green field", "a brown horse eating some hay"]),
        ("train", ["a long train moving along the tracks", "a train stopped at the station"]),
        ("flower", ["a yellow flower in a garden", "a vase of flowers on a table"]),
    ];
    bank.iter()
        .map(|(name, caps)| CategoryTemplate {
            name: name.to_string(),
            captions: caps.iter().map(|c| c.to_string()).collect(),
        })
        .collect()
}

/// Generator-side ground truth, kept for oracle tests.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub centroids: BTreeMap<String, Vec<f64>>,
    /// `voxel_count × d_proxy` map per signal ROI.
    pub roi_maps: BTreeMap<RoiName, Matrix>,
    /// Fraction of samples whose centroid-similarity argmax lies in the block.
    pub salient_recovery: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub truth: SynthTruth,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_categories == 0 {
            return bad("n_categories must be positive");
        }
        if self.n_categories > self.templates.len() {
            return bad("more categories requested than caption templates available");
        }
        if self.templates.iter().take(self.n_categories).any(|t| t.captions.is_empty()) {
            return bad("every category needs at least one caption template");
        }
        if self.patch_grid == 0 {
            return bad("patch_grid must be positive");
        }
        if self.salient_block == 0 || self.salient_block > self.patch_grid {
            return bad("salient_block must be in 1..=patch_grid");
        }
        if self.samples_per_category == 0 {
            return bad("samples_per_category must be positive");
        }
        if self.d_proxy < 2 {
            return bad("d_proxy must be at least 2");
        }
        if self.roi_specs.len() != 7 {
            return Err(Error::RoiCountMismatch {
                found: self.roi_specs.len(),
            });
        }
        if self.roi_specs.iter().any(|s| s.voxel_count == 0) {
            return bad("voxel counts must be positive");
        }
        if self.fmri_noise < 0.0 || self.proxy_noise < 0.0 {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * normal(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Grid cells with prescribed cosine to `centroid`: high inside the block.
fn planted_patches<R: Rng + ?Sized>(
    rng: &mut R,
    centroid: &[f64],
    grid: usize,
    block: usize,
) -> (Vec<f32>, SalientBlock) {
    let d = centroid.len();
    let c_norm = norm(centroid);
    let unit: Vec<f64> = centroid.iter().map(|x| x / c_norm).collect();
    let placement = SalientBlock {
        row: rng.random_range(0..=grid - block),
        col: rng.random_range(0..=grid - block),
        size: block,
    };
    let mut out = Vec::with_capacity(grid * grid * d);
    for r in 0..grid {
        for c in 0..grid {
            let cos: f64 = if placement.contains(r, c) {
                rng.random_range(0.85..0.95)
            } else {
                rng.random_range(-0.2..0.15)
            };
            let mut v = gaussian_vec(rng, d, 1.0);
            let along: f64 = v.iter().zip(&unit).map(|(a, b)| a * b).sum();
            for (x, u) in v.iter_mut().zip(&unit) {
                *x -= along * u;
            }
            let vn = norm(&v);
            let sin = (1.0 - cos * cos).sqrt();
            let scale = c_norm * rng.random_range(0.8..1.2);
            out.extend(
                unit.iter()
                    .zip(&v)
                    .map(|(u, x)| (scale * (cos * u + sin * x / vn)) as f32),
            );
        }
    }
    (out, placement)
}

fn argmax_in_block(patches: &[f32], centroid: &[f64], grid: usize, block: &SalientBlock) -> bool {
    let d = centroid.len();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for r in 0..grid {
        for c in 0..grid {
            let start = (r * grid + c) * d;
            let cell: Vec<f64> = patches[start..start + d].iter().map(|&v| v as f64).collect();
            let s = cosine(&cell, centroid);
            if s > best.0 {
                best = (s, r, c);
            }
        }
    }
    block.contains(best.1, best.2)
}

struct Stimulus {
    id: String,
    category: usize,
    caption: String,
    proxy: Vec<f32>,
    patches: Vec<f32>,
    block: SalientBlock,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    centroids: Vec<Vec<f64>>,
    maps: BTreeMap<RoiName, Matrix>,
}

impl Generator<'_> {
    fn stimulus<R: Rng + ?Sized>(&self, rng: &mut R, id: String, category: usize) -> Stimulus {
        let cfg = self.cfg;
        let mu = &self.centroids[category];
        let proxy: Vec<f64> = mu
            .iter()
            .map(|m| m + cfg.proxy_noise * normal(rng))
            .collect();
        let template = &cfg.templates[category];
        let caption = template.captions[rng.random_range(0..template.captions.len())].clone();
        let (patches, block) = planted_patches(rng, mu, cfg.patch_grid, cfg.salient_block);
        Stimulus {
            id,
            category,
            caption,
            proxy: proxy.iter().map(|&v| v as f32).collect(),
            patches,
            block,
        }
    }

    fn voxels<R: Rng + ?Sized>(&self, rng: &mut R, proxy: &[f32]) -> Vec<f32> {
        let p: Vec<f64> = proxy.iter().map(|&v| v as f64).collect();
        let p = ndarray::Array1::from(p);
        let mut out = Vec::new();
        for spec in &self.cfg.roi_specs {
            match self.maps.get(&spec.name) {
                Some(w) => {
                    let signal = w.dot(&p);
                    out.extend(
                        signal
                            .iter()
                            .map(|s| (s + self.cfg.fmri_noise * normal(rng)) as f32),
                    );
                }
                None => out.extend((0..spec.voxel_count).map(|_| {
                    (normal(rng) + self.cfg.fmri_noise * normal(rng)) as f32
                })),
            }
        }
        out
    }
}

/// Generates train and test splits under `out_dir/{train,test}`.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, seed: u64, out_dir: &Path) -> Result<SynthOutput> {
    cfg.validate()?;
    let streams = SeedStreams::new(seed);
    let mut centroid_rng = streams.stream("synth.centroids");
    let mut map_rng = streams.stream("synth.maps");
    let templates = &cfg.templates[..cfg.n_categories];

    let centroids: Vec<Vec<f64>> = (0..cfg.n_categories)
        .map(|_| gaussian_vec(&mut centroid_rng, cfg.d_proxy, 1.0))
        .collect();
    let map_std = 1.0 / (cfg.d_proxy as f64).sqrt();
    let mut maps = BTreeMap::new();
    for spec in &cfg.roi_specs {
        let w = Array2::from_shape_fn((spec.voxel_count, cfg.d_proxy), |_| {
            map_std * normal(&mut map_rng)
        });
        if cfg.signal_rois.contains(&spec.name) {
            maps.insert(spec.name, w);
        }
    }
    let gen = Generator {
        cfg,
        centroids,
        maps,
    };

    let corpus: Vec<&str> = templates
        .iter()
        .flat_map(|t| t.captions.iter().map(String::as_str))
        .collect();
    let vocab = Vocab::from_corpus(corpus);
    let pool: BTreeMap<String, Vec<String>> = templates
        .iter()
        .map(|t| (t.name.clone(), t.captions.clone()))
        .collect();

    let mut recovered = 0usize;
    let mut total = 0usize;
    let mut build_split = |split: Split, rng: &mut crate::rng::StreamRng| -> (ManifestFile, Vec<RawArrays>) {
        let (prefix, per_cat, reps) = match split {
            Split::Train => ("train", cfg.samples_per_category, 1),
            Split::Test => ("test", cfg.test_stimuli_per_category, cfg.test_repetitions.max(1)),
        };
        let mut samples = Vec::new();
        let mut raws = Vec::new();
        for cat in 0..cfg.n_categories {
            for k in 0..per_cat {
                let stim = gen.stimulus(rng, format!("{prefix}-{}-{k:03}", templates[cat].name), cat);
                total += 1;
                if argmax_in_block(&stim.patches, &gen.centroids[cat], cfg.patch_grid, &stim.block) {
                    recovered += 1;
                }
                for r in 0..reps {
                    let sample_id = if reps == 1 {
                        stim.id.clone()
                    } else {
                        format!("{}-r{r:02}", stim.id)
                    };
                    let base = format!("arrays/{sample_id}");
                    samples.push(ManifestSample {
                        sample_id: sample_id.clone(),
                        stimulus_id: stim.id.clone(),
                        category: templates[stim.category].name.clone(),
                        repetition_index: r as i64,
                        voxels: format!("{base}.voxels.f32"),
                        proxy: Some(format!("{base}.proxy.f32")),
                        patches: Some(format!("{base}.patches.f32")),
                        caption: stim.caption.clone(),
                        salient_block: Some(stim.block),
                    });
                    raws.push(RawArrays {
                        voxels: gen.voxels(rng, &stim.proxy),
                        proxy: Some(stim.proxy.clone()),
                        patches: Some(stim.patches.clone()),
                    });
                }
            }
        }
        let manifest = ManifestFile {
            split,
            roi_specs: cfg.roi_specs.clone(),
            d_proxy: cfg.d_proxy,
            patch_grid: cfg.patch_grid,
            vocabulary: "vocab.txt".into(),
            normalization: cfg.normalization,
            category_caption_pool: Some(pool.clone()),
            samples,
        };
        (manifest, raws)
    };

    let mut out = Vec::new();
    for (split, stream) in [(Split::Train, "synth.train"), (Split::Test, "synth.test")] {
        let mut rng = streams.stream(stream);
        let (manifest, raws) = build_split(split, &mut rng);
        let dir = out_dir.join(match split {
            Split::Train => "train",
            Split::Test => "test",
        });
        let path = write_dataset_files(&dir, &manifest, &vocab, &raws)?;
        let ds = assemble(
            &manifest,
            &manifest_bytes(&manifest),
            vocab.clone(),
            vocab.to_text().as_bytes(),
            &raws,
        )?;
        out.push((ds, path));
    }

    let salient_recovery = recovered as f64 / total.max(1) as f64;
    if salient_recovery < 0.95 {
        return Err(Error::Invalid(format!(
            "planted salient blocks not recoverable ({salient_recovery:.3})"
        )));
    }
    let (test, test_manifest) = out.pop().expect("two splits");
    let (train, train_manifest) = out.pop().expect("two splits");
    Ok(SynthOutput {
        train,
        test,
        train_manifest,
        test_manifest,
        truth: SynthTruth {
            centroids: templates
                .iter()
                .map(|t| t.name.clone())
                .zip(gen.centroids.clone())
                .collect(),
            roi_maps: gen.maps.clone(),
            salient_recovery,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_dataset;
    use std::fs;

    fn small() -> SynthConfig {
        SynthConfig {
            n_categories: 3,
            samples_per_category: 4,
            test_stimuli_per_category: 1,
            test_repetitions: 2,
            ..SynthConfig::default()
        }
    }

    fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().display().to_string();
                    out.insert(rel, fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn deterministic_bytes_for_fixed_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(&small(), 5, a.path()).unwrap();
        generate_synthetic_dataset(&small(), 5, b.path()).unwrap();
        assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
        let c = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(&small(), 6, c.path()).unwrap();
        assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
    }

    #[test]
    fn counts_and_pool() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_categories: 5,
            samples_per_category: 20,
            ..SynthConfig::default()
        };
        let out = generate_synthetic_dataset(&cfg, 1, dir.path()).unwrap();
        assert_eq!(out.train.category_caption_pool.len(), 5);
        assert_eq!(out.train.samples.len(), 100);
        assert_eq!(out.test.samples.len(), 5 * 2 * 3);
    }

    #[test]
    fn write_load_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_synthetic_dataset(&small(), 9, dir.path()).unwrap();
        assert_eq!(load_dataset(&out.train_manifest).unwrap(), out.train);
        assert_eq!(load_dataset(&out.test_manifest).unwrap(), out.test);
    }

    #[test]
    fn planted_block_is_recoverable() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_synthetic_dataset(&small(), 2, dir.path()).unwrap();
        assert!(out.truth.salient_recovery >= 0.95);
        for s in &out.train.samples {
            let mu = &out.truth.centroids[&s.category];
            let grid = s.patch_embeddings.as_ref().unwrap();
            let block = s.salient_block.unwrap();
            for r in 0..grid.grid {
                for c in 0..grid.grid {
                    let cos = cosine(&grid.cell(r, c).to_vec(), mu);
                    if block.contains(r, c) {
                        assert!(cos > 0.8, "{cos}");
                    } else {
                        assert!(cos < 0.2, "{cos}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        let dir = tempfile::tempdir().unwrap();
        for cfg in [
            SynthConfig { n_categories: 0, ..small() },
            SynthConfig { patch_grid: 0, ..small() },
            SynthConfig { n_categories: 50, ..small() },
        ] {
            assert!(matches!(
                generate_synthetic_dataset(&cfg, 0, dir.path()),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn linear_map_recoverable_without_noise() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_categories: 5,
            samples_per_category: 20,
            fmri_noise: 0.0,
            normalization: Normalization::None,
            ..SynthConfig::default()
        };
        let out = generate_synthetic_dataset(&cfg, 3, dir.path()).unwrap();
        let n = out.train.samples.len();
        let d = cfg.d_proxy;
        let x = nalgebra::DMatrix::from_fn(n, d, |i, j| out.train.samples[i].proxy_embedding.as_ref().unwrap()[j]);
        for (row, spec) in out.train.samples[0].rois.names.iter().enumerate() {
            let count = out.train.samples[0].rois.valid_lengths[row];
            let y = nalgebra::DMatrix::from_fn(n, count, |i, j| out.train.samples[i].rois.values[[row, j]]);
            let svd = x.clone().svd(true, true);
            let w_hat = svd.solve(&y, 1e-12).unwrap(); // d × count
            let truth = &out.truth.roi_maps[spec];
            let mut err = 0.0;
            let mut norm = 0.0;
            for i in 0..count {
                for j in 0..d {
                    err += (w_hat[(j, i)] - truth[[i, j]]).powi(2);
                    norm += truth[[i, j]].powi(2);
                }
            }
            assert!((err / norm).sqrt() < 0.1, "ROI {spec}: rel err {}", (err / norm).sqrt());
        }
    }
}
