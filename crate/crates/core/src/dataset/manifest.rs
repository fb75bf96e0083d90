//! On-disk dataset layout: a JSON manifest, a vocabulary file and one raw
//! little-endian `f32` file per sample per array.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    flatten_and_pad, zscore, CaptionTokens, Dataset, FmriSample, Normalization, PatchGrid, RoiName,
    RoiSpec, SalientBlock, Split, Vocab, PAD_VALUE,
};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub split: Split,
    pub roi_specs: Vec<RoiSpec>,
    pub d_proxy: usize,
    pub patch_grid: usize,
    pub vocabulary: String,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_caption_pool: Option<BTreeMap<String, Vec<String>>>,
    pub samples: Vec<ManifestSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub sample_id: String,
    pub stimulus_id: String,
    pub category: String,
    pub repetition_index: i64,
    /// All ROIs concatenated in `roi_specs` order.
    pub voxels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches: Option<String>,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salient_block: Option<SalientBlock>,
}

/// Array payloads of one sample, as read from or written to disk.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawArrays {
    pub voxels: Vec<f32>,
    pub proxy: Option<Vec<f32>>,
    pub patches: Option<Vec<f32>>,
}

pub(crate) fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::ArrayLength {
            what: path.display().to_string(),
            expected: bytes.len() / 4 + 1,
            found: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_len(what: String, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ArrayLength {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

fn validate_specs(specs: &[RoiSpec]) -> Result<()> {
    if specs.len() != RoiName::ALL.len() {
        return Err(Error::RoiCountMismatch { found: specs.len() });
    }
    let names: BTreeSet<RoiName> = specs.iter().map(|s| s.name).collect();
    if names.len() != specs.len() {
        return Err(Error::Invalid("duplicate ROI name in roi_specs".into()));
    }
    if let Some(s) = specs.iter().find(|s| s.voxel_count == 0) {
        return Err(Error::Invalid(format!("ROI {} has zero voxels", s.name)));
    }
    Ok(())
}

/// Reads a dataset; samples keep manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest_bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: ManifestFile =
        serde_json::from_slice(&manifest_bytes).map_err(|e| Error::json(manifest_path, e))?;
    validate_specs(&manifest.roi_specs)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let vocab_path = root.join(&manifest.vocabulary);
    let vocab_text = fs::read(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocab::read(&vocab_path)?;

    let mut raws = Vec::with_capacity(manifest.samples.len());
    for s in &manifest.samples {
        let voxels = read_f32(&root.join(&s.voxels))?;
        let proxy = s.proxy.as_ref().map(|p| read_f32(&root.join(p))).transpose()?;
        let patches = s.patches.as_ref().map(|p| read_f32(&root.join(p))).transpose()?;
        raws.push(RawArrays {
            voxels,
            proxy,
            patches,
        });
    }
    assemble(&manifest, &manifest_bytes, vocab, &vocab_text, &raws)
}

pub(crate) fn fingerprint(manifest_bytes: &[u8], vocab_bytes: &[u8], raws: &[RawArrays]) -> String {
    let mut fp = Fingerprinter::new();
    fp.chunk(manifest_bytes).chunk(vocab_bytes);
    for r in raws {
        fp.chunk(&f32_bytes(&r.voxels));
        if let Some(p) = &r.proxy {
            fp.chunk(&f32_bytes(p));
        }
        if let Some(p) = &r.patches {
            fp.chunk(&f32_bytes(p));
        }
    }
    fp.finish()
}

/// Builds the in-memory dataset from a manifest and raw arrays.
pub(crate) fn assemble(
    manifest: &ManifestFile,
    manifest_bytes: &[u8],
    vocab: Vocab,
    vocab_bytes: &[u8],
    raws: &[RawArrays],
) -> Result<Dataset> {
    validate_specs(&manifest.roi_specs)?;
    let declared: usize = manifest.roi_specs.iter().map(|s| s.voxel_count).sum();
    let encode = |sample_id: &str, text: &str| -> Result<CaptionTokens> {
        vocab
            .encode(text)
            .map(CaptionTokens)
            .map_err(|token| Error::UnknownToken {
                sample_id: sample_id.to_string(),
                token,
            })
    };

    let mut samples = Vec::with_capacity(manifest.samples.len());
    for (meta, raw) in manifest.samples.iter().zip(raws) {
        check_len(format!("voxels of {}", meta.sample_id), declared, raw.voxels.len())?;
        let mut offset = 0;
        let mut per_roi: Vec<(RoiName, Vec<f64>)> = Vec::with_capacity(7);
        for spec in &manifest.roi_specs {
            let mut row: Vec<f64> = raw.voxels[offset..offset + spec.voxel_count]
                .iter()
                .map(|&v| v as f64)
                .collect();
            offset += spec.voxel_count;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteVoxel {
                    roi: spec.name.to_string(),
                });
            }
            if manifest.normalization == Normalization::ZscorePerRoi {
                zscore(&mut row);
            }
            per_roi.push((spec.name, row));
        }
        per_roi.sort_by_key(|(name, _)| *name);
        let rois = flatten_and_pad(&per_roi, PAD_VALUE)?;

        let proxy_embedding = match &raw.proxy {
            Some(p) => {
                check_len(format!("proxy of {}", meta.sample_id), manifest.d_proxy, p.len())?;
                Some(p.iter().map(|&v| v as f64).collect())
            }
            None => None,
        };
        let patch_embeddings = match &raw.patches {
            Some(p) => {
                let g = manifest.patch_grid;
                check_len(
                    format!("patches of {}", meta.sample_id),
                    g * g * manifest.d_proxy,
                    p.len(),
                )?;
                let cells = Array2::from_shape_vec(
                    (g * g, manifest.d_proxy),
                    p.iter().map(|&v| v as f64).collect(),
                )
                .expect("length checked");
                Some(PatchGrid { grid: g, cells })
            }
            None => None,
        };
        let caption = encode(&meta.sample_id, &meta.caption)?;
        if caption.is_empty() {
            return Err(Error::Invalid(format!("empty caption for {}", meta.sample_id)));
        }
        samples.push(FmriSample {
            sample_id: meta.sample_id.clone(),
            stimulus_id: meta.stimulus_id.clone(),
            category: meta.category.clone(),
            repetition_index: meta.repetition_index,
            rois,
            caption,
            proxy_embedding,
            patch_embeddings,
            salient_block: meta.salient_block,
        });
    }

    let mut pool: BTreeMap<String, Vec<CaptionTokens>> = BTreeMap::new();
    match &manifest.category_caption_pool {
        Some(declared_pool) => {
            for (cat, texts) in declared_pool {
                let entry = pool.entry(cat.clone()).or_default();
                for t in texts {
                    entry.push(encode(&format!("pool:{cat}"), t)?);
                }
            }
        }
        None => {
            for s in &samples {
                let entry = pool.entry(s.category.clone()).or_default();
                if !entry.contains(&s.caption) {
                    entry.push(s.caption.clone());
                }
            }
        }
    }
    if let Some(s) = samples.iter().find(|s| !pool.contains_key(&s.category)) {
        return Err(Error::UnknownCategory(s.category.clone()));
    }

    Ok(Dataset {
        split: manifest.split,
        samples,
        roi_specs: manifest.roi_specs.clone(),
        vocab,
        d_proxy: manifest.d_proxy,
        patch_grid: manifest.patch_grid,
        category_caption_pool: pool,
        normalization: manifest.normalization,
        fingerprint: fingerprint(manifest_bytes, vocab_bytes, raws),
    })
}

/// Serialized manifest bytes; shared by the writer and the fingerprint.
pub(crate) fn manifest_bytes(manifest: &ManifestFile) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes a manifest, its vocabulary and the array files under `dir`.
pub(crate) fn write_dataset_files(
    dir: &Path,
    manifest: &ManifestFile,
    vocab: &Vocab,
    raws: &[RawArrays],
) -> Result<PathBuf> {
    let write = |path: PathBuf, bytes: &[u8]| -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    for (meta, raw) in manifest.samples.iter().zip(raws) {
        write(dir.join(&meta.voxels), &f32_bytes(&raw.voxels))?;
        if let (Some(name), Some(p)) = (&meta.proxy, &raw.proxy) {
            write(dir.join(name), &f32_bytes(p))?;
        }
        if let (Some(name), Some(p)) = (&meta.patches, &raw.patches) {
            write(dir.join(name), &f32_bytes(p))?;
        }
    }
    write(dir.join(&manifest.vocabulary), vocab.to_text().as_bytes())?;
    let path = dir.join(MANIFEST_NAME);
    write(path.clone(), &manifest_bytes(manifest))?;
    Ok(path)
}
