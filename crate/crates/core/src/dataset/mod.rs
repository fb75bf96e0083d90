//! Data model for ROI-structured brain responses paired with captions.
//!
//! A sample's voxel responses are grouped into the seven visual ROIs, each ROI
//! flattened into one row and right-padded to a common width, giving a `T×H`
//! matrix whose rows become encoder tokens.

mod manifest;
pub mod synth;
pub mod vocab;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_dataset, ManifestFile, ManifestSample, MANIFEST_NAME};
pub use vocab::Vocab;

pub const PAD_VALUE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoiName {
    V1,
    V2,
    V3,
    V4,
    LOC,
    FFA,
    PPA,
}

impl RoiName {
    pub const ALL: [RoiName; 7] = [
        RoiName::V1,
        RoiName::V2,
        RoiName::V3,
        RoiName::V4,
        RoiName::LOC,
        RoiName::FFA,
        RoiName::PPA,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoiName::V1 => "V1",
            RoiName::V2 => "V2",
            RoiName::V3 => "V3",
            RoiName::V4 => "V4",
            RoiName::LOC => "LOC",
            RoiName::FFA => "FFA",
            RoiName::PPA => "PPA",
        }
    }
}

impl fmt::Display for RoiName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoiName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoiName::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown ROI {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub name: RoiName,
    pub voxel_count: usize,
}

/// Cortical subsets used for the ROI ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoiSubset {
    LVC,
    HVC,
    VC,
}

impl RoiSubset {
    pub const ALL: [RoiSubset; 3] = [RoiSubset::LVC, RoiSubset::HVC, RoiSubset::VC];

    pub fn rois(self) -> &'static [RoiName] {
        match self {
            RoiSubset::LVC => &[RoiName::V1, RoiName::V2, RoiName::V3],
            RoiSubset::HVC => &[RoiName::LOC, RoiName::FFA, RoiName::PPA],
            RoiSubset::VC => &RoiName::ALL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RoiSubset::LVC => "LVC (V1 + V2 + V3)",
            RoiSubset::HVC => "HVC (LOC + FFA + PPA)",
            RoiSubset::VC => "VC (V4 + LVC + HVC)",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            RoiSubset::LVC => "LVC",
            RoiSubset::HVC => "HVC",
            RoiSubset::VC => "VC",
        }
    }

    /// Total declared voxels of the subset's ROIs.
    pub fn voxel_count(self, specs: &[RoiSpec]) -> usize {
        specs
            .iter()
            .filter(|s| self.rois().contains(&s.name))
            .map(|s| s.voxel_count)
            .sum()
    }
}

impl FromStr for RoiSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LVC" => Ok(RoiSubset::LVC),
            "HVC" => Ok(RoiSubset::HVC),
            "VC" => Ok(RoiSubset::VC),
            other => Err(Error::Invalid(format!("unknown ROI subset {other:?}"))),
        }
    }
}

/// Per-ROI rows, right-padded to a common width.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSequence {
    pub values: Array2<f64>,
    pub valid_lengths: Vec<usize>,
    pub names: Vec<RoiName>,
}

impl RoiSequence {
    pub fn n_rois(&self) -> usize {
        self.values.nrows()
    }

    pub fn pad_width(&self) -> usize {
        self.values.ncols()
    }

    pub fn total_valid(&self) -> usize {
        self.valid_lengths.iter().sum()
    }

    /// Inverse of [`flatten_and_pad`].
    pub fn strip_padding(&self) -> Vec<Vec<f64>> {
        self.values
            .rows()
            .into_iter()
            .zip(&self.valid_lengths)
            .map(|(row, &n)| row.iter().take(n).copied().collect())
            .collect()
    }

    pub fn same_shape(&self, other: &RoiSequence) -> bool {
        self.values.dim() == other.values.dim()
            && self.valid_lengths == other.valid_lengths
            && self.names == other.names
    }
}

/// Stacks per-ROI voxel arrays into rows padded with `pad_value`.
pub fn flatten_and_pad(raw: &[(RoiName, Vec<f64>)], pad_value: f64) -> Result<RoiSequence> {
    if raw.is_empty() {
        return Err(Error::Invalid("no ROI arrays given".into()));
    }
    for (name, values) in raw {
        if values.is_empty() {
            return Err(Error::Invalid(format!("ROI {name} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteVoxel {
                roi: name.to_string(),
            });
        }
    }
    let width = raw.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut values = Array2::from_elem((raw.len(), width), pad_value);
    for (i, (_, row)) in raw.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(RoiSequence {
        values,
        valid_lengths: raw.iter().map(|(_, v)| v.len()).collect(),
        names: raw.iter().map(|(n, _)| *n).collect(),
    })
}

/// Per-row z-score; constant rows become all zeros.
pub fn zscore(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = if std > 1e-12 { (*v - mean) / std } else { 0.0 };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    ZscorePerRoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CaptionTokens(pub Vec<u32>);

impl CaptionTokens {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }
}

/// `G×G` grid of `dim`-vectors stored row-major, one row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub grid: usize,
    pub cells: Array2<f64>,
}

impl PatchGrid {
    pub fn dim(&self) -> usize {
        self.cells.ncols()
    }

    pub fn cell(&self, row: usize, col: usize) -> ndarray::ArrayView1<'_, f64> {
        self.cells.row(row * self.grid + col)
    }

    pub fn mean_cell(&self) -> Vec<f64> {
        self.cells
            .mean_axis(ndarray::Axis(0))
            .map(|m| m.to_vec())
            .unwrap_or_default()
    }
}

/// Location of the planted salient square in a synthetic patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalientBlock {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

impl SalientBlock {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.size && col >= self.col && col < self.col + self.size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmriSample {
    pub sample_id: String,
    pub stimulus_id: String,
    pub category: String,
    /// `-1` marks an average over repetitions.
    pub repetition_index: i64,
    pub rois: RoiSequence,
    pub caption: CaptionTokens,
    pub proxy_embedding: Option<Vec<f64>>,
    pub patch_embeddings: Option<PatchGrid>,
    pub salient_block: Option<SalientBlock>,
}

pub const AVERAGED: i64 = -1;

/// Keeps only the subset's ROI rows and trims padding to the new maximum.
pub fn select_roi_subset(sample: &FmriSample, subset: RoiSubset) -> FmriSample {
    let keep: Vec<usize> = sample
        .rois
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| subset.rois().contains(n))
        .map(|(i, _)| i)
        .collect();
    if keep.len() == sample.rois.n_rois() {
        return sample.clone();
    }
    let valid: Vec<usize> = keep.iter().map(|&i| sample.rois.valid_lengths[i]).collect();
    let width = valid.iter().copied().max().unwrap_or(0);
    let mut values = Array2::from_elem((keep.len(), width), PAD_VALUE);
    for (r, &i) in keep.iter().enumerate() {
        values
            .row_mut(r)
            .assign(&sample.rois.values.slice(s![i, ..width]));
    }
    FmriSample {
        rois: RoiSequence {
            values,
            valid_lengths: valid,
            names: keep.iter().map(|&i| sample.rois.names[i]).collect(),
        },
        ..sample.clone()
    }
}

/// Element-wise mean over repetitions of one stimulus.
///
/// Inputs are put in canonical order (repetition index, then sample id) first,
/// so the result does not depend on the order they were passed in.
pub fn average_repetitions(samples: &[FmriSample]) -> Result<FmriSample> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Invalid("no samples to average".into()))?;
    let mut stimuli: Vec<String> = samples.iter().map(|s| s.stimulus_id.clone()).collect();
    stimuli.dedup();
    if samples.iter().any(|s| s.stimulus_id != first.stimulus_id) {
        stimuli.sort();
        stimuli.dedup();
        return Err(Error::MixedStimulus(stimuli));
    }
    if samples.iter().any(|s| !s.rois.same_shape(&first.rois)) {
        return Err(Error::Shape("repetitions have different ROI shapes".into()));
    }
    let mut ordered: Vec<&FmriSample> = samples.iter().collect();
    ordered.sort_by(|a, b| {
        a.repetition_index
            .cmp(&b.repetition_index)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    let head = ordered[0];
    let mut sum = Array2::<f64>::zeros(head.rois.values.dim());
    for s in &ordered {
        sum += &s.rois.values;
    }
    sum /= ordered.len() as f64;
    Ok(FmriSample {
        sample_id: head.stimulus_id.clone(),
        repetition_index: AVERAGED,
        rois: RoiSequence {
            values: sum,
            ..head.rois.clone()
        },
        ..head.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub samples: Vec<FmriSample>,
    pub roi_specs: Vec<RoiSpec>,
    pub vocab: Vocab,
    pub d_proxy: usize,
    pub patch_grid: usize,
    pub category_caption_pool: BTreeMap<String, Vec<CaptionTokens>>,
    pub normalization: Normalization,
    /// Content hash of the manifest, vocabulary and array bytes.
    pub fingerprint: String,
}

impl Dataset {
    /// Pad width `H`: the largest declared ROI.
    pub fn pad_width(&self) -> usize {
        self.roi_specs.iter().map(|s| s.voxel_count).max().unwrap_or(0)
    }

    pub fn categories(&self) -> Vec<String> {
        self.category_caption_pool.keys().cloned().collect()
    }

    /// Every caption the dataset knows about, samples first then pools.
    pub fn caption_corpus(&self) -> Vec<CaptionTokens> {
        let mut out: Vec<CaptionTokens> = self.samples.iter().map(|s| s.caption.clone()).collect();
        for pool in self.category_caption_pool.values() {
            out.extend(pool.iter().cloned());
        }
        out
    }

    pub fn with_subset(&self, subset: RoiSubset) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| select_roi_subset(s, subset))
                .collect(),
            roi_specs: self
                .roi_specs
                .iter()
                .filter(|s| subset.rois().contains(&s.name))
                .copied()
                .collect(),
            ..self.clone()
        }
    }

    /// Collapses repetitions of each stimulus, in order of first appearance.
    pub fn average_repetitions(&self) -> Result<Dataset> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<FmriSample>> = BTreeMap::new();
        for s in &self.samples {
            if !groups.contains_key(&s.stimulus_id) {
                order.push(s.stimulus_id.clone());
            }
            groups.entry(s.stimulus_id.clone()).or_default().push(s.clone());
        }
        let samples = order
            .iter()
            .map(|id| average_repetitions(&groups[id]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            samples,
            ..self.clone()
        })
    }

    /// Reference captions per sample id: every caption seen for its stimulus.
    pub fn references(&self) -> BTreeMap<String, Vec<CaptionTokens>> {
        let mut by_stimulus: BTreeMap<&str, Vec<CaptionTokens>> = BTreeMap::new();
        for s in &self.samples {
            let refs = by_stimulus.entry(&s.stimulus_id).or_default();
            if !refs.contains(&s.caption) {
                refs.push(s.caption.clone());
            }
        }
        self.samples
            .iter()
            .map(|s| (s.sample_id.clone(), by_stimulus[s.stimulus_id.as_str()].clone()))
            .collect()
    }
}
