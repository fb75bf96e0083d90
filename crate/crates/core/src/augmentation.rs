//! Same-category interpolation of brain responses.
//!
//! A virtual sample mixes the ROI matrices (and proxies) of two samples of one
//! category. Its caption is drawn from that category's pool, never blended.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{CaptionTokens, Dataset, FmriSample, PatchGrid, RoiSequence};
use crate::error::{Error, Result};

pub type CaptionPool = BTreeMap<String, Vec<CaptionTokens>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaDistribution {
    #[default]
    Uniform,
    Beta {
        a: f64,
        b: f64,
    },
}

impl AlphaDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaDistribution::Uniform => Ok(()),
            AlphaDistribution::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            AlphaDistribution::Beta { a, b } => Err(Error::Config(format!(
                "beta parameters must be positive, got ({a}, {b})"
            ))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match *self {
            AlphaDistribution::Uniform => rng.random::<f64>(),
            AlphaDistribution::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub alpha_distribution: AlphaDistribution,
    pub virtual_per_real: usize,
    /// Overrides the stream derived from the run seed when set.
    pub seed: Option<u64>,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            alpha_distribution: AlphaDistribution::Uniform,
            virtual_per_real: 1,
            seed: None,
        }
    }
}

/// Uniform draw from the category's caption pool.
pub fn sample_caption_for_category<R: Rng + ?Sized>(
    pool: &CaptionPool,
    category: &str,
    rng: &mut R,
) -> Result<CaptionTokens> {
    let captions = pool
        .get(category)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Error::UnknownCategory(category.to_string()))?;
    Ok(captions[rng.random_range(0..captions.len())].clone())
}

/// `alpha * a + (1 - alpha) * b`, with a caption resampled for the category.
pub fn interpolate_same_category<R: Rng + ?Sized>(
    a: &FmriSample,
    b: &FmriSample,
    alpha: f64,
    pool: &CaptionPool,
    rng: &mut R,
) -> Result<FmriSample> {
    if a.category != b.category {
        return Err(Error::CategoryMismatch {
            left: a.category.clone(),
            right: b.category.clone(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Alpha(alpha));
    }
    if !a.rois.same_shape(&b.rois) {
        return Err(Error::Shape(format!(
            "cannot interpolate {} and {}: ROI shapes differ",
            a.sample_id, b.sample_id
        )));
    }
    let values = &a.rois.values * alpha + &b.rois.values * (1.0 - alpha);
    let proxy_embedding = match (&a.proxy_embedding, &b.proxy_embedding) {
        (Some(pa), Some(pb)) if pa.len() == pb.len() => Some(
            pa.iter()
                .zip(pb)
                .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                .collect(),
        ),
        _ => None,
    };
    let patch_embeddings = match (&a.patch_embeddings, &b.patch_embeddings) {
        (Some(ga), Some(gb)) if ga.grid == gb.grid && ga.cells.dim() == gb.cells.dim() => Some(PatchGrid {
            grid: ga.grid,
            cells: &ga.cells * alpha + &gb.cells * (1.0 - alpha),
        }),
        _ => None,
    };
    let caption = sample_caption_for_category(pool, &a.category, rng)?;
    let id = format!("virtual:{}|{}", a.sample_id, b.sample_id);
    Ok(FmriSample {
        sample_id: id.clone(),
        stimulus_id: id,
        category: a.category.clone(),
        repetition_index: 0,
        rois: RoiSequence {
            values,
            ..a.rois.clone()
        },
        caption,
        proxy_embedding,
        patch_embeddings,
        salient_block: None,
    })
}

/// Training stream for one epoch: every real sample, then the virtual ones.
///
/// Each category contributes `virtual_per_real` virtual samples per real one.
/// Pairs of distinct samples are drawn without replacement; the pair list is
/// reshuffled if a category asks for more samples than it has pairs, and a
/// lone sample is paired with itself.
pub fn epoch_samples<R: Rng + ?Sized>(
    dataset: &Dataset,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<Vec<FmriSample>> {
    cfg.alpha_distribution.validate()?;
    let mut out = dataset.samples.clone();
    if cfg.virtual_per_real == 0 {
        return Ok(out);
    }
    let mut by_category: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_category.entry(&s.category).or_default().push(i);
    }
    for members in by_category.values() {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                pairs.push((i, j));
            }
        }
        if pairs.is_empty() {
            pairs.push((members[0], members[0]));
        }
        let wanted = members.len() * cfg.virtual_per_real;
        let mut queue: Vec<(usize, usize)> = Vec::new();
        for _ in 0..wanted {
            if queue.is_empty() {
                queue = pairs.clone();
                queue.shuffle(rng);
            }
            let (i, j) = queue.pop().expect("refilled");
            let alpha = cfg.alpha_distribution.sample(rng);
            out.push(interpolate_same_category(
                &dataset.samples[i],
                &dataset.samples[j],
                alpha,
                &dataset.category_caption_pool,
                rng,
            )?);
        }
    }
    Ok(out)
}
