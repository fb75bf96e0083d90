//! One function per subcommand; each writes its artifacts and a run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use neurocap_core::analysis::{self, CueMapExport, DistanceStats, TsneConfig};
use neurocap_core::dataset::synth::{generate_synthetic_dataset, SynthConfig, SynthOutput};
use neurocap_core::dataset::{load_dataset, Dataset, MANIFEST_NAME};
use neurocap_core::lm::GenerationConfig;
use neurocap_core::metrics::{self, MetricReport};
use neurocap_core::model::{CaptionSystem, FrozenDecoder};
use neurocap_core::training::{self, PretrainConfig, PretrainRow, TrainConfig};
use neurocap_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::run::{read_json, write_json, RunManifest};

pub const DECODER_DIR: &str = "decoder";
pub const MODEL_DIR: &str = "model";
pub const PREDICTIONS_NAME: &str = "predictions.tsv";
pub const REPORT_NAME: &str = "report.json";

/// Reads a JSON config, or the defaults when no path is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Accepts a dataset directory or its manifest file.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    }
}

pub fn open_dataset(path: &Path) -> Result<Dataset> {
    let manifest = manifest_path(path);
    if !manifest.exists() {
        return Err(Error::MissingArtifact(manifest));
    }
    load_dataset(&manifest)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

pub fn cmd_synth_data(cfg: &SynthConfig, config_path: Option<&Path>, seed: u64, out: &Path) -> Result<SynthOutput> {
    let output = generate_synthetic_dataset(cfg, seed, out)?;
    write_json(&out.join("truth.json"), &TruthSummary::of(&output))?;
    RunManifest::new("synth-data", config_path, cfg, seed, &[])?
        .output(&output.train_manifest)
        .output(&output.test_manifest)
        .output(out.join("truth.json"))
        .write(out)?;
    Ok(output)
}

/// Generator facts worth keeping next to the data.
#[derive(Debug, Serialize, Deserialize)]
struct TruthSummary {
    train_fingerprint: String,
    test_fingerprint: String,
    salient_recovery: f64,
    categories: Vec<String>,
}

impl TruthSummary {
    fn of(o: &SynthOutput) -> Self {
        Self {
            train_fingerprint: o.train.fingerprint.clone(),
            test_fingerprint: o.test.fingerprint.clone(),
            salient_recovery: o.truth.salient_recovery,
            categories: o.truth.centroids.keys().cloned().collect(),
        }
    }
}

pub fn write_pretrain_log(path: &Path, rows: &[PretrainRow]) -> Result<()> {
    let mut text = String::from("step\tloss\twall_ms\n");
    for r in rows {
        text.push_str(&format!("{}\t{:.6}\t{}\n", r.step, r.loss, r.wall_ms));
    }
    fs::write(path, text).map_err(io(path))
}

pub fn cmd_pretrain_lm(
    data: &Path,
    cfg: &PretrainConfig,
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<FrozenDecoder> {
    let dataset = open_dataset(data)?;
    let (frozen, log) = training::pretrain_lm(&dataset.caption_corpus(), &dataset.vocab, cfg, seed)?;
    let dir = out.join(DECODER_DIR);
    frozen.save(&dir)?;
    let log_path = out.join("pretrain_log.tsv");
    write_pretrain_log(&log_path, &log)?;
    RunManifest::new("pretrain-lm", config_path, cfg, seed, &[&manifest_path(data)])?
        .output(&dir)
        .output(&log_path)
        .write(out)?;
    Ok(frozen)
}

/// Accepts a pretrain output directory or the checkpoint directory itself.
pub fn decoder_path(path: &Path) -> PathBuf {
    let nested = path.join(DECODER_DIR);
    if nested.is_dir() { nested } else { path.to_path_buf() }
}

pub fn model_path(path: &Path) -> PathBuf {
    let nested = path.join(MODEL_DIR);
    if nested.is_dir() { nested } else { path.to_path_buf() }
}

pub fn cmd_train(
    data: &Path,
    decoder: &Path,
    cfg: &TrainConfig,
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<CaptionSystem> {
    let dataset = open_dataset(data)?;
    let decoder = decoder_path(decoder);
    require(&decoder)?;
    let frozen = FrozenDecoder::load(&decoder)?;
    let output = training::train(&dataset, frozen, cfg, seed, |row| {
        if row.step % 50 == 0 {
            log::info!("step {} l_mind {:.4}", row.step, row.l_mind);
        }
    })?;
    let dir = out.join(MODEL_DIR);
    output.system.save(&dir)?;
    let log_path = out.join("train_log.tsv");
    training::write_log_tsv(&log_path, &output.log)?;
    RunManifest::new("train", config_path, cfg, seed, &[&manifest_path(data), &decoder])?
        .output(&dir)
        .output(&log_path)
        .write(out)?;
    Ok(output.system)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub generation: GenerationConfig,
    /// Decode one caption per stimulus from its repetition-averaged response.
    pub average_repetitions: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            average_repetitions: true,
        }
    }
}

/// `(id, caption)` rows in dataset order.
pub fn decode_dataset(system: &CaptionSystem, dataset: &Dataset, cfg: &DecodeConfig) -> Result<Vec<(String, String)>> {
    let ds = if cfg.average_repetitions {
        dataset.average_repetitions()?
    } else {
        dataset.clone()
    };
    ds.samples
        .iter()
        .map(|s| {
            let tokens = system.caption(s, &cfg.generation)?;
            let id = if cfg.average_repetitions { &s.stimulus_id } else { &s.sample_id };
            Ok((id.clone(), dataset.vocab.decode(tokens.ids())))
        })
        .collect()
}

pub fn cmd_decode(
    model: &Path,
    data: &Path,
    cfg: &DecodeConfig,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<Vec<(String, String)>> {
    let model = model_path(model);
    require(&model)?;
    let system = CaptionSystem::load(&model)?;
    let dataset = open_dataset(data)?;
    if system.frozen.vocab_fingerprint != dataset.vocab.fingerprint() {
        return Err(Error::VocabMismatch("model and dataset vocabularies differ".into()));
    }
    let rows = decode_dataset(&system, &dataset, cfg)?;
    fs::create_dir_all(out).map_err(io(out))?;
    let path = out.join(PREDICTIONS_NAME);
    metrics::write_predictions(&path, &rows)?;
    RunManifest::new("decode", config_path, cfg, 0, &[&model, &manifest_path(data)])?
        .output(&path)
        .write(out)?;
    Ok(rows)
}

/// Accepts a predictions file or a decode output directory.
pub fn predictions_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(PREDICTIONS_NAME)
    } else {
        path.to_path_buf()
    }
}

pub fn cmd_evaluate(predictions: &Path, data: &Path, out: &Path) -> Result<MetricReport> {
    let predictions = predictions_path(predictions);
    require(&predictions)?;
    let rows = metrics::read_predictions(&predictions)?;
    let dataset = open_dataset(data)?;
    let report = metrics::evaluate_corpus(&rows, &dataset)?;
    fs::create_dir_all(out).map_err(io(out))?;
    let path = out.join(REPORT_NAME);
    report.write_json(&path)?;
    RunManifest::new("evaluate", None, &serde_json::Value::Null, 0, &[&predictions, &manifest_path(data)])?
        .output(&path)
        .write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneSummary {
    pub n_points: usize,
    pub silhouette: f64,
    pub final_kl: f64,
    /// Distances between class embeddings before projection.
    pub class_embedding_distances: DistanceStats,
}

pub fn cmd_tsne_export(
    model: &Path,
    data: &Path,
    cfg: &TsneConfig,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<TsneSummary> {
    let model = model_path(model);
    require(&model)?;
    let system = CaptionSystem::load(&model)?;
    let dataset = open_dataset(data)?;
    let (embeddings, labels) = analysis::class_embeddings(&system, &dataset.samples)?;
    let run = analysis::tsne(&embeddings, cfg)?;
    let summary = TsneSummary {
        n_points: labels.len(),
        silhouette: analysis::silhouette(&run.coords, &labels)?,
        final_kl: run.final_kl(),
        class_embedding_distances: analysis::category_distance_stats(&embeddings, &labels)?,
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let tsv = out.join("tsne.tsv");
    analysis::write_tsne_tsv(&tsv, &analysis::tsne_points(&run.coords, &labels)?)?;
    let json = out.join("tsne_summary.json");
    write_json(&json, &summary)?;
    RunManifest::new("tsne-export", config_path, cfg, cfg.seed, &[&model, &manifest_path(data)])?
        .output(&tsv)
        .output(&json)
        .write(out)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CueSummary {
    pub n_maps: usize,
    pub grid_size: usize,
    /// Share of samples with a planted block whose argmax lands inside it.
    pub salient_recovery: Option<f64>,
}

pub fn cmd_visualize_cues(model: &Path, data: &Path, threshold: Option<f64>, out: &Path) -> Result<CueSummary> {
    let model = model_path(model);
    require(&model)?;
    let system = CaptionSystem::load(&model)?;
    let dataset = open_dataset(data)?;
    let mut maps = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let map = analysis::sample_cue_map(&system, s, threshold)?;
        maps.push(CueMapExport::new(s, &map));
    }
    let planted: Vec<&CueMapExport> = maps.iter().filter(|m| m.salient_block.is_some()).collect();
    let salient_recovery = (!planted.is_empty()).then(|| {
        let hits = planted
            .iter()
            .filter(|m| m.salient_block.is_some_and(|b| b.contains(m.argmax.0, m.argmax.1)))
            .count();
        hits as f64 / planted.len() as f64
    });
    let summary = CueSummary {
        n_maps: maps.len(),
        grid_size: dataset.patch_grid,
        salient_recovery,
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let path = out.join("cue_maps.json");
    analysis::write_cue_maps(&path, &maps)?;
    let summary_path = out.join("cue_summary.json");
    write_json(&summary_path, &summary)?;
    RunManifest::new("visualize-cues", None, &threshold, 0, &[&model, &manifest_path(data)])?
        .output(&path)
        .output(&summary_path)
        .write(out)?;
    Ok(summary)
}
