//! Experiment grids: the ROI ablation and the encoder-size × scaling-factor
//! variant grid. Each cell lives in its own directory and is skipped on
//! rerun when its recorded fingerprint still matches.

use std::fs;
use std::path::{Path, PathBuf};

use neurocap_core::dataset::synth::SynthConfig;
use neurocap_core::dataset::{Dataset, RoiName, RoiSpec, RoiSubset};
use neurocap_core::encoder::EncoderVariant;
use neurocap_core::fingerprint::Fingerprinter;
use neurocap_core::lm::BridgeConfig;
use neurocap_core::metrics::{self, MetricReport};
use neurocap_core::model::FrozenDecoder;
use neurocap_core::training::{self, EncoderSettings, PretrainConfig, TrainConfig};
use neurocap_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::commands::{self, DecodeConfig, DECODER_DIR, MODEL_DIR, PREDICTIONS_NAME, REPORT_NAME};
use crate::run::{read_json, write_json, RunManifest};

pub const CELL_NAME: &str = "cell.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Used only when no dataset root is supplied.
    pub synth: SynthConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl ExperimentConfig {
    /// Defaults for the ablation: category signal planted in HVC rows only.
    pub fn ablation_default() -> Self {
        let mut cfg = Self::default();
        cfg.synth.signal_rois = RoiSubset::HVC.rois().to_vec();
        cfg
    }
}

/// Train and test splits, either read from `root/{train,test}` or
/// synthesized into `out/data`.
pub fn experiment_data(cfg: &ExperimentConfig, data_root: Option<&Path>, seed: u64, out: &Path) -> Result<(Dataset, Dataset)> {
    match data_root {
        Some(root) => Ok((
            commands::open_dataset(&root.join("train"))?,
            commands::open_dataset(&root.join("test"))?,
        )),
        None => {
            let dir = out.join("data");
            let synth = commands::cmd_synth_data(&cfg.synth, None, seed, &dir)?;
            Ok((synth.train, synth.test))
        }
    }
}

fn cell_fingerprint(parts: &[&[u8]]) -> String {
    let mut fp = Fingerprinter::new();
    for p in parts {
        fp.chunk(p);
    }
    fp.finish()
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    serde_json::to_vec(v).expect("serializes")
}

#[derive(Debug, Serialize, Deserialize)]
struct DecoderRecord {
    fingerprint: String,
}

/// Loads `decoder` if given; otherwise pretrains into `out/decoder`, reusing
/// an earlier result with the same inputs.
pub fn experiment_decoder(
    cfg: &PretrainConfig,
    train: &Dataset,
    decoder: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<FrozenDecoder> {
    if let Some(path) = decoder {
        let path = commands::decoder_path(path);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        return FrozenDecoder::load(&path);
    }
    let dir = out.join(DECODER_DIR);
    let record_path = out.join("decoder.json");
    let fingerprint = cell_fingerprint(&[&json_bytes(cfg), &seed.to_le_bytes(), train.fingerprint.as_bytes()]);
    if let Ok(record) = read_json::<DecoderRecord>(&record_path) {
        if record.fingerprint == fingerprint && dir.exists() {
            log::info!("reusing pretrained decoder in {}", dir.display());
            return FrozenDecoder::load(&dir);
        }
    }
    let (frozen, log) = training::pretrain_lm(&train.caption_corpus(), &train.vocab, cfg, seed)?;
    frozen.save(&dir)?;
    commands::write_pretrain_log(&out.join("pretrain_log.tsv"), &log)?;
    write_json(&record_path, &DecoderRecord { fingerprint })?;
    Ok(frozen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub fingerprint: String,
    pub trainable_params: usize,
    /// Encoder sequence length, class token included.
    pub encoder_tokens: usize,
    pub report: MetricReport,
}

/// Trains, decodes and scores one configuration in `dir`, or returns the
/// stored record when the fingerprint is unchanged. The flag says whether
/// the record was reused.
pub fn run_cell(
    train: &Dataset,
    test: &Dataset,
    frozen: &FrozenDecoder,
    train_cfg: &TrainConfig,
    decode_cfg: &DecodeConfig,
    seed: u64,
    dir: &Path,
) -> Result<(CellRecord, bool)> {
    let decoder_hash = {
        let mut fp = Fingerprinter::new();
        for (name, m) in frozen.store.iter() {
            fp.chunk(name.as_bytes());
            fp.chunk(&m.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
        }
        fp.finish()
    };
    let fingerprint = cell_fingerprint(&[
        &json_bytes(train_cfg),
        &json_bytes(decode_cfg),
        &seed.to_le_bytes(),
        train.fingerprint.as_bytes(),
        test.fingerprint.as_bytes(),
        decoder_hash.as_bytes(),
    ]);
    let record_path = dir.join(CELL_NAME);
    if let Ok(record) = read_json::<CellRecord>(&record_path) {
        if record.fingerprint == fingerprint {
            log::info!("skipping completed cell {}", dir.display());
            return Ok((record, true));
        }
    }
    let output = training::train(train, frozen.clone(), train_cfg, seed, |_| {})?;
    let system = output.system;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    system.save(&dir.join(MODEL_DIR))?;
    training::write_log_tsv(&dir.join("train_log.tsv"), &output.log)?;
    let rows = commands::decode_dataset(&system, test, decode_cfg)?;
    metrics::write_predictions(&dir.join(PREDICTIONS_NAME), &rows)?;
    let report = metrics::evaluate_corpus(&rows, test)?;
    report.write_json(&dir.join(REPORT_NAME))?;
    let record = CellRecord {
        fingerprint,
        trainable_params: system.trainable_params(),
        encoder_tokens: system.config.encoder.n_tokens + 1,
        report,
    };
    write_json(&record_path, &record)?;
    Ok((record, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreColumns {
    pub b1: f64,
    pub b4: f64,
    pub rouge_l: f64,
    pub meteor_ex: f64,
    pub cider: f64,
}

impl From<&MetricReport> for ScoreColumns {
    fn from(r: &MetricReport) -> Self {
        Self {
            b1: r.b1,
            b4: r.b4,
            rouge_l: r.rouge_l,
            meteor_ex: r.meteor_ex,
            cider: r.cider,
        }
    }
}

impl ScoreColumns {
    const HEADER: &'static str = "B@1\tB@4\tROUGE-L\tMETEOR-ex\tCIDEr";

    fn tsv(&self) -> String {
        format!(
            "{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}",
            self.b1, self.b4, self.rouge_l, self.meteor_ex, self.cider
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: RoiSubset,
    pub label: String,
    pub voxel_count: usize,
    /// Encoder tokens, class token included.
    pub n_tokens: usize,
    pub scores: ScoreColumns,
}

/// Voxel totals per ablation subset for a set of ROI declarations.
pub fn voxel_table(specs: &[RoiSpec]) -> Vec<(RoiSubset, usize)> {
    RoiSubset::ALL.iter().map(|&s| (s, s.voxel_count(specs))).collect()
}

pub fn read_roi_metadata(path: &Path) -> Result<Vec<RoiSpec>> {
    let specs: Vec<RoiSpec> = read_json(path)?;
    let mut names: Vec<RoiName> = specs.iter().map(|s| s.name).collect();
    names.sort();
    names.dedup();
    if names.len() != specs.len() || specs.len() != RoiName::ALL.len() {
        return Err(Error::RoiCountMismatch { found: names.len() });
    }
    Ok(specs)
}

/// Trains and scores the same configuration on LVC, HVC and VC inputs.
///
/// Voxel counts come from `roi_metadata` when supplied, else from the
/// dataset's own declarations.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    data_root: Option<&Path>,
    decoder: Option<&Path>,
    roi_metadata: Option<&[RoiSpec]>,
    seed: u64,
    out: &Path,
) -> Result<Vec<AblationRow>> {
    let (train, test) = experiment_data(cfg, data_root, seed, out)?;
    let frozen = experiment_decoder(&cfg.pretrain, &train, decoder, seed, out)?;
    let specs = roi_metadata.unwrap_or(&train.roi_specs);
    let mut rows = Vec::new();
    for (subset, voxels) in voxel_table(specs) {
        let tr = train.with_subset(subset);
        let te = test.with_subset(subset);
        let (record, _) = run_cell(&tr, &te, &frozen, &cfg.train, &cfg.decode, seed, &out.join(subset.short()))?;
        rows.push(AblationRow {
            subset,
            label: subset.label().to_string(),
            voxel_count: voxels,
            n_tokens: record.encoder_tokens,
            scores: ScoreColumns::from(&record.report),
        });
    }
    let mut table = format!("ROI Variants\tVoxel Number\tTokens\t{}\n", ScoreColumns::HEADER);
    for r in &rows {
        table.push_str(&format!("{}\t{}\t{}\t{}\n", r.label, r.voxel_count, r.n_tokens, r.scores.tsv()));
    }
    write_text(&out.join("ablation.tsv"), &table)?;
    write_json(&out.join("ablation.json"), &rows)?;
    Ok(rows)
}

pub const SCALING_FACTORS: [usize; 3] = [4, 8, 16];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub variant: EncoderVariant,
    pub scaling_factor: usize,
    pub label: String,
    pub trainable_params: usize,
    pub scores: ScoreColumns,
    /// Whether the cell was taken from an earlier run.
    pub reused: bool,
}

pub fn cell_name(variant: EncoderVariant, n: usize) -> String {
    format!("{}-{n}", variant.as_str())
}

/// The nine encoder-size × scaling-factor cells on one dataset and decoder.
pub fn run_variant_grid(
    cfg: &ExperimentConfig,
    data_root: Option<&Path>,
    decoder: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<Vec<GridRow>> {
    let (train, test) = experiment_data(cfg, data_root, seed, out)?;
    let frozen = experiment_decoder(&cfg.pretrain, &train, decoder, seed, out)?;
    let mut rows = Vec::new();
    for variant in [EncoderVariant::S, EncoderVariant::B, EncoderVariant::L] {
        for n in SCALING_FACTORS {
            let mut train_cfg = cfg.train.clone();
            train_cfg.encoder = EncoderSettings::desk(variant);
            train_cfg.bridge = BridgeConfig {
                scaling_factor: n,
                ..cfg.train.bridge.clone()
            };
            let dir = out.join(cell_name(variant, n));
            let (record, reused) = run_cell(&train, &test, &frozen, &train_cfg, &cfg.decode, seed, &dir)?;
            rows.push(GridRow {
                variant,
                scaling_factor: n,
                label: format!("{}/{n}", variant.as_str()),
                trainable_params: record.trainable_params,
                scores: ScoreColumns::from(&record.report),
                reused,
            });
        }
    }
    let mut table = format!("Model\tParams\t{}\n", ScoreColumns::HEADER);
    for r in &rows {
        table.push_str(&format!("{}\t{}\t{}\n", r.label, r.trainable_params, r.scores.tsv()));
    }
    write_text(&out.join("grid.tsv"), &table)?;
    write_json(&out.join("grid.json"), &rows)?;
    Ok(rows)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Run manifest for a grid command; inputs are whatever data and decoder
/// paths were supplied.
pub fn grid_manifest(
    command: &str,
    cfg: &ExperimentConfig,
    config_path: Option<&Path>,
    seed: u64,
    inputs: &[PathBuf],
    outputs: &[&str],
    out: &Path,
) -> Result<()> {
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut manifest = RunManifest::new(command, config_path, cfg, seed, &refs)?;
    for o in outputs {
        manifest = manifest.output(out.join(o));
    }
    manifest.write(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_table_sums_declared_counts() {
        let counts = [100, 90, 80, 70, 60, 50, 40];
        let specs: Vec<RoiSpec> = RoiName::ALL
            .iter()
            .zip(counts)
            .map(|(&name, voxel_count)| RoiSpec { name, voxel_count })
            .collect();
        let table = voxel_table(&specs);
        assert_eq!(table[0], (RoiSubset::LVC, 270));
        assert_eq!(table[1], (RoiSubset::HVC, 150));
        assert_eq!(table[2], (RoiSubset::VC, 490));
    }

    #[test]
    fn ablation_default_plants_hvc_only() {
        let cfg = ExperimentConfig::ablation_default();
        assert_eq!(cfg.synth.signal_rois, RoiSubset::HVC.rois().to_vec());
    }
}
