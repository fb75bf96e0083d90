//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)]

pub mod oracles;

use std::path::Path;

use neurocap_core::dataset::synth::{generate_synthetic_dataset, SynthConfig, SynthOutput};
use neurocap_core::dataset::{RoiName, RoiSpec};
use neurocap_core::lm::{BridgeConfig, Decoder, DecoderConfig};
use neurocap_core::model::{CaptionSystem, FrozenDecoder, ProxyMode};
use neurocap_core::rng::SeedStreams;
use neurocap_core::training::{init_system, EncoderSettings, LossConfig, OptimizerConfig, TrainConfig};

/// A few samples with single-digit ROI widths.
pub fn tiny_synth() -> SynthConfig {
    SynthConfig {
        n_categories: 2,
        samples_per_category: 2,
        test_stimuli_per_category: 1,
        test_repetitions: 2,
        roi_specs: RoiName::ALL
            .iter()
            .zip([5, 4, 6, 3, 5, 4, 3])
            .map(|(&name, voxel_count)| RoiSpec { name, voxel_count })
            .collect(),
        d_proxy: 6,
        patch_grid: 2,
        salient_block: 1,
        ..SynthConfig::default()
    }
}

pub fn tiny_data(dir: &Path, seed: u64) -> SynthOutput {
    generate_synthetic_dataset(&tiny_synth(), seed, dir).expect("tiny synthetic data")
}

pub fn tiny_decoder(vocab_size: usize, fingerprint: String, seed: u64) -> FrozenDecoder {
    let cfg = DecoderConfig {
        vocab_size,
        embed_dim: 8,
        n_layers: 1,
        n_heads: 2,
        max_seq_len: 24,
    };
    let (decoder, store) = Decoder::init(&cfg, &mut SeedStreams::new(seed).stream("init.decoder")).unwrap();
    FrozenDecoder::new(decoder, store, fingerprint)
}

pub fn tiny_train_config(proxy_mode: ProxyMode) -> TrainConfig {
    TrainConfig {
        encoder: EncoderSettings {
            embed_dim: 8,
            n_layers: 1,
            n_heads: 2,
            mlp_ratio: 2.0,
            dropout: 0.0,
        },
        bridge: BridgeConfig {
            scaling_factor: 8,
            n_heads: 2,
            base_head_dim: 32,
        },
        loss: LossConfig::default(),
        optimizer: OptimizerConfig {
            batch_size: 4,
            ..TrainConfig::default().optimizer
        },
        proxy_mode,
        ..TrainConfig::default()
    }
}

pub fn tiny_system(data: &SynthOutput, proxy_mode: ProxyMode, seed: u64) -> CaptionSystem {
    let frozen = tiny_decoder(data.train.vocab.len(), data.train.vocab.fingerprint(), seed);
    init_system(&data.train, frozen, &tiny_train_config(proxy_mode), &SeedStreams::new(seed)).unwrap()
}
