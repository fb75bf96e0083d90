//! Losses, the bridge/encoder training loop and language-model pretraining.
//!
//! The caption loss is a summed negative log-likelihood per caption (EOS
//! included, PAD skipped); alignment is `λ‖proxy − cls‖²`. Both are averaged
//! over the batch and added. Only the encoder and bridge stores receive
//! optimizer updates; the decoder and proxy stores are frozen.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augmentation::{epoch_samples, AugmentationConfig};
use crate::autograd::{Graph, Matrix, Var};
use crate::dataset::vocab::{BOS, EOS, PAD};
use crate::dataset::{CaptionTokens, Dataset, FmriSample, Vocab};
use crate::encoder::{Encoder, EncoderConfig, EncoderVariant};
use crate::error::{Error, Result};
use crate::lm::{Bridge, BridgeConfig, CaptionModel, Conditioning, Decoder, DecoderConfig};
use crate::model::{CaptionSystem, FrozenDecoder, ModelConfig, ProxyMode, VisualProxy};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;
use crate::rng::{SeedStreams, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub label_smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            label_smoothing: 0.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label_smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub steps: usize,
    pub batch_size: usize,
    /// Replaces the run seed for this loop when set.
    pub seed: Option<u64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            steps: 300,
            batch_size: 32,
            seed: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.eps > 0.0 && a.weight_decay >= 0.0) {
            return Err(Error::Config("optimizer rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder hyperparameters; input width and token count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: f64,
    pub dropout: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self::desk(EncoderVariant::B)
    }
}

impl EncoderSettings {
    pub fn desk(variant: EncoderVariant) -> Self {
        let c = EncoderConfig::desk(variant, 1, 1);
        Self {
            embed_dim: c.embed_dim,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            mlp_ratio: c.mlp_ratio,
            dropout: c.dropout,
        }
    }

    pub fn to_config(&self, input_dim: usize, n_tokens: usize) -> EncoderConfig {
        EncoderConfig {
            embed_dim: self.embed_dim,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            mlp_ratio: self.mlp_ratio,
            dropout: self.dropout,
            input_dim,
            n_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub encoder: EncoderSettings,
    pub bridge: BridgeConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub augmentation: AugmentationConfig,
    pub proxy_mode: ProxyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderSettings::default(),
            bridge: BridgeConfig::new(8, 4),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig {
                adam: AdamConfig {
                    learning_rate: 1e-3,
                    ..AdamConfig::default()
                },
                ..OptimizerConfig::default()
            },
            augmentation: AugmentationConfig::default(),
            proxy_mode: ProxyMode::FromDataset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub l_gpt: f64,
    pub l_clip: f64,
    pub l_mind: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_gpt: f64,
    pub l_clip: f64,
    pub l_mind: f64,
}

/// `−Σ_i log p_i(target_i)`; row `i` of `logprobs` predicts `target[i]`.
///
/// PAD targets are skipped. With smoothing `ε` each position scores
/// `(1 − ε)·nll + ε·mean_v(−log p_i(v))`.
pub fn loss_gpt(logprobs: &Matrix, target: &[u32], smoothing: f64) -> Result<f64> {
    if logprobs.nrows() < target.len() {
        return Err(Error::Shape(format!(
            "{} positions for {} targets",
            logprobs.nrows(),
            target.len()
        )));
    }
    let v = logprobs.ncols();
    let mut total = 0.0;
    for (i, &t) in target.iter().enumerate() {
        if t == PAD {
            continue;
        }
        if t as usize >= v {
            return Err(Error::UnknownTokenId { id: t, vocab_size: v });
        }
        let row = logprobs.row(i);
        total -= (1.0 - smoothing) * row[t as usize];
        if smoothing > 0.0 {
            total -= smoothing * row.sum() / v as f64;
        }
    }
    Ok(total)
}

/// `λ·‖e_img − e_fmri‖²`.
pub fn loss_clip(e_img: &[f64], e_fmri: &[f64], lambda: f64) -> Result<f64> {
    if e_img.len() != e_fmri.len() {
        return Err(Error::Shape(format!(
            "proxy has {} dims, class embedding {}",
            e_img.len(),
            e_fmri.len()
        )));
    }
    Ok(lambda * e_img.iter().zip(e_fmri).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// Decoder input (BOS + caption) and targets (caption + EOS).
pub fn teacher_forcing(caption: &CaptionTokens) -> (Vec<u32>, Vec<u32>) {
    let mut input = Vec::with_capacity(caption.len() + 1);
    input.push(BOS);
    input.extend_from_slice(caption.ids());
    let mut target = caption.ids().to_vec();
    target.push(EOS);
    (input, target)
}

fn nll_node(g: &mut Graph, logprobs: Var, target: &[u32], smoothing: f64) -> Var {
    if smoothing == 0.0 {
        let pairs: Vec<(usize, usize)> = target
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != PAD)
            .map(|(i, &t)| (i, t as usize))
            .collect();
        return g.nll_sum(logprobs, &pairs);
    }
    let (rows, v) = g.value(logprobs).dim();
    let mut w = Matrix::zeros((rows, v));
    for (i, &t) in target.iter().enumerate() {
        if t == PAD {
            continue;
        }
        w.row_mut(i).fill(-smoothing / v as f64);
        w[[i, t as usize]] -= 1.0 - smoothing;
    }
    g.weighted_sum(logprobs, w)
}

/// Borrowed view of every model part a loss needs.
pub struct Parts<'a> {
    pub encoder: &'a Encoder,
    pub encoder_store: &'a ParamStore,
    pub bridge: &'a Bridge,
    pub bridge_store: &'a ParamStore,
    pub decoder: &'a Decoder,
    pub decoder_store: &'a ParamStore,
    pub proxy: &'a VisualProxy,
}

impl<'a> Parts<'a> {
    pub fn of(system: &'a CaptionSystem) -> Self {
        Self {
            encoder: &system.encoder,
            encoder_store: &system.encoder_store,
            bridge: &system.bridge,
            bridge_store: &system.bridge_store,
            decoder: &system.frozen.decoder,
            decoder_store: &system.frozen.store,
            proxy: &system.proxy,
        }
    }
}

/// Batch-averaged `(L_gpt, L_clip, L_mind)` nodes. Dropout runs when `rng` is given.
pub fn batch_loss(
    g: &mut Graph,
    parts: &Parts<'_>,
    batch: &[FmriSample],
    loss: &LossConfig,
    mut rng: Option<&mut StreamRng>,
) -> Result<(Var, Var, Var)> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let mut gpt_terms = Vec::with_capacity(batch.len());
    let mut clip_terms = Vec::with_capacity(batch.len());
    for sample in batch {
        let z = parts
            .encoder
            .forward(g, parts.encoder_store, &sample.rois, rng.as_deref_mut())?;
        let cond = Conditioning {
            bridge: parts.bridge,
            store: parts.bridge_store,
            z,
        };
        let (input, target) = teacher_forcing(&sample.caption);
        let lp = parts.decoder.forward(g, parts.decoder_store, &input, Some(&cond))?;
        gpt_terms.push(nll_node(g, lp, &target, loss.label_smoothing));
        let cls = g.slice_rows(z, 0, 1);
        let proxy = parts.proxy.target(sample)?;
        clip_terms.push(g.sq_dist(cls, proxy, loss.lambda));
    }
    let scale = 1.0 / batch.len() as f64;
    let sum = |g: &mut Graph, terms: &[Var]| {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = g.add(acc, t);
        }
        g.scale(acc, scale)
    };
    let l_gpt = sum(g, &gpt_terms);
    let l_clip = sum(g, &clip_terms);
    let l_mind = g.add(l_gpt, l_clip);
    Ok((l_gpt, l_clip, l_mind))
}

/// Eval-mode loss of a batch under a trained system.
pub fn loss_mind(system: &CaptionSystem, batch: &[FmriSample], loss: &LossConfig) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let (a, b, c) = batch_loss(&mut g, &Parts::of(system), batch, loss, None)?;
    Ok(LossBreakdown {
        l_gpt: g.scalar(a),
        l_clip: g.scalar(b),
        l_mind: g.scalar(c),
    })
}

/// Untrained system for a dataset: fresh encoder and bridge, seeded proxy.
pub fn init_system(dataset: &Dataset, frozen: FrozenDecoder, cfg: &TrainConfig, streams: &SeedStreams) -> Result<CaptionSystem> {
    if frozen.vocab_fingerprint != dataset.vocab.fingerprint() {
        return Err(Error::VocabMismatch(
            "decoder checkpoint was pretrained on a different vocabulary".into(),
        ));
    }
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| Error::Invalid("training set is empty".into()))?;
    let rois = first.rois.names.clone();
    let enc_cfg = cfg.encoder.to_config(first.rois.pad_width(), rois.len());
    let (encoder, encoder_store) = Encoder::init(&enc_cfg, &mut streams.stream("init.encoder"))?;
    let (bridge, bridge_store) = Bridge::init(
        &cfg.bridge,
        &frozen.decoder.config,
        enc_cfg.embed_dim,
        &mut streams.stream("init.bridge"),
    )?;
    let proxy = VisualProxy::new(
        cfg.proxy_mode,
        dataset.d_proxy,
        enc_cfg.embed_dim,
        &mut streams.stream("proxy"),
    )?;
    let mut system = CaptionSystem {
        config: ModelConfig {
            encoder: enc_cfg,
            bridge: cfg.bridge.clone(),
            decoder: frozen.decoder.config.clone(),
            proxy_mode: cfg.proxy_mode,
            d_proxy: dataset.d_proxy,
            rois,
        },
        encoder,
        encoder_store,
        bridge,
        bridge_store,
        frozen,
        proxy,
        dataset_fingerprint: Some(dataset.fingerprint.clone()),
    };
    system.encoder_store.round_to_f32();
    system.bridge_store.round_to_f32();
    Ok(system)
}

#[derive(Debug)]
pub struct TrainOutput {
    pub system: CaptionSystem,
    pub log: Vec<LogRow>,
}

/// Trains the encoder and bridge against a frozen decoder.
pub fn train(
    dataset: &Dataset,
    frozen: FrozenDecoder,
    cfg: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainOutput> {
    cfg.loss.validate()?;
    cfg.optimizer.validate()?;
    cfg.augmentation.alpha_distribution.validate()?;
    let streams = SeedStreams::new(cfg.optimizer.seed.unwrap_or(seed));
    let mut system = init_system(dataset, frozen, cfg, &streams)?;
    let mut shuffle_rng = streams.stream("data.shuffle");
    let mut aug_rng = match cfg.augmentation.seed {
        Some(s) => SeedStreams::new(s).stream("augment"),
        None => streams.stream("augment"),
    };
    let mut dropout_rng = streams.stream("dropout");
    let use_dropout = cfg.encoder.dropout > 0.0;

    let mut enc_opt = Adam::new(cfg.optimizer.adam, &system.encoder_store);
    let mut bridge_opt = Adam::new(cfg.optimizer.adam, &system.bridge_store);
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.optimizer.steps);
    let mut pool: Vec<FmriSample> = Vec::new();
    let mut cursor = 0;

    for step in 0..cfg.optimizer.steps {
        let mut batch = Vec::with_capacity(cfg.optimizer.batch_size);
        while batch.len() < cfg.optimizer.batch_size {
            if cursor == pool.len() {
                pool = epoch_samples(dataset, &cfg.augmentation, &mut aug_rng)?;
                pool.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            let take = (cfg.optimizer.batch_size - batch.len()).min(pool.len() - cursor);
            batch.extend_from_slice(&pool[cursor..cursor + take]);
            cursor += take;
            if pool.len() <= cfg.optimizer.batch_size && cursor == pool.len() {
                // one pass per step is enough for sets smaller than a batch
                break;
            }
        }

        let mut g = Graph::new();
        let parts = Parts::of(&system);
        let rng = if use_dropout { Some(&mut dropout_rng) } else { None };
        let (l_gpt, l_clip, l_mind) = batch_loss(&mut g, &parts, &batch, &cfg.loss, rng)?;
        let row = LogRow {
            step,
            l_gpt: g.scalar(l_gpt),
            l_clip: g.scalar(l_clip),
            l_mind: g.scalar(l_mind),
            wall_ms: start.elapsed().as_millis(),
        };
        if !row.l_mind.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let grads = g.backward(l_mind);
        let mut enc_grads = system.encoder_store.zeros_like();
        grads.accumulate(&system.encoder_store, &mut enc_grads, 1.0);
        let mut bridge_grads = system.bridge_store.zeros_like();
        grads.accumulate(&system.bridge_store, &mut bridge_grads, 1.0);
        drop(grads);
        drop(g);
        enc_opt.step(&mut system.encoder_store, &enc_grads);
        bridge_opt.step(&mut system.bridge_store, &bridge_grads);
        on_step(&row);
        log.push(row);
    }
    system.encoder_store.round_to_f32();
    system.bridge_store.round_to_f32();
    Ok(TrainOutput { system, log })
}

pub fn write_log_tsv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from("step\tl_gpt\tl_clip\tl_mind\twall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.9}\t{:.9}\t{:.9}\t{}\n",
            r.step, r.l_gpt, r.l_clip, r.l_mind, r.wall_ms
        ));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Decoder shape apart from the vocabulary size, which the corpus fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderSettings {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        let c = DecoderConfig::desk(5, 24);
        Self {
            embed_dim: c.embed_dim,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            max_seq_len: c.max_seq_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub decoder: DecoderSettings,
    pub optimizer: OptimizerConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            decoder: DecoderSettings::default(),
            optimizer: OptimizerConfig {
                adam: AdamConfig {
                    learning_rate: 3e-3,
                    weight_decay: 0.0,
                    ..AdamConfig::default()
                },
                steps: 400,
                batch_size: 16,
                seed: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainRow {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: u128,
}

/// Next-token training of the decoder on a caption corpus; returns it frozen.
pub fn pretrain_lm(
    corpus: &[CaptionTokens],
    vocab: &Vocab,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<(FrozenDecoder, Vec<PretrainRow>)> {
    if corpus.is_empty() {
        return Err(Error::Invalid("pretraining corpus is empty".into()));
    }
    cfg.optimizer.validate()?;
    if let Some(c) = corpus.iter().find(|c| c.ids().iter().any(|&t| t as usize >= vocab.len())) {
        return Err(Error::VocabMismatch(format!(
            "caption {:?} uses ids outside the vocabulary",
            c.ids()
        )));
    }
    let streams = SeedStreams::new(cfg.optimizer.seed.unwrap_or(seed));
    let dcfg = DecoderConfig {
        vocab_size: vocab.len(),
        embed_dim: cfg.decoder.embed_dim,
        n_layers: cfg.decoder.n_layers,
        n_heads: cfg.decoder.n_heads,
        max_seq_len: cfg.decoder.max_seq_len,
    };
    let (decoder, mut store) = Decoder::init(&dcfg, &mut streams.stream("init.decoder"))?;
    let mut rng = streams.stream("data.shuffle");
    let mut opt = Adam::new(cfg.optimizer.adam, &store);
    let mut order: Vec<usize> = Vec::new();
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.optimizer.steps);
    let bs = cfg.optimizer.batch_size.min(corpus.len());
    for step in 0..cfg.optimizer.steps {
        if order.len() < bs {
            let mut fresh: Vec<usize> = (0..corpus.len()).collect();
            fresh.shuffle(&mut rng);
            order.extend(fresh);
        }
        let batch: Vec<usize> = order.drain(..bs).collect();
        let mut g = Graph::new();
        let mut terms = Vec::with_capacity(bs);
        for &i in &batch {
            let (input, target) = teacher_forcing(&corpus[i]);
            let lp = decoder.forward(&mut g, &store, &input, None)?;
            terms.push(nll_node(&mut g, lp, &target, 0.0));
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = g.add(total, t);
        }
        let total = g.scale(total, 1.0 / bs as f64);
        let loss = g.scalar(total);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let grads = g.backward(total);
        let mut acc = store.zeros_like();
        grads.accumulate(&store, &mut acc, 1.0);
        drop(grads);
        drop(g);
        opt.step(&mut store, &acc);
        log.push(PretrainRow {
            step,
            loss,
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok((FrozenDecoder::new(decoder, store, vocab.fingerprint()), log))
}

/// Per-token perplexity of a corpus (EOS counted), without conditioning.
pub fn perplexity(model: CaptionModel<'_>, corpus: &[CaptionTokens]) -> Result<f64> {
    let mut nll = 0.0;
    let mut count = 0usize;
    for c in corpus {
        let (input, target) = teacher_forcing(c);
        let lp = model.log_probs(None, &input)?;
        nll += loss_gpt(&lp, &target, 0.0)?;
        count += target.len();
    }
    Ok((nll / count.max(1) as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, rng_from_seed};
    use rand::Rng;

    fn log_softmax_rows(m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        out
    }

    #[test]
    fn gpt_loss_closed_forms() {
        let v = 7;
        let uniform = Matrix::from_elem((5, v), -(v as f64).ln());
        let target = [4, 5, 6, 4, 1];
        assert!((loss_gpt(&uniform, &target, 0.0).unwrap() - 5.0 * (v as f64).ln()).abs() < 1e-12);
        let mut certain = Matrix::from_elem((5, v), f64::NEG_INFINITY);
        for (i, &t) in target.iter().enumerate() {
            certain[[i, t as usize]] = 0.0;
        }
        assert_eq!(loss_gpt(&certain, &target, 0.0).unwrap(), 0.0);
        let padded = [4, 5, PAD, PAD];
        assert!((loss_gpt(&uniform, &padded, 0.0).unwrap() - 2.0 * (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn gpt_loss_matches_brute_force() {
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let logits = Matrix::from_shape_fn((6, 9), |_| 3.0 * normal(&mut rng));
            let target: Vec<u32> = (0..6).map(|_| rng.random_range(0..9)).collect();
            let mut brute = 0.0;
            for (i, &t) in target.iter().enumerate() {
                if t == PAD {
                    continue;
                }
                let z: f64 = logits.row(i).iter().map(|v| v.exp()).sum();
                brute -= (logits[[i, t as usize]].exp() / z).ln();
            }
            let got = loss_gpt(&log_softmax_rows(&logits), &target, 0.0).unwrap();
            assert!((got - brute).abs() < 1e-6);
        }
    }

    #[test]
    fn clip_loss_closed_forms() {
        assert_eq!(loss_clip(&[1.0, 2.0], &[1.0, 2.0], 10.0).unwrap(), 0.0);
        assert_eq!(loss_clip(&[1.0, 0.0], &[0.0, 0.0], 10.0).unwrap(), 10.0);
        assert!(loss_clip(&[1.0], &[0.0, 0.0], 10.0).is_err());
    }

    #[test]
    fn smoothing_node_matches_scalar_loss() {
        let mut rng = rng_from_seed(2);
        let logits = Matrix::from_shape_fn((4, 6), |_| normal(&mut rng));
        let lp = log_softmax_rows(&logits);
        let target = [4, 5, PAD, 1];
        for eps in [0.0, 0.1] {
            let mut g = Graph::new();
            let x = g.constant(lp.clone());
            let node = nll_node(&mut g, x, &target, eps);
            assert!((g.scalar(node) - loss_gpt(&lp, &target, eps).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_sentence_is_memorized() {
        let vocab = Vocab::from_corpus(["a small dog runs on the grass"]);
        let caption = CaptionTokens(vocab.encode("a small dog runs on the grass").unwrap());
        let corpus = vec![caption; 4];
        let cfg = PretrainConfig {
            decoder: DecoderSettings {
                embed_dim: 16,
                n_layers: 1,
                n_heads: 2,
                max_seq_len: 10,
            },
            optimizer: OptimizerConfig {
                steps: 200,
                batch_size: 4,
                ..PretrainConfig::default().optimizer
            },
        };
        let (frozen, log) = pretrain_lm(&corpus, &vocab, &cfg, 3).unwrap();
        assert!(!frozen.store.is_trainable());
        let ppl = perplexity(frozen.model(), &corpus[..1]).unwrap();
        assert!(ppl < 1.1, "perplexity {ppl}");
        assert!(log.last().unwrap().loss < log[0].loss);
        let (again, _) = pretrain_lm(&corpus, &vocab, &cfg, 3).unwrap();
        assert!(again.store.bitwise_eq(&frozen.store));
    }
}
