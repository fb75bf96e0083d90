//! Small decoder-only language model, the cross-attention bridge that lets it
//! read encoder outputs, and caption generation.
//!
//! The decoder stays frozen while the bridge is trained: each decoder block
//! gets one cross-attention layer between its self-attention and its MLP. The
//! bridge output projection starts at zero, so an untrained bridge leaves the
//! language model's logits untouched.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, Var};
use crate::dataset::vocab::{BOS, EOS};
use crate::dataset::CaptionTokens;
use crate::encoder::{Encoder, EncoderConfig, LatentRepresentation};
use crate::error::{Error, Result};
use crate::nn::{multi_head_attention, LayerNorm, Linear, Mlp, SelfAttention, INIT_STD};
use crate::params::{Counter, Init, Initializer, ParamId, ParamSource, ParamStore};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
}

impl DecoderConfig {
    pub fn desk(vocab_size: usize, max_seq_len: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 64,
            n_layers: 2,
            n_heads: 4,
            max_seq_len,
        }
    }

    /// Shape of the 12-layer, 768-wide public release of GPT-2.
    pub fn gpt2_shape() -> Self {
        Self {
            vocab_size: 50257,
            embed_dim: 768,
            n_layers: 12,
            n_heads: 12,
            max_seq_len: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room beyond the reserved ids",
                self.vocab_size
            )));
        }
        if self.n_layers == 0 || self.n_heads == 0 || !self.embed_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "decoder needs layers and embed_dim {} divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    /// Divisor `N` of the base projection width.
    pub scaling_factor: usize,
    pub n_heads: usize,
    #[serde(default = "default_base_head_dim")]
    pub base_head_dim: usize,
}

fn default_base_head_dim() -> usize {
    64
}

impl BridgeConfig {
    pub fn new(scaling_factor: usize, n_heads: usize) -> Self {
        Self {
            scaling_factor,
            n_heads,
            base_head_dim: default_base_head_dim(),
        }
    }

    /// Per-head projection width `d_x = base / N`.
    pub fn head_dim(&self) -> usize {
        self.base_head_dim / self.scaling_factor.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scaling_factor == 0 || !self.base_head_dim.is_multiple_of(self.scaling_factor) {
            return Err(Error::Config(format!(
                "scaling factor {} must divide {}",
                self.scaling_factor, self.base_head_dim
            )));
        }
        if self.head_dim() == 0 || self.n_heads == 0 {
            return Err(Error::Config("bridge projection is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam { width: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub strategy: Strategy,
    pub max_new_tokens: usize,
    /// Tokens fed after BOS; not part of the output.
    pub prompt: Vec<u32>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            max_new_tokens: 20,
            prompt: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    ln1: LayerNorm,
    attn: SelfAttention,
    ln2: LayerNorm,
    mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    blocks: Vec<DecoderBlock>,
    ln_f: LayerNorm,
}

#[derive(Debug, Clone)]
struct CrossAttention {
    ln: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
pub struct Bridge {
    pub config: BridgeConfig,
    pub encoder_dim: usize,
    layers: Vec<CrossAttention>,
}

/// Encoder output already placed on the graph, plus the bridge that reads it.
pub struct Conditioning<'a> {
    pub bridge: &'a Bridge,
    pub store: &'a ParamStore,
    pub z: Var,
}

impl Decoder {
    pub fn build(src: &mut dyn ParamSource, config: &DecoderConfig) -> Result<Self> {
        config.validate()?;
        let e = config.embed_dim;
        let normal = Init::TruncNormal(INIT_STD);
        let tok_emb = src.param("dec.tok_emb", (config.vocab_size, e), normal)?;
        let pos_emb = src.param("dec.pos_emb", (config.max_seq_len, e), normal)?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = format!("dec.block{l}");
            blocks.push(DecoderBlock {
                ln1: LayerNorm::build(src, &format!("{p}.ln1"), e)?,
                attn: SelfAttention::build(src, &format!("{p}.attn"), e, config.n_heads)?,
                ln2: LayerNorm::build(src, &format!("{p}.ln2"), e)?,
                mlp: Mlp::build(src, &format!("{p}.mlp"), e, 4 * e)?,
            });
        }
        let ln_f = LayerNorm::build(src, "dec.ln_f", e)?;
        Ok(Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            blocks,
            ln_f,
        })
    }

    pub fn init(config: &DecoderConfig, rng: &mut StreamRng) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(true);
        let dec = Self::build(&mut Initializer::new(&mut store, rng), config)?;
        Ok((dec, store))
    }

    pub fn check_tokens(&self, input: &[u32]) -> Result<()> {
        if input.is_empty() {
            return Err(Error::Invalid("decoder input is empty".into()));
        }
        if input.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: input.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&id) = input.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::UnknownTokenId {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Next-token log-probabilities, one row per input position.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: &[u32],
        cond: Option<&Conditioning<'_>>,
    ) -> Result<Var> {
        self.check_tokens(input)?;
        if let Some(c) = cond {
            c.bridge.check_compatible(self, g.value(c.z).ncols())?;
        }
        let ids: Vec<usize> = input.iter().map(|&t| t as usize).collect();
        let tok_table = g.param(store, self.tok_emb);
        let tok = g.gather_rows(tok_table, &ids);
        let pos_table = g.param(store, self.pos_emb);
        let pos = g.slice_rows(pos_table, 0, ids.len());
        let mut x = g.add(tok, pos);
        for (l, block) in self.blocks.iter().enumerate() {
            let h = block.ln1.forward(g, store, x);
            let h = block.attn.forward(g, store, h, true);
            x = g.add(x, h);
            if let Some(c) = cond {
                let h = c.bridge.layers[l].forward(g, c.store, &c.bridge.config, x, c.z);
                x = g.add(x, h);
            }
            let h = block.ln2.forward(g, store, x);
            let h = block.mlp.forward(g, store, h);
            x = g.add(x, h);
        }
        let h = self.ln_f.forward(g, store, x);
        let logits = g.matmul_t(h, tok_table);
        Ok(g.log_softmax(logits))
    }
}

impl CrossAttention {
    fn forward(&self, g: &mut Graph, store: &ParamStore, cfg: &BridgeConfig, x: Var, z: Var) -> Var {
        let h = self.ln.forward(g, store, x);
        let q = self.q.forward(g, store, h);
        let k = self.k.forward(g, store, z);
        let v = self.v.forward(g, store, z);
        let out = multi_head_attention(g, q, k, v, cfg.n_heads, cfg.head_dim(), false);
        self.o.forward(g, store, out)
    }
}

impl Bridge {
    pub fn build(
        src: &mut dyn ParamSource,
        config: &BridgeConfig,
        decoder: &DecoderConfig,
        encoder_dim: usize,
    ) -> Result<Self> {
        config.validate()?;
        let e = decoder.embed_dim;
        let inner = config.n_heads * config.head_dim();
        let normal = Init::TruncNormal(INIT_STD);
        let layers = (0..decoder.n_layers)
            .map(|l| {
                let p = format!("bridge.layer{l}");
                Ok(CrossAttention {
                    ln: LayerNorm::build(src, &format!("{p}.ln"), e)?,
                    q: Linear::build(src, &format!("{p}.q"), e, inner, normal)?,
                    k: Linear::build(src, &format!("{p}.k"), encoder_dim, inner, normal)?,
                    v: Linear::build(src, &format!("{p}.v"), encoder_dim, inner, normal)?,
                    o: Linear::build(src, &format!("{p}.o"), inner, e, Init::Zeros)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            encoder_dim,
            layers,
        })
    }

    pub fn init(
        config: &BridgeConfig,
        decoder: &DecoderConfig,
        encoder_dim: usize,
        rng: &mut StreamRng,
    ) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(true);
        let bridge = Self::build(&mut Initializer::new(&mut store, rng), config, decoder, encoder_dim)?;
        Ok((bridge, store))
    }

    fn check_compatible(&self, decoder: &Decoder, z_cols: usize) -> Result<()> {
        if self.layers.len() != decoder.config.n_layers {
            return Err(Error::Shape(format!(
                "bridge has {} layers, decoder has {}",
                self.layers.len(),
                decoder.config.n_layers
            )));
        }
        if z_cols != self.encoder_dim {
            return Err(Error::Shape(format!(
                "latent width: expected {}, found {z_cols}",
                self.encoder_dim
            )));
        }
        Ok(())
    }

    /// Output projections of every cross-attention layer.
    pub fn output_projections(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.o.w, l.o.b]).collect()
    }
}

/// Encoder plus bridge scalars; the frozen decoder is excluded.
pub fn count_trainable_params(
    encoder: &EncoderConfig,
    bridge: &BridgeConfig,
    decoder: &DecoderConfig,
) -> Result<usize> {
    let mut counter = Counter::default();
    Encoder::build(&mut counter, encoder)?;
    Bridge::build(&mut counter, bridge, decoder, encoder.embed_dim)?;
    Ok(counter.scalars)
}

/// A frozen decoder with an optional bridge, ready for inference.
#[derive(Clone, Copy)]
pub struct CaptionModel<'a> {
    pub decoder: &'a Decoder,
    pub decoder_store: &'a ParamStore,
    pub bridge: Option<(&'a Bridge, &'a ParamStore)>,
}

#[derive(Debug, Clone, PartialEq)]
struct Hypothesis {
    tokens: Vec<u32>,
    score: f64,
}

impl CaptionModel<'_> {
    /// Log-probabilities for every position of `input`.
    pub fn log_probs(&self, z: Option<&LatentRepresentation>, input: &[u32]) -> Result<Matrix> {
        let mut g = Graph::new();
        let out = match (self.bridge, z) {
            (Some((bridge, store)), Some(z)) => {
                let zv = g.constant(z.hidden.clone());
                let cond = Conditioning {
                    bridge,
                    store,
                    z: zv,
                };
                self.decoder.forward(&mut g, self.decoder_store, input, Some(&cond))?
            }
            _ => self.decoder.forward(&mut g, self.decoder_store, input, None)?,
        };
        Ok(g.value(out).clone())
    }

    fn input_for(&self, gen: &GenerationConfig, tokens: &[u32]) -> Vec<u32> {
        let mut input = Vec::with_capacity(1 + gen.prompt.len() + tokens.len());
        input.push(BOS);
        input.extend_from_slice(&gen.prompt);
        input.extend_from_slice(tokens);
        input
    }

    /// Sum of log-probabilities of `tokens` after the prompt, plus EOS if `finished`.
    pub fn continuation_log_prob(
        &self,
        z: Option<&LatentRepresentation>,
        gen: &GenerationConfig,
        tokens: &[u32],
        finished: bool,
    ) -> Result<f64> {
        let mut full = tokens.to_vec();
        if finished {
            full.push(EOS);
        }
        if full.is_empty() {
            return Ok(0.0);
        }
        let input = self.input_for(gen, &full[..full.len() - 1]);
        let lp = self.log_probs(z, &input)?;
        let offset = input.len() - full.len();
        Ok(full
            .iter()
            .enumerate()
            .map(|(i, &t)| lp[[offset + i, t as usize]])
            .sum())
    }

    pub fn generate(&self, z: Option<&LatentRepresentation>, gen: &GenerationConfig) -> Result<CaptionTokens> {
        Ok(CaptionTokens(self.generate_scored(z, gen)?.0))
    }

    /// Generated tokens (EOS stripped), their score and whether EOS was reached.
    pub fn generate_scored(
        &self,
        z: Option<&LatentRepresentation>,
        gen: &GenerationConfig,
    ) -> Result<(Vec<u32>, f64, bool)> {
        self.decoder.check_tokens(&self.input_for(gen, &[]))?;
        match gen.strategy {
            Strategy::Greedy => self.greedy(z, gen),
            Strategy::Beam { width } if width >= 1 => self.beam(z, gen, width),
            Strategy::Beam { .. } => Err(Error::Config("beam width must be at least 1".into())),
        }
    }

    fn room(&self, gen: &GenerationConfig, generated: usize) -> bool {
        generated < gen.max_new_tokens && 1 + gen.prompt.len() + generated <= self.decoder.config.max_seq_len
    }

    fn greedy(&self, z: Option<&LatentRepresentation>, gen: &GenerationConfig) -> Result<(Vec<u32>, f64, bool)> {
        let mut tokens = Vec::new();
        let mut score = 0.0;
        while self.room(gen, tokens.len()) {
            let lp = self.log_probs(z, &self.input_for(gen, &tokens))?;
            let last = lp.row(lp.nrows() - 1);
            let mut best = 0;
            for (t, &v) in last.iter().enumerate() {
                if v > last[best] {
                    best = t;
                }
            }
            score += last[best];
            if best as u32 == EOS {
                return Ok((tokens, score, true));
            }
            tokens.push(best as u32);
        }
        Ok((tokens, score, false))
    }

    /// Keeps the `width` best expansions per step. A candidate ending in EOS
    /// moves to the finished list; the search stops once no live hypothesis
    /// can beat the best finished one. Scores are raw summed log-probabilities.
    fn beam(
        &self,
        z: Option<&LatentRepresentation>,
        gen: &GenerationConfig,
        width: usize,
    ) -> Result<(Vec<u32>, f64, bool)> {
        let mut alive = vec![Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
        }];
        let mut finished: Vec<Hypothesis> = Vec::new();
        let mut depth = 0;
        while !alive.is_empty() && self.room(gen, depth) {
            let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
            for (b, hyp) in alive.iter().enumerate() {
                let lp = self.log_probs(z, &self.input_for(gen, &hyp.tokens))?;
                let last = lp.row(lp.nrows() - 1);
                candidates.extend(last.iter().enumerate().map(|(t, &v)| (hyp.score + v, b, t as u32)));
            }
            candidates.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.cmp(&b.1))
                    .then_with(|| a.2.cmp(&b.2))
            });
            let mut next = Vec::with_capacity(width);
            for &(score, b, t) in candidates.iter().take(width) {
                if t == EOS {
                    finished.push(Hypothesis {
                        tokens: alive[b].tokens.clone(),
                        score,
                    });
                } else {
                    let mut tokens = alive[b].tokens.clone();
                    tokens.push(t);
                    next.push(Hypothesis { tokens, score });
                }
            }
            alive = next;
            depth += 1;
            let best_finished = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if alive.first().is_some_and(|h| best_finished >= h.score) {
                break;
            }
        }
        let mut best: Option<(Hypothesis, bool)> = None;
        for (hyp, done) in finished
            .into_iter()
            .map(|h| (h, true))
            .chain(alive.into_iter().map(|h| (h, false)))
        {
            if best.as_ref().is_none_or(|(b, _)| hyp.score > b.score) {
                best = Some((hyp, done));
            }
        }
        let (hyp, done) = best.expect("at least one hypothesis");
        Ok((hyp.tokens, hyp.score, done))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, rng_from_seed};
    use rand::Rng;

    fn tiny_cfg() -> DecoderConfig {
        DecoderConfig {
            vocab_size: 11,
            embed_dim: 16,
            n_layers: 2,
            n_heads: 2,
            max_seq_len: 12,
        }
    }

    struct Fixture {
        dec: Decoder,
        dec_store: ParamStore,
        bridge: Bridge,
        bridge_store: ParamStore,
    }

    fn fixture(seed: u64, zero_out: bool) -> Fixture {
        let mut rng = rng_from_seed(seed);
        let cfg = tiny_cfg();
        let (dec, mut dec_store) = Decoder::init(&cfg, &mut rng).unwrap();
        // sharper logits than the 0.02 init
        for id in dec_store.ids().collect::<Vec<_>>() {
            if dec_store.name(id).ends_with(".w") || dec_store.name(id).contains("emb") {
                dec_store.get_mut(id).mapv_inplace(|v| v * 40.0);
            }
        }
        dec_store.set_trainable(false);
        let (bridge, mut bridge_store) = Bridge::init(&BridgeConfig::new(8, 2), &cfg, 6, &mut rng).unwrap();
        if !zero_out {
            for id in bridge.output_projections() {
                let m = bridge_store.get_mut(id);
                m.mapv_inplace(|_| 0.5 * normal(&mut rng));
            }
        }
        Fixture {
            dec,
            dec_store,
            bridge,
            bridge_store,
        }
    }

    impl Fixture {
        fn model(&self) -> CaptionModel<'_> {
            CaptionModel {
                decoder: &self.dec,
                decoder_store: &self.dec_store,
                bridge: Some((&self.bridge, &self.bridge_store)),
            }
        }

        fn lm_only(&self) -> CaptionModel<'_> {
            CaptionModel {
                bridge: None,
                ..self.model()
            }
        }
    }

    fn latent(seed: u64) -> LatentRepresentation {
        let mut rng = rng_from_seed(seed);
        LatentRepresentation {
            hidden: Matrix::from_shape_fn((4, 6), |_| 3.0 * normal(&mut rng)),
        }
    }

    #[test]
    fn distributions_normalize_and_are_causal() {
        let fx = fixture(1, false);
        let z = latent(2);
        let input = [BOS, 5, 6, 7, 8];
        let lp = fx.model().log_probs(Some(&z), &input).unwrap();
        for row in lp.rows() {
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        let changed = [BOS, 5, 6, 9, 4];
        let lp2 = fx.model().log_probs(Some(&z), &changed).unwrap();
        for i in 0..3 {
            for c in 0..11 {
                assert_eq!(lp[[i, c]].to_bits(), lp2[[i, c]].to_bits());
            }
        }
    }

    #[test]
    fn zero_output_projection_recovers_plain_lm() {
        let fx = fixture(3, true);
        let z = latent(4);
        let input = [BOS, 4, 9, 5];
        let with = fx.model().log_probs(Some(&z), &input).unwrap();
        let without = fx.lm_only().log_probs(None, &input).unwrap();
        assert!(with.iter().zip(without.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn latent_changes_logits() {
        let fx = fixture(5, false);
        let input = [BOS, 4, 9];
        let a = fx.model().log_probs(Some(&latent(1)), &input).unwrap();
        let b = fx.model().log_probs(Some(&latent(2)), &input).unwrap();
        let max = (&a - &b).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
        assert!(max > 0.0);
    }

    #[test]
    fn rejects_bad_tokens_and_lengths() {
        let fx = fixture(1, true);
        assert!(matches!(
            fx.lm_only().log_probs(None, &[BOS, 11]),
            Err(Error::UnknownTokenId { id: 11, .. })
        ));
        assert!(matches!(
            fx.lm_only().log_probs(None, &[BOS; 13]),
            Err(Error::SequenceTooLong { len: 13, max: 12 })
        ));
    }

    #[test]
    fn zero_budget_gives_empty_caption() {
        let fx = fixture(1, false);
        let gen = GenerationConfig {
            max_new_tokens: 0,
            ..Default::default()
        };
        assert!(fx.model().generate(Some(&latent(1)), &gen).unwrap().is_empty());
    }

    #[test]
    fn greedy_equals_width_one_beam() {
        let fx = fixture(7, false);
        for s in 0..20 {
            let z = latent(100 + s);
            let greedy = GenerationConfig::default();
            let beam = GenerationConfig {
                strategy: Strategy::Beam { width: 1 },
                ..Default::default()
            };
            let a = fx.model().generate_scored(Some(&z), &greedy).unwrap();
            let b = fx.model().generate_scored(Some(&z), &beam).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.2, b.2);
        }
    }

    #[test]
    fn reported_score_matches_rescoring() {
        let fx = fixture(8, false);
        let z = latent(9);
        for strategy in [Strategy::Greedy, Strategy::Beam { width: 3 }] {
            let gen = GenerationConfig {
                strategy,
                max_new_tokens: 6,
                ..Default::default()
            };
            let (tokens, score, done) = fx.model().generate_scored(Some(&z), &gen).unwrap();
            let rescored = fx.model().continuation_log_prob(Some(&z), &gen, &tokens, done).unwrap();
            assert!((score - rescored).abs() < 1e-9);
        }
    }

    #[test]
    fn bridge_param_count_closed_form() {
        let dec = DecoderConfig::gpt2_shape();
        let enc = EncoderConfig::full(crate::encoder::EncoderVariant::B, 100, 7);
        let per_layer = |n: usize| {
            let inner = 12 * (64 / n);
            let (e, k) = (768, 768);
            2 * e + (e * inner + inner) + 2 * (k * inner + inner) + (inner * e + e)
        };
        let c4 = count_trainable_params(&enc, &BridgeConfig::new(4, 12), &dec).unwrap();
        let c16 = count_trainable_params(&enc, &BridgeConfig::new(16, 12), &dec).unwrap();
        assert_eq!(c4 - c16, 12 * (per_layer(4) - per_layer(16)));
        assert!(BridgeConfig::new(0, 12).validate().is_err());
        assert!(BridgeConfig::new(128, 12).validate().is_err());
        let zero_layer = EncoderConfig { n_layers: 0, ..enc };
        assert!(count_trainable_params(&zero_layer, &BridgeConfig::new(8, 12), &dec).is_err());
    }

    #[test]
    fn beam_scores_at_least_greedy() {
        let fx = fixture(11, false);
        let mut rng = rng_from_seed(12);
        for _ in 0..20 {
            let z = latent(rng.random());
            let greedy = GenerationConfig {
                max_new_tokens: 6,
                ..Default::default()
            };
            let beam = GenerationConfig {
                strategy: Strategy::Beam { width: 3 },
                ..greedy.clone()
            };
            let g = fx.model().generate_scored(Some(&z), &greedy).unwrap();
            let b = fx.model().generate_scored(Some(&z), &beam).unwrap();
            assert!(b.1 >= g.1 - 1e-12, "beam {} < greedy {}", b.1, g.1);
        }
    }
}
