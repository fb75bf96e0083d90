//! Transformer encoder over ROI tokens.
//!
//! Each ROI row (padded to width `H`) is linearly projected to one token; a
//! learned class token is prepended and learned positions are added. Row 0 of
//! the output is the class embedding.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, Var};
use crate::dataset::RoiSequence;
use crate::error::{Error, Result};
use crate::nn::{dropout, LayerNorm, Linear, Mlp, SelfAttention, INIT_STD};
use crate::params::{Init, Initializer, ParamId, ParamSource, ParamStore};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderVariant {
    S,
    B,
    L,
}

impl EncoderVariant {
    pub const ALL: [EncoderVariant; 3] = [EncoderVariant::S, EncoderVariant::B, EncoderVariant::L];

    /// Layers and heads at full scale.
    pub fn full_depth(self) -> (usize, usize) {
        match self {
            EncoderVariant::S => (4, 4),
            EncoderVariant::B => (8, 8),
            EncoderVariant::L => (16, 16),
        }
    }

    /// Shrunk analog keeping the S < B < L ordering.
    pub fn desk_depth(self) -> (usize, usize) {
        match self {
            EncoderVariant::S => (1, 2),
            EncoderVariant::B => (2, 4),
            EncoderVariant::L => (4, 8),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderVariant::S => "S",
            EncoderVariant::B => "B",
            EncoderVariant::L => "L",
        }
    }
}

impl std::str::FromStr for EncoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(EncoderVariant::S),
            "B" | "b" => Ok(EncoderVariant::B),
            "L" | "l" => Ok(EncoderVariant::L),
            _ => Err(Error::Config(format!("unknown encoder variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: f64,
    pub dropout: f64,
    /// Pad width `H` of the ROI rows.
    pub input_dim: usize,
    /// Number of ROI tokens `T`.
    pub n_tokens: usize,
}

impl EncoderConfig {
    pub fn desk(variant: EncoderVariant, input_dim: usize, n_tokens: usize) -> Self {
        let (n_layers, n_heads) = variant.desk_depth();
        Self {
            embed_dim: 64,
            n_layers,
            n_heads,
            mlp_ratio: 4.0,
            dropout: 0.0,
            input_dim,
            n_tokens,
        }
    }

    pub fn full(variant: EncoderVariant, input_dim: usize, n_tokens: usize) -> Self {
        let (n_layers, n_heads) = variant.full_depth();
        Self {
            embed_dim: 768,
            n_layers,
            n_heads,
            mlp_ratio: 4.0,
            dropout: 0.0,
            input_dim,
            n_tokens,
        }
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_layers == 0 {
            return bad("encoder needs at least one layer".into());
        }
        if self.n_heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "embed_dim {} must be a positive multiple of n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if self.input_dim == 0 || self.n_tokens == 0 {
            return bad("input_dim and n_tokens must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.mlp_hidden() == 0 {
            return bad("mlp_ratio yields an empty hidden layer".into());
        }
        Ok(())
    }
}

/// Encoder output `Z`: `(T + 1) × embed_dim`, class embedding in row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRepresentation {
    pub hidden: Matrix,
}

impl LatentRepresentation {
    pub fn class_embedding(&self) -> ArrayView1<'_, f64> {
        self.hidden.row(0)
    }

    pub fn n_rows(&self) -> usize {
        self.hidden.nrows()
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    attn: SelfAttention,
    ln2: LayerNorm,
    mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    proj: Linear,
    cls: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
}

impl Encoder {
    pub fn build(src: &mut dyn ParamSource, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let e = config.embed_dim;
        let normal = Init::TruncNormal(INIT_STD);
        let proj = Linear::build(src, "enc.proj", config.input_dim, e, normal)?;
        let cls = src.param("enc.cls", (1, e), normal)?;
        let pos = src.param("enc.pos", (config.n_tokens + 1, e), normal)?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = format!("enc.block{l}");
            blocks.push(Block {
                ln1: LayerNorm::build(src, &format!("{p}.ln1"), e)?,
                attn: SelfAttention::build(src, &format!("{p}.attn"), e, config.n_heads)?,
                ln2: LayerNorm::build(src, &format!("{p}.ln2"), e)?,
                mlp: Mlp::build(src, &format!("{p}.mlp"), e, config.mlp_hidden())?,
            });
        }
        let ln_f = LayerNorm::build(src, "enc.ln_f", e)?;
        Ok(Self {
            config: config.clone(),
            proj,
            cls,
            pos,
            blocks,
            ln_f,
        })
    }

    /// Fresh trainable store with initialized weights.
    pub fn init(config: &EncoderConfig, rng: &mut StreamRng) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new(true);
        let enc = Self::build(&mut Initializer::new(&mut store, rng), config)?;
        Ok((enc, store))
    }

    fn check_input(&self, rois: &RoiSequence) -> Result<()> {
        let (t, h) = rois.values.dim();
        if h != self.config.input_dim {
            return Err(Error::Shape(format!(
                "ROI width: expected H = {}, found {h}",
                self.config.input_dim
            )));
        }
        if t != self.config.n_tokens {
            return Err(Error::Shape(format!(
                "ROI token count: expected T = {}, found {t}",
                self.config.n_tokens
            )));
        }
        Ok(())
    }

    /// Token matrix `(T + 1) × embed_dim` before the transformer blocks.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, rois: &RoiSequence) -> Result<Var> {
        self.check_input(rois)?;
        let x = g.constant(rois.values.clone());
        let projected = self.proj.forward(g, store, x);
        let cls = g.param(store, self.cls);
        let tokens = g.concat_rows(&[cls, projected]);
        let pos = g.param(store, self.pos);
        Ok(g.add(tokens, pos))
    }

    /// Full forward pass. Dropout is active only when `rng` is given.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        rois: &RoiSequence,
        mut rng: Option<&mut StreamRng>,
    ) -> Result<Var> {
        let p = self.config.dropout;
        let mut x = self.embed(g, store, rois)?;
        if let Some(r) = rng.as_deref_mut() {
            x = dropout(g, x, p, r);
        }
        for (l, block) in self.blocks.iter().enumerate() {
            let h = block.ln1.forward(g, store, x);
            let mut h = block.attn.forward(g, store, h, false);
            if let Some(r) = rng.as_deref_mut() {
                h = dropout(g, h, p, r);
            }
            x = g.add(x, h);
            let h = block.ln2.forward(g, store, x);
            let mut h = block.mlp.forward(g, store, h);
            if let Some(r) = rng.as_deref_mut() {
                h = dropout(g, h, p, r);
            }
            x = g.add(x, h);
            if g.value(x).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: l });
            }
        }
        Ok(self.ln_f.forward(g, store, x))
    }

    /// Eval-mode encoding; a pure function of the weights and the input.
    pub fn encode(&self, store: &ParamStore, rois: &RoiSequence) -> Result<LatentRepresentation> {
        let mut g = Graph::new();
        let z = self.forward(&mut g, store, rois, None)?;
        Ok(LatentRepresentation {
            hidden: g.value(z).clone(),
        })
    }
}

pub fn class_embedding(z: &LatentRepresentation) -> Vec<f64> {
    z.class_embedding().to_vec()
}
