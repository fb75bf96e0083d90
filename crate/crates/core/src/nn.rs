//! Transformer building blocks shared by the encoder and the decoder.

use rand::Rng;

use crate::autograd::{Graph, Matrix, Var};
use crate::error::Result;
use crate::params::{Init, ParamId, ParamSource, ParamStore};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn build(
        src: &mut dyn ParamSource,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
    ) -> Result<Self> {
        Ok(Self {
            w: src.param(&format!("{name}.w"), (in_dim, out_dim), init)?,
            b: src.param(&format!("{name}.b"), (1, out_dim), Init::Zeros)?,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn build(src: &mut dyn ParamSource, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: src.param(&format!("{name}.gamma"), (1, dim), Init::Ones)?,
            beta: src.param(&format!("{name}.beta"), (1, dim), Init::Zeros)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn build(src: &mut dyn ParamSource, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fc1: Linear::build(src, &format!("{name}.fc1"), dim, hidden, Init::TruncNormal(INIT_STD))?,
            fc2: Linear::build(src, &format!("{name}.fc2"), hidden, dim, Init::TruncNormal(INIT_STD))?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let h = self.fc1.forward(g, store, x);
        let h = g.gelu(h);
        self.fc2.forward(g, store, h)
    }
}

/// Scaled dot-product attention over `n_heads` column blocks of width `head_dim`.
pub fn multi_head_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    n_heads: usize,
    head_dim: usize,
    causal: bool,
) -> Var {
    let scale = 1.0 / (head_dim as f64).sqrt();
    let heads: Vec<Var> = (0..n_heads)
        .map(|h| {
            let qh = g.slice_cols(q, h * head_dim, head_dim);
            let kh = g.slice_cols(k, h * head_dim, head_dim);
            let vh = g.slice_cols(v, h * head_dim, head_dim);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let probs = g.softmax(scores, causal);
            g.matmul(probs, vh)
        })
        .collect();
    if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    }
}

#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub n_heads: usize,
    pub head_dim: usize,
}

impl SelfAttention {
    pub fn build(src: &mut dyn ParamSource, name: &str, dim: usize, n_heads: usize) -> Result<Self> {
        Ok(Self {
            qkv: Linear::build(src, &format!("{name}.qkv"), dim, 3 * dim, Init::TruncNormal(INIT_STD))?,
            proj: Linear::build(src, &format!("{name}.proj"), dim, dim, Init::TruncNormal(INIT_STD))?,
            n_heads,
            head_dim: dim / n_heads,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, causal: bool) -> Var {
        let dim = self.n_heads * self.head_dim;
        let qkv = self.qkv.forward(g, store, x);
        let q = g.slice_cols(qkv, 0, dim);
        let k = g.slice_cols(qkv, dim, dim);
        let v = g.slice_cols(qkv, 2 * dim, dim);
        let out = multi_head_attention(g, q, k, v, self.n_heads, self.head_dim, causal);
        self.proj.forward(g, store, out)
    }
}

/// Inverted dropout. Identity when `p == 0`.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph, x: Var, p: f64, rng: &mut R) -> Var {
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 - p;
    let dim = g.value(x).dim();
    let mask = Matrix::from_shape_fn(dim, |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    g.mul_const(x, mask)
}
