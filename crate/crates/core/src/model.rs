//! Assembled caption system: encoder, bridge, frozen decoder and the frozen
//! visual proxy, with checkpoint persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::checkpoint::{self, CheckpointMeta};
use crate::dataset::{CaptionTokens, FmriSample, PatchGrid, RoiName, RoiSequence};
use crate::encoder::{Encoder, EncoderConfig, LatentRepresentation};
use crate::error::{Error, Result};
use crate::lm::{Bridge, BridgeConfig, CaptionModel, Decoder, DecoderConfig, GenerationConfig};
use crate::params::{Lookup, ParamStore};
use crate::rng::{normal, StreamRng};

pub const DECODER_KIND: &str = "decoder";
pub const MODEL_KIND: &str = "caption-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMode {
    /// Use each sample's stored proxy embedding.
    #[default]
    FromDataset,
    /// A fixed random linear map of the mean patch embedding.
    FrozenRandomMap,
}

/// Frozen image-side target for the class embedding.
#[derive(Debug, Clone)]
pub struct VisualProxy {
    pub mode: ProxyMode,
    pub d_proxy: usize,
    pub embed_dim: usize,
    store: ParamStore,
}

/// `k = min(rows, cols)` orthonormal vectors laid out so that `x · P` is an
/// isometry when `rows <= cols` and an orthogonal projection otherwise.
fn orthonormal_map(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    let k = rows.min(cols);
    let n = rows.max(cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    if rows <= cols {
        Matrix::from_shape_fn((rows, cols), |(i, j)| basis[i][j])
    } else {
        Matrix::from_shape_fn((rows, cols), |(i, j)| basis[j][i])
    }
}

impl VisualProxy {
    pub fn new(mode: ProxyMode, d_proxy: usize, embed_dim: usize, rng: &mut StreamRng) -> Result<Self> {
        if d_proxy == 0 {
            return Err(Error::Config("d_proxy must be positive".into()));
        }
        let mut store = ParamStore::new(false);
        if mode == ProxyMode::FrozenRandomMap {
            let std = 1.0 / (d_proxy as f64).sqrt();
            store.add(
                "proxy.random",
                Matrix::from_shape_fn((d_proxy, d_proxy), |_| std * normal(rng)),
            )?;
        }
        if d_proxy != embed_dim {
            store.add("proxy.map", orthonormal_map(d_proxy, embed_dim, rng))?;
        }
        store.round_to_f32();
        Ok(Self {
            mode,
            d_proxy,
            embed_dim,
            store,
        })
    }

    pub fn from_store(mode: ProxyMode, d_proxy: usize, embed_dim: usize, mut store: ParamStore) -> Result<Self> {
        store.set_trainable(false);
        let check = |name: &str, shape: (usize, usize), needed: bool| -> Result<()> {
            match store.by_name(name) {
                Some(m) if needed && m.dim() == shape => Ok(()),
                None if !needed => Ok(()),
                _ => Err(Error::Checkpoint(format!("proxy tensor {name} missing or misshapen"))),
            }
        };
        check("proxy.random", (d_proxy, d_proxy), mode == ProxyMode::FrozenRandomMap)?;
        check("proxy.map", (d_proxy, embed_dim), d_proxy != embed_dim)?;
        Ok(Self {
            mode,
            d_proxy,
            embed_dim,
            store,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Maps proxy-space rows (`n × d_proxy`) into the encoder space.
    pub fn map_rows(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.ncols() != self.d_proxy {
            return Err(Error::Shape(format!(
                "proxy width: expected {}, found {}",
                self.d_proxy,
                rows.ncols()
            )));
        }
        let mut x = rows.clone();
        if let Some(r) = self.store.by_name("proxy.random") {
            x = x.dot(r);
        }
        if let Some(p) = self.store.by_name("proxy.map") {
            x = x.dot(p);
        }
        Ok(x)
    }

    /// Pulls an encoder-space vector back into the proxy space through the
    /// transpose of the orthonormal map.
    pub fn to_proxy_space(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.embed_dim {
            return Err(Error::Shape(format!(
                "encoder width: expected {}, found {}",
                self.embed_dim,
                v.len()
            )));
        }
        Ok(match self.store.by_name("proxy.map") {
            Some(p) => p.dot(&ndarray::ArrayView1::from(v)).to_vec(),
            None => v.to_vec(),
        })
    }

    /// Patch cells expressed in the space the class embedding is aligned to,
    /// before the orthonormal map: raw cells, or cells through the frozen
    /// random map when targets are built from patches.
    pub fn patch_features(&self, patches: &PatchGrid) -> Result<Matrix> {
        if patches.dim() != self.d_proxy {
            return Err(Error::Shape(format!(
                "patch width: expected {}, found {}",
                self.d_proxy,
                patches.dim()
            )));
        }
        Ok(match self.store.by_name("proxy.random") {
            Some(r) => patches.cells.dot(r),
            None => patches.cells.clone(),
        })
    }

    /// Alignment target for a sample, `1 × embed_dim`.
    pub fn target(&self, sample: &FmriSample) -> Result<Matrix> {
        let source = match self.mode {
            ProxyMode::FromDataset => sample.proxy_embedding.clone().ok_or_else(|| {
                Error::Invalid(format!("sample {} has no proxy embedding", sample.sample_id))
            })?,
            ProxyMode::FrozenRandomMap => sample
                .patch_embeddings
                .as_ref()
                .map(|p| p.mean_cell())
                .ok_or_else(|| Error::Invalid(format!("sample {} has no patch embeddings", sample.sample_id)))?,
        };
        let row = Matrix::from_shape_vec((1, source.len()), source).expect("row");
        self.map_rows(&row)
    }
}

/// Decoder weights frozen after language-model pretraining.
#[derive(Debug, Clone)]
pub struct FrozenDecoder {
    pub decoder: Decoder,
    pub store: ParamStore,
    pub vocab_fingerprint: String,
}

impl FrozenDecoder {
    pub fn new(decoder: Decoder, mut store: ParamStore, vocab_fingerprint: String) -> Self {
        store.round_to_f32();
        store.set_trainable(false);
        Self {
            decoder,
            store,
            vocab_fingerprint,
        }
    }

    pub fn model(&self) -> CaptionModel<'_> {
        CaptionModel {
            decoder: &self.decoder,
            decoder_store: &self.store,
            bridge: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            kind: DECODER_KIND.into(),
            config: serde_json::to_value(&self.decoder.config).expect("config serializes"),
            dataset_fingerprint: None,
            vocab_fingerprint: self.vocab_fingerprint.clone(),
        };
        checkpoint::save(dir, &meta, &[("decoder", &self.store)])
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut ck = checkpoint::load(dir)?;
        ck.expect_kind(DECODER_KIND)?;
        let config: DecoderConfig = ck.config()?;
        let mut store = ck.take_store("decoder")?;
        store.set_trainable(false);
        let decoder = Decoder::build(&mut Lookup::new(&store), &config)?;
        Ok(Self {
            decoder,
            store,
            vocab_fingerprint: ck.header.vocab_fingerprint,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub bridge: BridgeConfig,
    pub decoder: DecoderConfig,
    pub proxy_mode: ProxyMode,
    pub d_proxy: usize,
    /// ROI rows the encoder was trained on, in order.
    pub rois: Vec<RoiName>,
}

#[derive(Debug)]
pub struct CaptionSystem {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub encoder_store: ParamStore,
    pub bridge: Bridge,
    pub bridge_store: ParamStore,
    pub frozen: FrozenDecoder,
    pub proxy: VisualProxy,
    pub dataset_fingerprint: Option<String>,
}

impl CaptionSystem {
    pub fn caption_model(&self) -> CaptionModel<'_> {
        CaptionModel {
            decoder: &self.frozen.decoder,
            decoder_store: &self.frozen.store,
            bridge: Some((&self.bridge, &self.bridge_store)),
        }
    }

    fn check_rois(&self, rois: &RoiSequence) -> Result<()> {
        if rois.names != self.config.rois {
            return Err(Error::Shape(format!(
                "model expects ROIs {:?}, sample has {:?}",
                self.config.rois, rois.names
            )));
        }
        Ok(())
    }

    pub fn encode(&self, rois: &RoiSequence) -> Result<LatentRepresentation> {
        self.check_rois(rois)?;
        self.encoder.encode(&self.encoder_store, rois)
    }

    pub fn caption(&self, sample: &FmriSample, gen: &GenerationConfig) -> Result<CaptionTokens> {
        let z = self.encode(&sample.rois)?;
        self.caption_model().generate(Some(&z), gen)
    }

    pub fn trainable_params(&self) -> usize {
        self.encoder_store.num_scalars() + self.bridge_store.num_scalars()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            kind: MODEL_KIND.into(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            vocab_fingerprint: self.frozen.vocab_fingerprint.clone(),
        };
        checkpoint::save(
            dir,
            &meta,
            &[
                ("encoder", &self.encoder_store),
                ("bridge", &self.bridge_store),
                ("decoder", &self.frozen.store),
                ("proxy", self.proxy.store()),
            ],
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut ck = checkpoint::load(dir)?;
        ck.expect_kind(MODEL_KIND)?;
        let config: ModelConfig = ck.config()?;
        let encoder_store = ck.take_store("encoder")?;
        let bridge_store = ck.take_store("bridge")?;
        let mut decoder_store = ck.take_store("decoder")?;
        decoder_store.set_trainable(false);
        let proxy_store = ck.take_store("proxy")?;
        let encoder = Encoder::build(&mut Lookup::new(&encoder_store), &config.encoder)?;
        let bridge = Bridge::build(
            &mut Lookup::new(&bridge_store),
            &config.bridge,
            &config.decoder,
            config.encoder.embed_dim,
        )?;
        let decoder = Decoder::build(&mut Lookup::new(&decoder_store), &config.decoder)?;
        let proxy = VisualProxy::from_store(
            config.proxy_mode,
            config.d_proxy,
            config.encoder.embed_dim,
            proxy_store,
        )?;
        Ok(Self {
            frozen: FrozenDecoder {
                decoder,
                store: decoder_store,
                vocab_fingerprint: ck.header.vocab_fingerprint.clone(),
            },
            config,
            encoder,
            encoder_store,
            bridge,
            bridge_store,
            proxy,
            dataset_fingerprint: ck.header.dataset_fingerprint,
        })
    }
}
