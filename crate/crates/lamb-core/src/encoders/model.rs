//! The bi-encoder: question tower, POI tower with location module, fusion.
//!
//! The question side is textual only. The POI side concatenates a textual
//! vector (d1) with a location vector (d2) and fuses them through a dense
//! layer to the shared dimension d, where ranking happens by inner product.
//! Three location modes exist: `Name` (the main model: tokenized place name
//! through an embedding table and a small dense stack), `Coordinate` (the
//! geo-MLP ablation: raw coordinates through a 3-layer MLP with dropout),
//! and `None` (the no-location ablation).

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Poi, PoiName, ReviewDigest};
use crate::encoders::features::{hash_features, FeatureConfig};
use crate::encoders::location::{tokenize_location, MARKER_COUNT};
use crate::error::{Error, Result};
use crate::nn::{
    checkpoint_bytes, read_checkpoint, write_checkpoint, Activation, CheckpointHeader, DenseCache,
    DenseLayer, Dropout, EmbedCache, EmbeddingTable, Parameter,
};
use crate::nn::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationMode {
    /// Tokenized multi-granularity name through embedding + dense stack.
    Name,
    /// Raw coordinates through a 3-layer MLP (geo-MLP ablation).
    Coordinate,
    /// No location module at all (ablation).
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub feature: FeatureConfig,
    /// POI textual dimension.
    pub d1: usize,
    /// Location dimension.
    pub d2: usize,
    /// Shared output dimension.
    pub d: usize,
    /// Location token vocabulary (including the 4 marker ids).
    pub loc_vocab: usize,
    /// Dense-stack depth of the name location module.
    pub loc_depth: usize,
    pub max_name_tokens: usize,
    pub location_mode: LocationMode,
    /// Dropout rate for the coordinate MLP (training only).
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            feature: FeatureConfig::default(),
            d1: 64,
            d2: 32,
            d: 64,
            loc_vocab: 4096,
            loc_depth: 2,
            max_name_tokens: 64,
            location_mode: LocationMode::Name,
            dropout: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        for (name, v) in [("d1", self.d1), ("d2", self.d2), ("d", self.d)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.loc_vocab <= MARKER_COUNT {
            return Err(Error::Config(format!(
                "loc_vocab must exceed the {MARKER_COUNT} marker ids, got {}",
                self.loc_vocab
            )));
        }
        if ![1, 2, 4].contains(&self.loc_depth) {
            return Err(Error::Config(format!(
                "loc_depth must be one of 1, 2, 4, got {}",
                self.loc_depth
            )));
        }
        if self.max_name_tokens == 0 {
            return Err(Error::Config("max_name_tokens must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Input width of the fusion layer.
    fn fusion_in(&self) -> usize {
        match self.location_mode {
            LocationMode::None => self.d1,
            _ => self.d1 + self.d2,
        }
    }
}

/// Name-mode location module: embedding mean-pool + dense stack.
#[derive(Debug, Clone)]
pub struct NameLoc {
    pub table: EmbeddingTable,
    pub stack: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct NameLocCache {
    embed: EmbedCache,
    stack: Vec<DenseCache>,
}

impl NameLoc {
    pub fn new(config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let table = EmbeddingTable::new("loc.table", config.loc_vocab, config.d2, rng);
        let stack = (0..config.loc_depth)
            .map(|i| {
                let act = if i + 1 < config.loc_depth {
                    Activation::Relu
                } else {
                    Activation::Identity
                };
                DenseLayer::new(&format!("loc.stack{i}"), config.d2, config.d2, act, rng)
            })
            .collect();
        NameLoc { table, stack }
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<(Vec<f64>, NameLocCache)> {
        let (mut h, embed) = self.table.embed_mean(tokens)?;
        let mut caches = Vec::with_capacity(self.stack.len());
        for layer in &self.stack {
            let (next, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = next;
        }
        Ok((h, NameLocCache { embed, stack: caches }))
    }

    pub fn backward(&mut self, cache: &NameLocCache, grad: &[f64]) -> Result<()> {
        let mut g = grad.to_vec();
        for (layer, c) in self.stack.iter_mut().zip(&cache.stack).rev() {
            g = layer.backward(c, &g)?;
        }
        self.table.backward(&cache.embed, &g)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.table.table];
        for l in &self.stack {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.table.table];
        for l in &mut self.stack {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

/// Coordinate-mode location module: `[lat/90, long/180]` through a 3-layer
/// MLP with dropout after each hidden activation.
#[derive(Debug, Clone)]
pub struct CoordLoc {
    pub mlp: Vec<DenseLayer>,
    dropout: Dropout,
}

#[derive(Debug, Clone)]
pub struct CoordLocCache {
    mlp: Vec<DenseCache>,
    /// One mask per hidden layer when training, empty at inference.
    masks: Vec<Vec<f64>>,
}

impl CoordLoc {
    fn new(config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let d2 = config.d2;
        let mlp = vec![
            DenseLayer::new("loc.mlp0", 2, d2, Activation::Relu, rng),
            DenseLayer::new("loc.mlp1", d2, d2, Activation::Relu, rng),
            DenseLayer::new("loc.mlp2", d2, d2, Activation::Identity, rng),
        ];
        Ok(CoordLoc {
            mlp,
            dropout: Dropout::new(config.dropout)?,
        })
    }

    pub fn forward(
        &self,
        coords: [f64; 2],
        mut train_rng: Option<&mut dyn RngCore>,
    ) -> Result<(Vec<f64>, CoordLocCache)> {
        let mut h = coords.to_vec();
        let mut caches = Vec::with_capacity(3);
        let mut masks = Vec::new();
        for (i, layer) in self.mlp.iter().enumerate() {
            let (mut next, cache) = layer.forward(&h)?;
            caches.push(cache);
            if i + 1 < self.mlp.len() {
                if let Some(rng) = train_rng.as_deref_mut() {
                    masks.push(self.dropout.forward_train(&mut next, rng));
                }
            }
            h = next;
        }
        Ok((h, CoordLocCache { mlp: caches, masks }))
    }

    pub fn backward(&mut self, cache: &CoordLocCache, grad: &[f64]) -> Result<()> {
        let mut g = grad.to_vec();
        for (i, (layer, c)) in self.mlp.iter_mut().zip(&cache.mlp).enumerate().rev() {
            if i + 1 < cache.mlp.len() {
                if let Some(mask) = cache.masks.get(i) {
                    Dropout::backward(mask, &mut g);
                }
            }
            g = layer.backward(c, &g)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.mlp.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.mlp
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum LocEncoder {
    Name(NameLoc),
    Coord(CoordLoc),
}

#[derive(Debug, Clone)]
enum LocCache {
    Name(NameLocCache),
    Coord(CoordLocCache),
}

/// Prepared POI inputs so repeated encodes skip featurization.
#[derive(Debug, Clone)]
pub struct PoiInput {
    pub poi_id: String,
    pub features: Vec<f64>,
    pub tokens: Vec<usize>,
    pub coords: [f64; 2],
}

/// Everything the backward pass needs from one POI encode.
#[derive(Debug, Clone)]
pub struct PoiCache {
    p_proj: DenseCache,
    loc: Option<LocCache>,
    fusion: DenseCache,
}

#[derive(Debug, Clone)]
pub struct BiEncoder {
    pub config: EncoderConfig,
    pub seed: u64,
    pub q_proj: DenseLayer,
    pub p_proj: DenseLayer,
    pub loc: Option<LocEncoder>,
    pub fusion: DenseLayer,
}

pub const BIENCODER_KIND: &str = "bi-encoder";
pub const LOC_MODULE_KIND: &str = "loc-module";

impl BiEncoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(derive_seed(seed, "encoder-init"));
        let f = config.feature.buckets;
        let q_proj = DenseLayer::new("q_proj", f, config.d, Activation::Identity, &mut rng);
        let p_proj = DenseLayer::new("p_proj", f, config.d1, Activation::Identity, &mut rng);
        let loc = match config.location_mode {
            LocationMode::Name => Some(LocEncoder::Name(NameLoc::new(&config, &mut rng))),
            LocationMode::Coordinate => Some(LocEncoder::Coord(CoordLoc::new(&config, &mut rng)?)),
            LocationMode::None => None,
        };
        let fusion = DenseLayer::new(
            "fusion",
            config.fusion_in(),
            config.d,
            Activation::Identity,
            &mut rng,
        );
        Ok(BiEncoder {
            config,
            seed,
            q_proj,
            p_proj,
            loc,
            fusion,
        })
    }

    pub fn question_features(&self, text: &str) -> Vec<f64> {
        hash_features(text, &self.config.feature)
    }

    /// Encode a question from precomputed features, keeping the cache.
    pub fn encode_question_cached(&self, features: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        self.q_proj.forward(features)
    }

    pub fn encode_question(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(Error::EmptyInput("question text"));
        }
        Ok(self.encode_question_cached(&self.question_features(text))?.0)
    }

    pub fn backward_question(&mut self, cache: &DenseCache, grad: &[f64]) -> Result<()> {
        self.q_proj.backward(cache, grad)?;
        Ok(())
    }

    /// Featurize and tokenize one POI for repeated encoding.
    pub fn prepare_poi(&self, poi: &Poi, digest: &ReviewDigest) -> Result<PoiInput> {
        if digest.sentences.is_empty() {
            return Err(Error::EmptyPoiText { id: poi.id.clone() });
        }
        Ok(PoiInput {
            poi_id: poi.id.clone(),
            features: hash_features(&digest.joined(), &self.config.feature),
            tokens: tokenize_location(&poi.name, self.config.loc_vocab, self.config.max_name_tokens),
            coords: [poi.location.lat / 90.0, poi.location.long / 180.0],
        })
    }

    /// Encode a prepared POI. Passing a training rng enables dropout in the
    /// coordinate MLP; `None` is deterministic inference.
    pub fn encode_poi_cached(
        &self,
        input: &PoiInput,
        train_rng: Option<&mut dyn RngCore>,
    ) -> Result<(Vec<f64>, PoiCache)> {
        let (text_vec, p_proj_cache) = self.p_proj.forward(&input.features)?;
        let (fused_in, loc_cache) = match &self.loc {
            Some(LocEncoder::Name(name_loc)) => {
                let (loc_vec, cache) = name_loc.forward(&input.tokens)?;
                let mut v = text_vec;
                v.extend_from_slice(&loc_vec);
                (v, Some(LocCache::Name(cache)))
            }
            Some(LocEncoder::Coord(coord_loc)) => {
                let (loc_vec, cache) = coord_loc.forward(input.coords, train_rng)?;
                let mut v = text_vec;
                v.extend_from_slice(&loc_vec);
                (v, Some(LocCache::Coord(cache)))
            }
            None => (text_vec, None),
        };
        let (out, fusion_cache) = self.fusion.forward(&fused_in)?;
        Ok((
            out,
            PoiCache {
                p_proj: p_proj_cache,
                loc: loc_cache,
                fusion: fusion_cache,
            },
        ))
    }

    pub fn encode_poi(&self, poi: &Poi, digest: &ReviewDigest) -> Result<Vec<f64>> {
        let input = self.prepare_poi(poi, digest)?;
        Ok(self.encode_poi_cached(&input, None)?.0)
    }

    /// Location vector of a place name (main model's location module).
    pub fn encode_location(&self, name: &PoiName) -> Result<Vec<f64>> {
        match &self.loc {
            Some(LocEncoder::Name(name_loc)) => {
                let tokens =
                    tokenize_location(name, self.config.loc_vocab, self.config.max_name_tokens);
                Ok(name_loc.forward(&tokens)?.0)
            }
            _ => Err(Error::Config(
                "encode_location requires a name-mode location module".into(),
            )),
        }
    }

    pub fn backward_poi(&mut self, cache: &PoiCache, grad: &[f64]) -> Result<()> {
        let fused_grad = self.fusion.backward(&cache.fusion, grad)?;
        let d1 = self.config.d1;
        self.p_proj.backward(&cache.p_proj, &fused_grad[..d1])?;
        match (&mut self.loc, &cache.loc) {
            (Some(LocEncoder::Name(name_loc)), Some(LocCache::Name(c))) => {
                name_loc.backward(c, &fused_grad[d1..])?;
            }
            (Some(LocEncoder::Coord(coord_loc)), Some(LocCache::Coord(c))) => {
                coord_loc.backward(c, &fused_grad[d1..])?;
            }
            (None, None) => {}
            _ => {
                return Err(Error::Config(
                    "poi cache does not match the model's location mode".into(),
                ))
            }
        }
        Ok(())
    }

    /// All parameters in a fixed, name-stable order.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = vec![
            &self.q_proj.weight,
            &self.q_proj.bias,
            &self.p_proj.weight,
            &self.p_proj.bias,
        ];
        match &self.loc {
            Some(LocEncoder::Name(l)) => out.extend(l.params()),
            Some(LocEncoder::Coord(l)) => out.extend(l.params()),
            None => {}
        }
        out.push(&self.fusion.weight);
        out.push(&self.fusion.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![
            &mut self.q_proj.weight,
            &mut self.q_proj.bias,
            &mut self.p_proj.weight,
            &mut self.p_proj.bias,
        ];
        match &mut self.loc {
            Some(LocEncoder::Name(l)) => out.extend(l.params_mut()),
            Some(LocEncoder::Coord(l)) => out.extend(l.params_mut()),
            None => {}
        }
        out.push(&mut self.fusion.weight);
        out.push(&mut self.fusion.bias);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Serialized checkpoint bytes (deterministic).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint_bytes(
            BIENCODER_KIND,
            self.seed,
            &serde_json::to_value(&self.config)?,
            &self.params(),
        )
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        write_checkpoint(
            path,
            BIENCODER_KIND,
            self.seed,
            &serde_json::to_value(&self.config)?,
            &self.params(),
        )
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let (header, values) = read_checkpoint(path)?;
        Self::from_checkpoint(&header, values)
    }

    pub fn from_checkpoint(header: &CheckpointHeader, values: Vec<Parameter>) -> Result<Self> {
        if header.kind != BIENCODER_KIND {
            return Err(Error::Config(format!(
                "checkpoint kind {:?} is not a {BIENCODER_KIND}",
                header.kind
            )));
        }
        let config: EncoderConfig = serde_json::from_value(header.config.clone())?;
        let mut model = Self::new(config, header.seed)?;
        let mut params = model.params_mut();
        if params.len() != values.len() {
            return Err(Error::ShapeMismatch {
                context: "checkpoint parameter count",
                expected: params.len(),
                got: values.len(),
            });
        }
        for (slot, loaded) in params.iter_mut().zip(values) {
            if slot.name != loaded.name || slot.rows != loaded.rows || slot.cols != loaded.cols {
                return Err(Error::Config(format!(
                    "checkpoint tensor {} ({}x{}) does not fit slot {} ({}x{})",
                    loaded.name, loaded.rows, loaded.cols, slot.name, slot.rows, slot.cols
                )));
            }
            slot.values = loaded.values;
        }
        Ok(model)
    }

    /// Replace the name-mode location module (e.g. with pretrained weights).
    pub fn install_location(&mut self, loc: NameLoc) -> Result<()> {
        match &self.loc {
            Some(LocEncoder::Name(current)) => {
                let cur: Vec<_> = current.params();
                let new: Vec<_> = loc.params();
                if cur.len() != new.len() {
                    return Err(Error::ShapeMismatch {
                        context: "location module parameter count",
                        expected: cur.len(),
                        got: new.len(),
                    });
                }
                for (a, b) in cur.iter().zip(&new) {
                    if a.rows != b.rows || a.cols != b.cols {
                        return Err(Error::Config(format!(
                            "location tensor {} is {}x{}, model expects {}x{}",
                            b.name, b.rows, b.cols, a.rows, a.cols
                        )));
                    }
                }
                self.loc = Some(LocEncoder::Name(loc));
                Ok(())
            }
            _ => Err(Error::Config(
                "model has no name-mode location module to replace".into(),
            )),
        }
    }

    /// The name-mode location module, if this model has one.
    pub fn name_loc(&self) -> Option<&NameLoc> {
        match &self.loc {
            Some(LocEncoder::Name(l)) => Some(l),
            _ => None,
        }
    }

    pub fn name_loc_mut(&mut self) -> Option<&mut NameLoc> {
        match &mut self.loc {
            Some(LocEncoder::Name(l)) => Some(l),
            _ => None,
        }
    }

    /// Location tokens for a POI under this model's config.
    pub fn location_tokens(&self, name: &PoiName) -> Vec<usize> {
        tokenize_location(name, self.config.loc_vocab, self.config.max_name_tokens)
    }
}

/// Persist a pretrained name-mode location module on its own.
pub fn save_loc_module(
    path: impl AsRef<std::path::Path>,
    loc: &NameLoc,
    config: &EncoderConfig,
    seed: u64,
) -> Result<()> {
    write_checkpoint(
        path,
        LOC_MODULE_KIND,
        seed,
        &serde_json::to_value(config)?,
        &loc.params(),
    )
}

/// Load a location-module checkpoint saved by [`save_loc_module`].
pub fn load_loc_module(path: impl AsRef<std::path::Path>) -> Result<(NameLoc, EncoderConfig, u64)> {
    let (header, values) = read_checkpoint(path)?;
    if header.kind != LOC_MODULE_KIND {
        return Err(Error::Config(format!(
            "checkpoint kind {:?} is not a {LOC_MODULE_KIND}",
            header.kind
        )));
    }
    let config: EncoderConfig = serde_json::from_value(header.config.clone())?;
    config.validate()?;
    let mut rng = seeded_rng(derive_seed(header.seed, "encoder-init"));
    let mut loc = NameLoc::new(&config, &mut rng);
    let mut slots = loc.params_mut();
    if slots.len() != values.len() {
        return Err(Error::ShapeMismatch {
            context: "location checkpoint parameter count",
            expected: slots.len(),
            got: values.len(),
        });
    }
    for (slot, loaded) in slots.iter_mut().zip(values) {
        if slot.name != loaded.name || slot.rows != loaded.rows || slot.cols != loaded.cols {
            return Err(Error::Config(format!(
                "location tensor {} does not fit slot {}",
                loaded.name, slot.name
            )));
        }
        slot.values = loaded.values;
    }
    Ok((loc, config, header.seed))
}
