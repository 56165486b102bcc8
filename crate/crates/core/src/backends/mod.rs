//! Model boundaries.
//!
//! Every learned component of the pipeline (vision-language model, text and
//! image embedders, foreground segmenter, latent autoencoder, conditional
//! noise predictor, captioner, feature extractor, 2-D projector) sits behind
//! one of the traits below. Each trait has a deterministic mock in [`mock`],
//! so the algorithmic pipeline can be exercised end to end without network
//! access or an accelerator.

mod http;
pub mod mock;
mod templates;
mod vllm;

pub use http::{ChatVllm, HttpDiffusion, RetryPolicy};
pub use templates::{PromptTemplates, DEFAULT_TEMPLATE_ID};
pub use vllm::{parse_answer, vllm_query, VllmAnswer};

use serde::{Deserialize, Serialize};

use crate::imageops::{BinaryMask, Image};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Vllm,
    TextEmbedder,
    ImageEmbedder,
    Segmenter,
    Inpainter,
    Captioner,
    FeatureExtractor,
    Projector,
}

/// What a run manifest records about each backend it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub name: String,
    pub deterministic: bool,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind, name: impl Into<String>, deterministic: bool) -> Self {
        Self {
            kind,
            name: name.into(),
            deterministic,
            config: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }
}

/// L2-normalised embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalises `values`; fails on empty or all-zero input.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding has no components"));
        }
        let norm = values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::invalid("embedding has zero or non-finite norm"));
        }
        Ok(Self(
            values.into_iter().map(|v| (v as f64 / norm) as f32).collect(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// Cosine similarity; both vectors are unit length so this is a dot product.
    pub fn cosine(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f32>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Channel-major latent tensor `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("latent dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "{} values do not fill a {channels}x{height}x{width} latent",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "latent shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Elementwise combination of two same-shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;
}

/// Vision-language model answering a free-form question about one image.
pub trait Vllm: Backend {
    fn ask(&self, object_name: &str, question: &str, image: &Image) -> Result<String>;
}

pub trait TextEmbedder: Backend {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub trait ImageEmbedder: Backend {
    fn embed_image(&self, image: &Image) -> Result<EmbeddingVector>;
}

pub trait Segmenter: Backend {
    /// Mask of the salient object, same size as `image`.
    fn segment_foreground(&self, image: &Image) -> Result<BinaryMask>;
}

/// Image ↔ latent autoencoder with a fixed spatial downscale factor.
pub trait LatentCodec: Backend {
    fn downscale(&self) -> usize;
    fn encode(&self, image: &Image) -> Result<LatentTensor>;
    fn decode(&self, latent: &LatentTensor) -> Result<Image>;
}

/// Which form of the adaptive texture the noise predictor is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionForm {
    /// The masked texture image itself.
    #[default]
    TextureImage,
    /// Canny edges of the masked texture, rendered as a 0/1 image.
    EdgeMap,
}

/// Conditional noise estimator `ε(z_t, t, M_in, x_tex, prompt)`.
pub trait NoisePredictor: Backend {
    fn predict_noise(
        &self,
        z_t: &LatentTensor,
        t: usize,
        inpaint_mask: &BinaryMask,
        condition: &Image,
        prompt: &str,
    ) -> Result<LatentTensor>;

    fn condition_form(&self) -> ConditionForm {
        ConditionForm::TextureImage
    }

    /// Called with the noise sample drawn when a trajectory is initialised.
    fn observe_noise(&self, _eps: &LatentTensor) {}
}

pub trait Captioner: Backend {
    fn caption(&self, image: &Image, category_hint: &str) -> Result<String>;
}

/// Per-image outputs of the evaluation network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFeatures {
    /// Class posterior `p(y | x)`, sums to 1.
    pub probabilities: Vec<f64>,
    /// Perceptual embedding used for pairwise distances.
    pub perceptual: Vec<f64>,
}

pub trait FeatureExtractor: Backend {
    fn extract(&self, images: &[Image]) -> Result<Vec<ImageFeatures>>;
}

/// Embeds high-dimensional points in 2-D for plotting.
pub trait Projector: Backend {
    fn project(&self, points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

/// Checks the shared preconditions of [`NoisePredictor::predict_noise`].
pub fn check_noise_inputs(
    z_t: &LatentTensor,
    t: usize,
    max_t: usize,
    downscale: usize,
    inpaint_mask: &BinaryMask,
    condition: &Image,
) -> Result<()> {
    if t == 0 || t > max_t {
        return Err(Error::invalid(format!("timestep {t} outside [1, {max_t}]")));
    }
    let expected = (z_t.width * downscale, z_t.height * downscale);
    if inpaint_mask.dims() != expected || condition.dims() != expected {
        return Err(Error::invalid(format!(
            "conditioning is {:?}/{:?}, latent implies {expected:?}",
            inpaint_mask.dims(),
            condition.dims()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_normalised() {
        let e = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.values(), &[0.6, 0.8]);
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn cosine_rejects_dim_mismatch() {
        let a = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(a.cosine(&b).is_err());
    }

    #[test]
    fn descriptor_serialises_kind_in_kebab_case() {
        let d = BackendDescriptor::new(BackendKind::FeatureExtractor, "x", true);
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"feature-extractor\""), "{s}");
    }

    #[test]
    fn latent_shape_checks() {
        assert!(LatentTensor::new(1, 2, 2, vec![0.0; 3]).is_err());
        let a = LatentTensor::zeros(1, 2, 2);
        let b = LatentTensor::zeros(1, 2, 3);
        assert!(a.zip_map(&b, |x, _| x).is_err());
    }
}
