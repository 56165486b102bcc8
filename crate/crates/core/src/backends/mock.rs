//! Deterministic stand-ins for every backend trait.
//!
//! All mocks are pure functions of their inputs and configured seed, need
//! no network or accelerator, and are safe to share across threads.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::thread::ThreadId;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{
    check_noise_inputs, Backend, BackendDescriptor, BackendKind, Captioner, EmbeddingVector,
    FeatureExtractor, ImageEmbedder, ImageFeatures, LatentCodec, LatentTensor, NoisePredictor,
    Projector, Segmenter, TextEmbedder, Vllm,
};
use crate::imageops::{BinaryMask, Image};
use crate::{Error, Result};

/// Latent downscale factor shared by the mock codec and the pipeline defaults.
pub const LATENT_FACTOR: usize = 8;

fn rng_from(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

fn image_bytes(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.width() * image.height() * 3);
    out.extend_from_slice(&(image.width() as u64).to_le_bytes());
    out.extend_from_slice(&(image.height() as u64).to_le_bytes());
    out.extend(image.to_rgb8_bytes());
    out
}

/// Answers from a fixed table, falling back to a seeded pick from a vocabulary.
#[derive(Debug, Clone)]
pub struct MockVllm {
    pub seed: u64,
    pub answers: BTreeMap<String, String>,
    pub vocabulary: Vec<String>,
}

impl Default for MockVllm {
    fn default() -> Self {
        let answers = [("cashew", "Cracked, moldy")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let vocabulary = [
            "cracked", "scratched", "stained", "faded", "moldy", "rusty", "dented", "burnt",
            "chipped", "discolored",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        Self {
            seed: 0,
            answers,
            vocabulary,
        }
    }
}

impl Backend for MockVllm {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Vllm, "mock-vllm", true)
            .with_config(json!({ "seed": self.seed, "answers": self.answers }))
    }
}

impl Vllm for MockVllm {
    fn ask(&self, object_name: &str, question: &str, image: &Image) -> Result<String> {
        if let Some(answer) = self.answers.get(object_name) {
            return Ok(answer.clone());
        }
        if self.vocabulary.is_empty() {
            return Err(Error::Parse { raw: String::new() });
        }
        let mut rng = rng_from(&[
            &self.seed.to_le_bytes(),
            object_name.as_bytes(),
            question.as_bytes(),
            &image_bytes(image),
        ]);
        let n = rng.random_range(2..=3usize).min(self.vocabulary.len());
        let mut picked: Vec<&str> = Vec::new();
        while picked.len() < n {
            let w = &self.vocabulary[rng.random_range(0..self.vocabulary.len())];
            if !picked.contains(&w.as_str()) {
                picked.push(w);
            }
        }
        Ok(picked.join(", "))
    }
}

/// Seeded hash-to-vector embedder for both text and images.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub name: String,
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            name: "hash-embedder".into(),
            dim,
            seed,
        }
    }

    fn vector(&self, domain: &str, bytes: &[u8]) -> Result<EmbeddingVector> {
        let mut rng = rng_from(&[&self.seed.to_le_bytes(), domain.as_bytes(), bytes]);
        let values = (0..self.dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        EmbeddingVector::new(values)
    }

    fn desc(&self, kind: BackendKind) -> BackendDescriptor {
        BackendDescriptor::new(kind, &self.name, true)
            .with_config(json!({ "dim": self.dim, "seed": self.seed }))
    }
}

impl Backend for HashEmbedder {
    fn descriptor(&self) -> BackendDescriptor {
        self.desc(BackendKind::ImageEmbedder)
    }
}

impl TextEmbedder for HashEmbedder {
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        self.vector("text", text.as_bytes())
    }
}

impl ImageEmbedder for HashEmbedder {
    fn embed_image(&self, image: &Image) -> Result<EmbeddingVector> {
        self.vector("image", &image_bytes(image))
    }
}

impl HashEmbedder {
    /// Descriptor for the text side of the embedder.
    pub fn text_descriptor(&self) -> BackendDescriptor {
        self.desc(BackendKind::TextEmbedder)
    }
}

/// Foreground = pixels whose luma is strictly above `threshold`.
#[derive(Debug, Clone)]
pub struct ThresholdSegmenter {
    pub threshold: f32,
}

impl Default for ThresholdSegmenter {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl Backend for ThresholdSegmenter {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Segmenter, "threshold-segmenter", true)
            .with_config(json!({ "threshold": self.threshold }))
    }
}

impl Segmenter for ThresholdSegmenter {
    fn segment_foreground(&self, image: &Image) -> Result<BinaryMask> {
        let gray = image.to_gray();
        Ok(BinaryMask::from_fn(image.width(), image.height(), |x, y| {
            gray.get(x, y) > self.threshold
        }))
    }
}

/// Block-average encoder and nearest-neighbour decoder with factor 8.
///
/// The latent has one channel per RGB channel, so `decode(encode(x)) == x`
/// for images that are constant on every 8×8 block.
#[derive(Debug, Clone, Default)]
pub struct MockCodec;

impl Backend for MockCodec {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Inpainter, "mock-codec", true)
            .with_config(json!({ "downscale": LATENT_FACTOR }))
    }
}

impl LatentCodec for MockCodec {
    fn downscale(&self) -> usize {
        LATENT_FACTOR
    }

    fn encode(&self, image: &Image) -> Result<LatentTensor> {
        let (w, h) = image.dims();
        let f = LATENT_FACTOR;
        if w % f != 0 || h % f != 0 {
            return Err(Error::invalid(format!(
                "{w}x{h} image is not divisible by the latent factor {f}"
            )));
        }
        let (lw, lh) = (w / f, h / f);
        let mut sums = vec![0.0f64; 3 * lw * lh];
        for y in 0..h {
            for x in 0..w {
                let px = image.get(x, y);
                for (c, v) in px.iter().enumerate() {
                    sums[(c * lh + y / f) * lw + x / f] += *v as f64;
                }
            }
        }
        let area = (f * f) as f64;
        LatentTensor::new(3, lh, lw, sums.into_iter().map(|s| s / area).collect())
    }

    fn decode(&self, latent: &LatentTensor) -> Result<Image> {
        if latent.channels != 3 {
            return Err(Error::invalid(format!(
                "mock codec decodes 3-channel latents, got {}",
                latent.channels
            )));
        }
        let f = LATENT_FACTOR;
        Ok(Image::from_fn(latent.width * f, latent.height * f, |x, y| {
            [0, 1, 2].map(|c| latent.get(c, y / f, x / f) as f32)
        }))
    }
}

/// Noise predictor that always answers zero.
#[derive(Debug, Clone)]
pub struct ZeroNoise {
    pub max_t: usize,
}

impl Default for ZeroNoise {
    fn default() -> Self {
        Self { max_t: 1000 }
    }
}

impl Backend for ZeroNoise {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Inpainter, "zero-noise", true)
    }
}

impl NoisePredictor for ZeroNoise {
    fn predict_noise(
        &self,
        z_t: &LatentTensor,
        t: usize,
        inpaint_mask: &BinaryMask,
        condition: &Image,
        _prompt: &str,
    ) -> Result<LatentTensor> {
        check_noise_inputs(z_t, t, self.max_t, LATENT_FACTOR, inpaint_mask, condition)?;
        let (c, h, w) = z_t.shape();
        Ok(LatentTensor::zeros(c, h, w))
    }
}

/// Noise predictor that returns the exact noise sample recorded when the
/// trajectory was initialised, making every DDIM step an exact inversion.
///
/// Recordings are kept per calling thread so concurrent trajectories on a
/// worker pool do not see each other's noise.
#[derive(Debug, Default)]
pub struct OracleNoise {
    pub max_t: usize,
    recorded: Mutex<HashMap<ThreadId, LatentTensor>>,
}

impl OracleNoise {
    pub fn new(max_t: usize) -> Self {
        Self {
            max_t,
            recorded: Mutex::new(HashMap::new()),
        }
    }

    pub fn record(&self, eps: &LatentTensor) {
        self.recorded
            .lock()
            .expect("oracle lock")
            .insert(std::thread::current().id(), eps.clone());
    }
}

impl Backend for OracleNoise {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Inpainter, "oracle-noise", true)
    }
}

impl NoisePredictor for OracleNoise {
    fn predict_noise(
        &self,
        z_t: &LatentTensor,
        t: usize,
        inpaint_mask: &BinaryMask,
        condition: &Image,
        _prompt: &str,
    ) -> Result<LatentTensor> {
        check_noise_inputs(z_t, t, self.max_t.max(1), LATENT_FACTOR, inpaint_mask, condition)?;
        let recorded = self.recorded.lock().expect("oracle lock");
        let eps = recorded
            .get(&std::thread::current().id())
            .ok_or_else(|| Error::invalid("oracle noise queried before any noise was recorded"))?;
        eps.check_same_shape(z_t)?;
        Ok(eps.clone())
    }

    fn observe_noise(&self, eps: &LatentTensor) {
        self.record(eps);
    }
}

/// Captions every texture as `texture: <category>`.
#[derive(Debug, Clone, Default)]
pub struct MockCaptioner;

impl Backend for MockCaptioner {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Captioner, "mock-captioner", true)
    }
}

impl Captioner for MockCaptioner {
    fn caption(&self, _image: &Image, category_hint: &str) -> Result<String> {
        Ok(format!("texture: {category_hint}"))
    }
}

const THUMB: usize = 8;

/// Content-derived evaluation features.
///
/// The perceptual embedding is a 8×8 RGB thumbnail (block means); the class
/// posterior is a softmax over a seeded random projection of it.
#[derive(Debug, Clone)]
pub struct MockFeatureExtractor {
    pub classes: usize,
    pub seed: u64,
    pub temperature: f64,
}

impl Default for MockFeatureExtractor {
    fn default() -> Self {
        Self {
            classes: 10,
            seed: 0,
            temperature: 4.0,
        }
    }
}

impl MockFeatureExtractor {
    fn thumbnail(image: &Image) -> Vec<f64> {
        let (w, h) = image.dims();
        let mut out = vec![0.0; THUMB * THUMB * 3];
        for ty in 0..THUMB {
            let (y0, y1) = (ty * h / THUMB, ((ty + 1) * h / THUMB).max(ty * h / THUMB + 1));
            for tx in 0..THUMB {
                let (x0, x1) = (tx * w / THUMB, ((tx + 1) * w / THUMB).max(tx * w / THUMB + 1));
                let mut acc = [0.0f64; 3];
                let mut n = 0.0f64;
                for y in y0..y1.min(h) {
                    for x in x0..x1.min(w) {
                        for (a, v) in acc.iter_mut().zip(image.get(x, y)) {
                            *a += v as f64;
                        }
                        n += 1.0;
                    }
                }
                for c in 0..3 {
                    out[(ty * THUMB + tx) * 3 + c] = acc[c] / n.max(1.0);
                }
            }
        }
        out
    }
}

impl Backend for MockFeatureExtractor {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::FeatureExtractor, "mock-features", true).with_config(
            json!({ "classes": self.classes, "seed": self.seed, "temperature": self.temperature }),
        )
    }
}

impl FeatureExtractor for MockFeatureExtractor {
    fn extract(&self, images: &[Image]) -> Result<Vec<ImageFeatures>> {
        if images.is_empty() {
            return Err(Error::invalid("no images to extract features from"));
        }
        if self.classes == 0 {
            return Err(Error::invalid("feature extractor needs at least one class"));
        }
        let d = THUMB * THUMB * 3;
        let mut rng = rng_from(&[b"mock-features", &self.seed.to_le_bytes()]);
        let weights: Vec<f64> = (0..self.classes * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt())
            .collect();
        Ok(images
            .iter()
            .map(|img| {
                let thumb = Self::thumbnail(img);
                let logits: Vec<f64> = weights
                    .chunks(d)
                    .map(|row| {
                        self.temperature * row.iter().zip(&thumb).map(|(w, v)| w * v).sum::<f64>()
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                ImageFeatures {
                    probabilities: exps.iter().map(|e| e / sum).collect(),
                    perceptual: thumb,
                }
            })
            .collect())
    }
}

/// Seeded random linear map to 2-D.
#[derive(Debug, Clone, Default)]
pub struct MockProjector {
    pub seed: u64,
}

impl Backend for MockProjector {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::new(BackendKind::Projector, "mock-projector", true)
            .with_config(json!({ "seed": self.seed }))
    }
}

impl Projector for MockProjector {
    fn project(&self, points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let Some(first) = points.first() else {
            return Ok(Vec::new());
        };
        let d = first.len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("points have differing dimensions"));
        }
        let mut rng = rng_from(&[b"mock-projector", &self.seed.to_le_bytes(), &(d as u64).to_le_bytes()]);
        let basis: Vec<f64> = (0..2 * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(points
            .iter()
            .map(|p| {
                let x = basis[..d].iter().zip(p).map(|(b, v)| b * v).sum();
                let y = basis[d..].iter().zip(p).map(|(b, v)| b * v).sum();
                [x, y]
            })
            .collect())
    }
}
