//! Latent blending, deterministic DDIM sampling and mask refinement.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendDescriptor, ConditionForm, LatentCodec, LatentTensor, NoisePredictor,
};
use crate::imageops::{canny, ssim_map, BinaryMask, CannyParams, GrayImage, Image};
use crate::maskgen::{MaskBundle, Rect};
use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_T_STAR: usize = 16;
pub const DEFAULT_FINAL_ALPHABAR: f64 = 5e-3;
pub const DEFAULT_PROMPT: &str = "A photo of {description} {object}";

/// Cumulative signal rates `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct NoiseSchedule {
    kind: String,
    alphabar: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    kind: String,
    /// `ᾱ_1 … ᾱ_T`.
    alphabar: Vec<f64>,
}

impl TryFrom<ScheduleRepr> for NoiseSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        Self::from_alphabar(r.kind, r.alphabar)
    }
}

impl From<NoiseSchedule> for ScheduleRepr {
    fn from(s: NoiseSchedule) -> Self {
        ScheduleRepr {
            kind: s.kind,
            alphabar: s.alphabar[1..].to_vec(),
        }
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::cosine(DEFAULT_STEPS, DEFAULT_FINAL_ALPHABAR).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// `ᾱ_t = cos²(φ·t/T)` with `φ` chosen so that `ᾱ_T = final_alphabar`.
    pub fn cosine(steps: usize, final_alphabar: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(final_alphabar > 0.0 && final_alphabar < 1.0) {
            return Err(Error::invalid(format!(
                "final alphabar must lie in (0, 1), got {final_alphabar}"
            )));
        }
        let phi = final_alphabar.sqrt().acos();
        let values = (1..=steps)
            .map(|t| (phi * t as f64 / steps as f64).cos().powi(2))
            .collect();
        Self::from_alphabar("cosine", values)
    }

    /// Builds a schedule from `ᾱ_1 … ᾱ_T`; `ᾱ_0 = 1` is implied.
    pub fn from_alphabar(kind: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let mut alphabar = Vec::with_capacity(values.len() + 1);
        alphabar.push(1.0);
        alphabar.extend(values);
        for t in 1..alphabar.len() {
            let a = alphabar[t];
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::invalid(format!("alphabar[{t}] = {a} outside (0, 1]")));
            }
            if a >= alphabar[t - 1] {
                return Err(Error::invalid(format!(
                    "alphabar must strictly decrease, but alphabar[{t}] = {a} >= alphabar[{}] = {}",
                    t - 1,
                    alphabar[t - 1]
                )));
            }
        }
        Ok(Self {
            kind: kind.into(),
            alphabar,
        })
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    /// Total steps `T`.
    pub fn steps(&self) -> usize {
        self.alphabar.len() - 1
    }

    pub fn alphabar(&self, t: usize) -> Result<f64> {
        self.alphabar
            .get(t)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} outside [0, {}]", self.steps())))
    }

    /// `ᾱ_0 … ᾱ_T`.
    pub fn values(&self) -> &[f64] {
        &self.alphabar
    }
}

/// `√ᾱ·z + √(1−ᾱ)·ε` for an explicit `ᾱ ∈ [0, 1]`.
pub fn add_noise_at(z: &LatentTensor, alphabar: f64, eps: &LatentTensor) -> Result<LatentTensor> {
    if !(0.0..=1.0).contains(&alphabar) {
        return Err(Error::invalid(format!("alphabar {alphabar} outside [0, 1]")));
    }
    let (a, b) = (alphabar.sqrt(), (1.0 - alphabar).sqrt());
    z.zip_map(eps, |z, e| a * z + b * e)
}

pub fn add_noise(
    z: &LatentTensor,
    t: usize,
    eps: &LatentTensor,
    schedule: &NoiseSchedule,
) -> Result<LatentTensor> {
    add_noise_at(z, schedule.alphabar(t)?, eps)
}

/// Texture latent where the mask is set, normal latent elsewhere. The mask
/// is at latent resolution and applies to every channel.
pub fn tali_blend(
    z_normal: &LatentTensor,
    z_texture: &LatentTensor,
    m_latent: &BinaryMask,
) -> Result<LatentTensor> {
    z_normal.check_same_shape(z_texture)?;
    if m_latent.dims() != (z_normal.width, z_normal.height) {
        return Err(Error::invalid(format!(
            "latent mask is {:?}, latent is {}x{}",
            m_latent.dims(),
            z_normal.width,
            z_normal.height
        )));
    }
    let plane = z_normal.width * z_normal.height;
    let bits = m_latent.bits();
    let data = z_normal
        .data
        .iter()
        .zip(&z_texture.data)
        .enumerate()
        .map(|(i, (&n, &t))| if bits[i % plane] { t } else { n })
        .collect();
    LatentTensor::new(z_normal.channels, z_normal.height, z_normal.width, data)
}

/// One deterministic DDIM update between explicit signal rates.
pub fn ddim_step_between(
    z_t: &LatentTensor,
    alphabar_t: f64,
    alphabar_prev: f64,
    eps_hat: &LatentTensor,
) -> Result<LatentTensor> {
    if !(alphabar_t > 0.0 && alphabar_t <= 1.0) || !(0.0..=1.0).contains(&alphabar_prev) {
        return Err(Error::invalid(format!(
            "signal rates {alphabar_t} / {alphabar_prev} out of range"
        )));
    }
    let (sa_t, sb_t) = (alphabar_t.sqrt(), (1.0 - alphabar_t).sqrt());
    let (sa_p, sb_p) = (alphabar_prev.sqrt(), (1.0 - alphabar_prev).sqrt());
    z_t.zip_map(eps_hat, |z, e| {
        let x0 = (z - sb_t * e) / sa_t;
        sa_p * x0 + sb_p * e
    })
}

pub fn ddim_step(
    z_t: &LatentTensor,
    t: usize,
    eps_hat: &LatentTensor,
    schedule: &NoiseSchedule,
) -> Result<LatentTensor> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::invalid(format!(
            "ddim step needs t in [1, {}], got {t}",
            schedule.steps()
        )));
    }
    ddim_step_between(z_t, schedule.alphabar(t)?, schedule.alphabar(t - 1)?, eps_hat)
}

/// Standard-normal tensor of the given shape.
pub fn sample_noise(shape: (usize, usize, usize), rng: &mut impl Rng) -> LatentTensor {
    let (c, h, w) = shape;
    LatentTensor::from_fn(c, h, w, |_, _, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinePolarity {
    /// Keep pixels that changed more than the average pixel of the mask.
    #[default]
    Dissimilarity,
    /// Keep pixels whose similarity exceeds the average.
    Similarity,
}

/// Shrinks `m_in` to the pixels the synthesis actually changed, judged by
/// SSIM between the two images masked to `m_in`.
pub fn refine_mask(
    x_normal: &Image,
    x_result: &Image,
    m_in: &BinaryMask,
    polarity: RefinePolarity,
) -> Result<BinaryMask> {
    if x_normal.dims() != x_result.dims() || m_in.dims() != x_normal.dims() {
        return Err(Error::invalid("refine inputs differ in size"));
    }
    if m_in.is_empty() {
        return Err(Error::invalid("cannot refine an empty inpainting mask"));
    }
    let a: GrayImage = x_normal.to_gray().masked(m_in)?;
    let b: GrayImage = x_result.to_gray().masked(m_in)?;
    let ssim = ssim_map(&a, &b)?;
    let d: Vec<f64> = ssim.values.iter().map(|s| 1.0 - s).collect();
    let inside: Vec<f64> = d
        .iter()
        .zip(m_in.bits())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    let (w, h) = m_in.dims();
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        m_in.bits()[i]
            && match polarity {
                RefinePolarity::Dissimilarity => d[i] > mean,
                RefinePolarity::Similarity => d[i] < mean,
            }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub t_star: usize,
    pub schedule: NoiseSchedule,
    pub prompt_template: String,
    pub refine_polarity: RefinePolarity,
    /// Edge detector used when the denoiser wants an edge-map condition.
    pub condition_canny: CannyParams,
    /// Adds wall-clock stage timings to each record (breaks byte equality
    /// between reruns).
    pub record_timings: bool,
    /// Free-form options forwarded to backends.
    pub backend_options: serde_json::Value,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            t_star: DEFAULT_T_STAR,
            schedule: NoiseSchedule::default(),
            prompt_template: DEFAULT_PROMPT.to_string(),
            refine_polarity: RefinePolarity::default(),
            condition_canny: CannyParams::default(),
            record_timings: false,
            backend_options: serde_json::Value::Object(Default::default()),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_star == 0 || self.t_star > self.schedule.steps() {
            return Err(Error::invalid(format!(
                "t_star must lie in [1, {}], got {}",
                self.schedule.steps(),
                self.t_star
            )));
        }
        self.condition_canny.validate()
    }

    pub fn prompt(&self, description: &str, object_name: &str) -> String {
        self.prompt_template
            .replace("{description}", description)
            .replace("{object}", object_name)
    }
}

/// Serializable part of a synthesis result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub object_name: String,
    pub description: String,
    pub asset_id: String,
    pub prompt: String,
    pub seed: u64,
    pub t_star: usize,
    pub schedule: NoiseSchedule,
    pub rect: Rect,
    pub mask_retries: u32,
    pub m_in_area: usize,
    pub m_result_area: usize,
    pub backends: Vec<BackendDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRecord {
    pub meta: RecordMeta,
    pub x_result: Image,
    pub m_result: BinaryMask,
    pub m_in: BinaryMask,
}

/// What one synthesis call is about.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisRequest<'a> {
    pub object_name: &'a str,
    pub description: &'a str,
    pub asset_id: &'a str,
    pub normal_image: &'a Image,
    pub bundle: &'a MaskBundle,
    pub seed: u64,
}

/// Draws the shared noise from its own stream so it does not depend on
/// how many random numbers mask generation consumed.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn condition_image(
    bundle: &MaskBundle,
    form: ConditionForm,
    canny_params: &CannyParams,
) -> Result<Image> {
    match form {
        ConditionForm::TextureImage => Ok(bundle.x_texture.clone()),
        ConditionForm::EdgeMap => {
            let edges = canny(&bundle.x_texture.to_gray(), canny_params.low, canny_params.high)?
                .and(&bundle.texture_support)?;
            let (w, h) = edges.dims();
            Ok(Image::from_fn(w, h, |x, y| {
                if edges.get(x, y) {
                    [1.0; 3]
                } else {
                    [0.0; 3]
                }
            }))
        }
    }
}

/// Encodes, blends at `T*`, denoises back to 0, decodes and refines.
pub fn synthesize(
    codec: &dyn LatentCodec,
    denoiser: &dyn NoisePredictor,
    request: &SynthesisRequest<'_>,
    config: &SynthesisConfig,
) -> Result<SynthesisRecord> {
    config.validate()?;
    let bundle = request.bundle;
    if bundle.m_in.dims() != request.normal_image.dims() {
        return Err(Error::invalid("mask bundle does not match the normal image"));
    }
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let z_normal = codec
        .encode(request.normal_image)
        .map_err(|e| e.at_stage("encode normal image"))?;
    let z_texture = codec
        .encode(&bundle.x_texture)
        .map_err(|e| e.at_stage("encode texture"))?;
    lap("encode", &mut timings);

    let eps = sample_noise(z_normal.shape(), &mut noise_rng(request.seed));
    denoiser.observe_noise(&eps);
    let t_star = config.t_star;
    let zn_t = add_noise(&z_normal, t_star, &eps, &config.schedule)?;
    let zt_t = add_noise(&z_texture, t_star, &eps, &config.schedule)?;
    let mut z = tali_blend(&zn_t, &zt_t, &bundle.m_texture_latent)
        .map_err(|e| e.at_stage("latent blend"))?;

    let condition = condition_image(bundle, denoiser.condition_form(), &config.condition_canny)?;
    let prompt = config.prompt(request.description, request.object_name);
    for t in (1..=t_star).rev() {
        let eps_hat = denoiser
            .predict_noise(&z, t, &bundle.m_in, &condition, &prompt)
            .map_err(|e| e.at_stage("noise prediction"))?;
        z = ddim_step(&z, t, &eps_hat, &config.schedule)?;
    }
    lap("denoise", &mut timings);

    let x_result = codec.decode(&z).map_err(|e| e.at_stage("decode"))?;
    if x_result.dims() != request.normal_image.dims() {
        return Err(Error::invalid("decoded image differs in size from the input").at_stage("decode"));
    }
    let m_result = refine_mask(request.normal_image, &x_result, &bundle.m_in, config.refine_polarity)
        .map_err(|e| e.at_stage("mask refine"))?;
    lap("refine", &mut timings);

    let meta = RecordMeta {
        object_name: request.object_name.to_string(),
        description: request.description.to_string(),
        asset_id: request.asset_id.to_string(),
        prompt,
        seed: request.seed,
        t_star,
        schedule: config.schedule.clone(),
        rect: bundle.rect,
        mask_retries: bundle.retries_used,
        m_in_area: bundle.m_in.count(),
        m_result_area: m_result.count(),
        backends: vec![codec.descriptor(), denoiser.descriptor()],
        timings_ms: config.record_timings.then_some(timings),
    };
    Ok(SynthesisRecord {
        meta,
        x_result,
        m_result,
        m_in: bundle.m_in.clone(),
    })
}
