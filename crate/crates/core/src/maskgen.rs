//! Rejection-sampled inpainting masks and the adaptive texture image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backends::Segmenter;
use crate::imageops::{
    area_fraction, canny, close_texture, AreaBase, BinaryMask, CannyParams, Image,
};
use crate::{Error, Result};

pub const REASON_FOREGROUND: &str = "foreground overlap";
pub const REASON_TEXTURE: &str = "texture overlap";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskGenConfig {
    pub l_rate: f64,
    pub h_rate: f64,
    /// Minimum share of the rectangle lying on the foreground.
    pub thresh1: f64,
    /// Minimum share of the on-object rectangle covered by texture edges.
    pub thresh2: f64,
    pub max_retries: u32,
    /// Edge detector applied to the registered texture.
    pub canny: CannyParams,
}

impl Default for MaskGenConfig {
    fn default() -> Self {
        Self {
            l_rate: 0.1,
            h_rate: 0.3,
            thresh1: 0.3,
            thresh2: 0.05,
            max_retries: 200,
            canny: CannyParams::default(),
        }
    }
}

impl MaskGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_rate > 0.0 && self.l_rate <= self.h_rate && self.h_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < l_rate <= h_rate <= 1, got {} and {}",
                self.l_rate, self.h_rate
            )));
        }
        for (name, v) in [("thresh1", self.thresh1), ("thresh2", self.thresh2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_retries == 0 {
            return Err(Error::invalid("max_retries must be positive"));
        }
        self.canny.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| {
            x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
        })
    }
}

/// Integer side lengths inside `[lo·n, hi·n]`, or the nearest integer when
/// that interval holds none.
fn side_range(n: usize, lo: f64, hi: f64) -> (usize, usize) {
    let n = n as f64;
    let min = ((lo * n) - 1e-9).ceil().max(1.0) as usize;
    let max = ((hi * n) + 1e-9).floor() as usize;
    if min > max {
        let side = (lo * n).round().max(1.0) as usize;
        return (side, side);
    }
    (min, max)
}

/// Draws a rectangle with sides in `[l_rate, h_rate]` of the image sides,
/// uniformly positioned so it lies fully inside the image.
pub fn sample_rect(
    height: usize,
    width: usize,
    config: &MaskGenConfig,
    rng: &mut impl Rng,
) -> Result<Rect> {
    config.validate()?;
    let (h_min, h_max) = side_range(height, config.l_rate, config.h_rate);
    let (w_min, w_max) = side_range(width, config.l_rate, config.h_rate);
    if (height as f64) * config.l_rate < 1.0 - 1e-9 || (width as f64) * config.l_rate < 1.0 - 1e-9
    {
        return Err(Error::invalid(format!(
            "{width}x{height} image is too small for l_rate {}",
            config.l_rate
        )));
    }
    let rh = rng.random_range(h_min..=h_max);
    let rw = rng.random_range(w_min..=w_max);
    let y = rng.random_range(0..=height - rh);
    let x = rng.random_range(0..=width - rw);
    Ok(Rect {
        x,
        y,
        width: rw,
        height: rh,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskBundle {
    /// Inpainting mask `M_r ∧ M_u`.
    pub m_in: BinaryMask,
    /// Texture pixels on `texture_support`, black elsewhere.
    pub x_texture: Image,
    pub texture_support: BinaryMask,
    /// `texture_support` pooled to latent resolution.
    pub m_texture_latent: BinaryMask,
    pub rect: Rect,
    /// Rejected draws before the accepted one.
    pub retries_used: u32,
}

/// Samples rectangles until one lies on the foreground and overlaps enough
/// texture edges, then assembles the bundle.
///
/// `texture` must already be registered to the normal image's size and
/// `texture_edges` computed from it.
pub fn generate_from_masks(
    foreground: &BinaryMask,
    texture: &Image,
    texture_edges: &BinaryMask,
    latent_factor: usize,
    config: &MaskGenConfig,
    rng: &mut impl Rng,
) -> Result<MaskBundle> {
    config.validate()?;
    let (w, h) = foreground.dims();
    texture_edges.check_dims(w, h)?;
    if texture.dims() != (w, h) {
        return Err(Error::invalid("texture is not registered to the image size"));
    }
    if latent_factor == 0 || w % latent_factor != 0 || h % latent_factor != 0 {
        return Err(Error::invalid(format!(
            "{w}x{h} image is not divisible by latent factor {latent_factor}"
        )));
    }
    let mut reason = REASON_FOREGROUND;
    for attempt in 0..config.max_retries {
        let rect = sample_rect(h, w, config, rng)?;
        let m_r = rect.to_mask(w, h);
        let m_ov = m_r.and(foreground)?;
        if area_fraction(&m_ov, AreaBase::Mask(&m_r))? <= config.thresh1 {
            reason = REASON_FOREGROUND;
            continue;
        }
        if area_fraction(texture_edges, AreaBase::Mask(&m_ov))? <= config.thresh2 {
            reason = REASON_TEXTURE;
            continue;
        }
        let m_in = m_ov;
        let support = close_texture(&m_in.and(texture_edges)?).and(&m_in)?;
        let x_texture = texture.masked(&support)?;
        let m_texture_latent = support.pool_any(latent_factor)?;
        return Ok(MaskBundle {
            m_in,
            x_texture,
            texture_support: support,
            m_texture_latent,
            rect,
            retries_used: attempt,
        });
    }
    Err(Error::GenerationFailed {
        attempts: config.max_retries,
        reason: reason.to_string(),
    })
}

/// Registers the matched texture to the normal image, segments the object
/// and extracts texture edges before sampling.
pub fn generate(
    normal_image: &Image,
    matched_texture: &Image,
    segmenter: &dyn Segmenter,
    latent_factor: usize,
    config: &MaskGenConfig,
    rng: &mut impl Rng,
) -> Result<MaskBundle> {
    let (w, h) = normal_image.dims();
    let foreground = segmenter
        .segment_foreground(normal_image)
        .map_err(|e| e.at_stage("segmentation"))?;
    if foreground.dims() != (w, h) {
        return Err(Error::invalid("segmenter returned a mask of the wrong size"));
    }
    let texture = if matched_texture.dims() == (w, h) {
        matched_texture.clone()
    } else {
        matched_texture.resized(w, h)
    };
    let edges = canny(&texture.to_gray(), config.canny.low, config.canny.high)?;
    generate_from_masks(&foreground, &texture, &edges, latent_factor, config, rng)
}
