//! Deterministic image kernels the pipeline depends on.
//!
//! Everything here is a pure function of its inputs. Borders are handled by
//! reflection (`dcb|abcd|cba`) everywhere a kernel leaves the image.

mod canny;
mod io;
mod morphology;
mod ssim;

pub use canny::{canny, sobel_magnitude, CannyParams};
pub use io::{
    decode_image, encode_mask_png, encode_png, load_image, load_mask, save_gray, save_image,
    save_mask,
};
pub use morphology::{close_texture, dilate, erode};
pub use ssim::{ssim_map, ScoreMap};

use crate::{Error, Result};

/// Single-channel image with row-major luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("luminance {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = (0..width * height)
            .map(|i| clamp01(f(i % width, i / width)))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        mask.check_dims(self.width, self.height)?;
        let data = self
            .data
            .iter()
            .zip(&mask.bits)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// RGB image, row-major, each channel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if data.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("channel value outside [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = (0..width * height)
            .map(|i| f(i % width, i / width).map(clamp01))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            data: gray.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    /// ITU-R BT.601 luma.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&[r, g, b]| clamp01(0.299 * r + 0.587 * g + 0.114 * b))
                .collect(),
        }
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        mask.check_dims(self.width, self.height)?;
        let data = self
            .data
            .iter()
            .zip(&mask.bits)
            .map(|(&px, &keep)| if keep { px } else { [0.0; 3] })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Resamples to `width × height` with a triangle filter.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let buf = image::Rgb32FImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().flatten().copied().collect(),
        )
        .expect("buffer length matches dimensions");
        let out = image::imageops::resize(
            &buf,
            width as u32,
            height as u32,
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb32f(&out)
    }

    pub(crate) fn from_rgb32f(buf: &image::Rgb32FImage) -> Self {
        let data = buf.pixels().map(|p| p.0.map(clamp01)).collect();
        Self {
            width: buf.width() as usize,
            height: buf.height() as usize,
            data,
        }
    }

    /// 8-bit RGB bytes, row-major.
    pub fn to_rgb8_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .flatten()
            .map(|&v| (v * 255.0).round() as u8)
            .collect()
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of true bits.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn not(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        other.check_dims(self.width, self.height)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.dims() != (width, height) {
            return Err(Error::invalid(format!(
                "mask is {}x{}, expected {width}x{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Downsamples by `factor`, marking a block true if any pixel in it is true.
    pub fn pool_any(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "{}x{} mask is not divisible by {factor}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Self::new(w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(x / factor, y / factor, true);
                }
            }
        }
        Ok(out)
    }

    /// Number of 8-connected components of true bits.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                            continue;
                        }
                        let j = ny as usize * self.width + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

/// Denominator for [`area_fraction`].
#[derive(Debug, Clone, Copy)]
pub enum AreaBase<'a> {
    WholeImage,
    Mask(&'a BinaryMask),
}

/// `count(mask ∧ base) / count(base)`.
pub fn area_fraction(mask: &BinaryMask, base: AreaBase<'_>) -> Result<f64> {
    match base {
        AreaBase::WholeImage => {
            let total = mask.width * mask.height;
            if total == 0 {
                return Err(Error::UndefinedBase);
            }
            Ok(mask.count() as f64 / total as f64)
        }
        AreaBase::Mask(base) => {
            base.check_dims(mask.width, mask.height)?;
            let denom = base.count();
            if denom == 0 {
                return Err(Error::UndefinedBase);
            }
            let num = mask
                .bits
                .iter()
                .zip(&base.bits)
                .filter(|(&a, &b)| a && b)
                .count();
            Ok(num as f64 / denom as f64)
        }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if width * height != len {
        return Err(Error::invalid(format!(
            "{len} values do not fill a {width}x{height} image"
        )));
    }
    Ok(())
}

fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Reflect-101 border index (`-1 → 1`, `n → n-2`); valid for offsets below `n`.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Separable convolution of a row-major `f64` plane with a symmetric kernel.
pub(crate) fn convolve_separable(
    data: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[reflect(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * tmp[reflect(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Normalised 1-D Gaussian taps.
pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}
