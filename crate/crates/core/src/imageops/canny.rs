use serde::{Deserialize, Serialize};

use super::{convolve_separable, gaussian_kernel, reflect, BinaryMask, GrayImage};
use crate::{Error, Result};

const BLUR_SIZE: usize = 5;
const BLUR_SIGMA: f64 = 1.4;

/// Hysteresis thresholds as fractions of the image's maximum gradient magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low: 0.1,
            high: 0.3,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high <= 1.0) {
            return Err(Error::invalid(format!(
                "canny thresholds must satisfy 0 < low < high <= 1, got {} / {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Canny edge detector: 5×5 Gaussian blur (σ = 1.4), Sobel gradients,
/// non-maximum suppression and 8-connected double-threshold hysteresis.
///
/// `low_thresh` and `high_thresh` are fractions of the maximum gradient
/// magnitude, so a flat image produces no edges at all.
pub fn canny(img: &GrayImage, low_thresh: f64, high_thresh: f64) -> Result<BinaryMask> {
    CannyParams {
        low: low_thresh,
        high: high_thresh,
    }
    .validate()?;
    let (w, h) = img.dims();
    if w < BLUR_SIZE || h < BLUR_SIZE {
        return Err(Error::invalid(format!(
            "canny needs at least {BLUR_SIZE}x{BLUR_SIZE} pixels, got {w}x{h}"
        )));
    }

    let plane: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let blurred = convolve_separable(&plane, w, h, &gaussian_kernel(BLUR_SIZE, BLUR_SIGMA));
    let (gx, gy) = sobel(&blurred, w, h);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= f64::EPSILON {
        return Ok(BinaryMask::new(w, h));
    }

    let thin = non_maximum_suppression(&mag, &gx, &gy, w, h);
    Ok(hysteresis(&thin, w, h, low_thresh * max, high_thresh * max))
}

/// Sobel gradient magnitude of the raw (unblurred) image.
pub fn sobel_magnitude(img: &GrayImage) -> Vec<f64> {
    let plane: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let (gx, gy) = sobel(&plane, img.width(), img.height());
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect()
}

fn sobel(data: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| data[reflect(y, h) * w + reflect(x, w)];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

fn non_maximum_suppression(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| mag[reflect(y, h) * w + reflect(x, w)];
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[i].atan2(gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            // Strict on one side, non-strict on the other, so a two-pixel
            // plateau across a step keeps exactly one pixel.
            if m > at(x - dx, y - dy) && m >= at(x + dx, y + dy) {
                out[i] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], w: usize, h: usize, low: f64, high: f64) -> BinaryMask {
    let mut bits = vec![false; w * h];
    let mut stack = Vec::new();
    for start in 0..thin.len() {
        if thin[start] < high || bits[start] {
            continue;
        }
        bits[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !bits[j] && thin[j] >= low {
                        bits[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    BinaryMask::from_bits(w, h, bits).expect("dimensions preserved")
}
