use super::{convolve_separable, gaussian_kernel, GrayImage};
use crate::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Per-pixel scores on an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Local SSIM with an 11×11 Gaussian window (σ = 1.5), dynamic range 1.
///
/// Values lie in `[-1, 1]`; they are negative where local structure is
/// anti-correlated.
pub fn ssim_map(a: &GrayImage, b: &GrayImage) -> Result<ScoreMap> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "ssim inputs differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (w, h) = a.dims();
    let kernel = gaussian_kernel(WINDOW, SIGMA);
    let blur = |plane: &[f64]| convolve_separable(plane, w, h, &kernel);

    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let (mu_x, mu_y) = (blur(&x), blur(&y));
    let (e_xx, e_yy, e_xy) = (blur(&xx), blur(&yy), blur(&xy));

    let values = (0..w * h)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (var_x + var_y + C2))
        })
        .collect();
    Ok(ScoreMap {
        width: w,
        height: h,
        values,
    })
}
