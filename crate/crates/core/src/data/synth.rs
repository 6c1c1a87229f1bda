//! Synthetic tasks: a two-dimensional Gaussian classification problem and a
//! procedurally drawn two-digit image pool for offline image-scale runs.

use crate::error::Result;
use crate::models::{Dataset, FeatureBounds};
use crate::numerics::{DenseMatrix, RngStream};
use crate::scalar::Real;

use super::RawPool;

const GAUSS_MEAN: [[f64; 2]; 2] = [[-3.0, 0.0], [3.0, 0.0]];
// Diagonal covariance (2.5, 1.5) for both classes.
const GAUSS_STD: [f64; 2] = [1.5811388300841898, 1.224744871391589];
const GAUSS_BOUND: f64 = 9.5;

/// Samples `n_per_class` points per class from the two bivariate Gaussians
/// (means `(∓3, 0)`, covariance `diag(2.5, 1.5)`), clipped into the feasible
/// box `[-9.5, 9.5]²`. Class 0 rows come first.
pub fn sample_gaussian_task<T: Real>(n_per_class: usize, rng: &mut RngStream) -> Result<Dataset<T>> {
    let n = n_per_class * 2;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2usize {
        for _ in 0..n_per_class {
            let (z0, z1) = rng.normal_pair();
            let x = (GAUSS_MEAN[class][0] + GAUSS_STD[0] * z0).clamp(-GAUSS_BOUND, GAUSS_BOUND);
            let y = (GAUSS_MEAN[class][1] + GAUSS_STD[1] * z1).clamp(-GAUSS_BOUND, GAUSS_BOUND);
            data.push(T::of(x));
            data.push(T::of(y));
            labels.push(class as u8);
        }
    }
    let x = DenseMatrix::new(n, 2, data)?;
    let bounds = FeatureBounds::uniform(T::of(-GAUSS_BOUND), T::of(GAUSS_BOUND), 2)?;
    Dataset::new(x, labels, bounds)
}

/// Training and validation sets for the Gaussian task (defaults used by the
/// demo: 16 per class for training, 32 per class for validation).
pub fn gen_synthetic_gaussians<T: Real>(
    n_train_per_class: usize,
    n_val_per_class: usize,
    rng: &mut RngStream,
) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut train_rng = rng.derive("gauss-train");
    let mut val_rng = rng.derive("gauss-val");
    Ok((
        sample_gaussian_task(n_train_per_class, &mut train_rng)?,
        sample_gaussian_task(n_val_per_class, &mut val_rng)?,
    ))
}

const DIGIT_SIDE: usize = 28;

/// Adds a soft elliptical ring to the canvas (intensities in [0, 1]).
fn render_ring(img: &mut [f64], cx: f64, cy: f64, rx: f64, ry: f64, stroke: f64, amp: f64) {
    let sharp = 0.5 * (rx + ry) / stroke;
    for y in 0..DIGIT_SIDE {
        for x in 0..DIGIT_SIDE {
            let qx = (x as f64 - cx) / rx;
            let qy = (y as f64 - cy) / ry;
            let q = (qx * qx + qy * qy).sqrt();
            let v = amp * (-((q - 1.0) * sharp).powi(2)).exp();
            let cell = &mut img[y * DIGIT_SIDE + x];
            if v > *cell {
                *cell = v;
            }
        }
    }
}

/// Deterministic 28x28 grayscale pool of digit-shaped images: class `0` is a
/// single ring, class `8` two stacked rings, with jittered geometry, varying
/// stroke and brightness, and pixel noise. A stand-in image task for running
/// the pipeline fully offline; labels use the digit values 0 and 8 so the
/// usual class-pair filtering applies.
pub fn gen_digit_pool(n_per_class: usize, rng: &mut RngStream) -> Result<RawPool> {
    let m = DIGIT_SIDE * DIGIT_SIDE;
    let n = n_per_class * 2;
    let mut pixels = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for class in [0u8, 8u8] {
        for _ in 0..n_per_class {
            let mut img = vec![0.0f64; m];
            let amp = rng.uniform(0.75, 1.0);
            let stroke = rng.uniform(1.4, 2.4);
            let cx = 13.5 + rng.uniform(-1.5, 1.5);
            if class == 0 {
                let cy = 13.5 + rng.uniform(-1.5, 1.5);
                let rx = rng.uniform(5.0, 7.5);
                let ry = rng.uniform(7.5, 10.0);
                render_ring(&mut img, cx, cy, rx, ry, stroke, amp);
            } else {
                let cy_top = 8.5 + rng.uniform(-1.0, 1.0);
                let r_top = rng.uniform(3.2, 4.6);
                let cy_bot = 18.5 + rng.uniform(-1.0, 1.0);
                let r_bot = rng.uniform(3.8, 5.2);
                render_ring(&mut img, cx, cy_top, r_top, r_top, stroke, amp);
                render_ring(&mut img, cx, cy_bot, r_bot, r_bot, stroke, amp);
            }
            for v in &mut img {
                let (noise, _) = rng.normal_pair();
                *v = (*v + 0.03 * noise).clamp(0.0, 1.0);
            }
            pixels.extend(img.iter().map(|&v| (v * 255.0).round() as u8));
            labels.push(class);
        }
    }
    RawPool::new(n, m, pixels, labels)
}
