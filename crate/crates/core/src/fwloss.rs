//! Feature-weighted cycle-consistency loss.
//!
//! The kernel is a masked L1 residual between a tensor and its cycle
//! reconstruction: `L = sum |x_hat - x| * mask`, with the mask formed as
//! the union of the feature masks of the paired label map and the
//! generated map. The mask concentrates the cycle penalty on map features
//! (houses, roads) instead of background. Masks are treated as constants
//! under differentiation: they come from a thresholded color test whose
//! gradient is zero almost everywhere. The L1 subgradient at zero residual
//! is taken as 0.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{extract_mask_all, FeatureMask, FeaturePalette, RasterTile};

pub use crate::raster::FeatureMask as Mask;

/// A dense H x W x C tensor of f64 samples. Tensors built from tiles hold
/// values in [0, 1]; generator outputs may leave that range, but every
/// value must stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: u32,
    width: u32,
    channels: u32,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: u32, width: u32, channels: u32, values: Vec<f64>) -> Result<Self> {
        let expected = height as usize * width as usize * channels as usize;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "tensor of {height}x{width}x{channels} needs {expected} values, got {}",
                    values.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "tensor construction".to_string(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn zeros(height: u32, width: u32, channels: u32) -> Self {
        Self {
            height,
            width,
            channels,
            values: vec![0.0; height as usize * width as usize * channels as usize],
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    fn ensure_same_shape(&self, other: &Tensor3) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context: format!(
                    "{}x{}x{} vs {}x{}x{}",
                    self.height, self.width, self.channels, other.height, other.width, other.channels
                ),
            })
        }
    }

    pub fn get(&self, row: u32, col: u32, channel: u32) -> f64 {
        self.values[self.index(row, col, channel)]
    }

    pub fn set(&mut self, row: u32, col: u32, channel: u32, value: f64) {
        let index = self.index(row, col, channel);
        self.values[index] = value;
    }

    fn index(&self, row: u32, col: u32, channel: u32) -> usize {
        (row as usize * self.width as usize + col as usize) * self.channels as usize
            + channel as usize
    }

    /// Samples scaled from [0, 255] into [0, 1].
    pub fn from_tile(tile: &RasterTile) -> Self {
        Self {
            height: tile.height(),
            width: tile.width(),
            channels: tile.channels(),
            values: tile.pixels().iter().map(|&p| f64::from(p) / 255.0).collect(),
        }
    }

    /// Render back to 8-bit, clamping into [0, 1] first.
    pub fn to_tile(&self) -> RasterTile {
        let pixels = self
            .values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        RasterTile::new(self.height, self.width, self.channels, pixels)
            .expect("tensor dimensions are valid tile dimensions")
    }
}

fn ensure_mask_shape(x: &Tensor3, mask: &FeatureMask) -> Result<()> {
    if x.height() == mask.height() && x.width() == mask.width() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context: format!(
                "mask {}x{} vs tensor {}x{}",
                mask.height(),
                mask.width(),
                x.height(),
                x.width()
            ),
        })
    }
}

/// Pixel-wise logical OR of two feature masks.
pub fn mask_union(a: &FeatureMask, b: &FeatureMask) -> Result<FeatureMask> {
    a.union(b)
}

/// Masked L1 residual: `sum_{i,j,k} |x_hat - x| * mask`, the mask
/// broadcast across channels. Zero exactly when the tensors agree on every
/// masked pixel.
pub fn fw_loss(x: &Tensor3, x_hat: &Tensor3, mask: &FeatureMask) -> Result<f64> {
    x.ensure_same_shape(x_hat)?;
    ensure_mask_shape(x, mask)?;
    let mut total = 0.0;
    for row in 0..x.height() {
        for col in 0..x.width() {
            if !mask.get(row, col) {
                continue;
            }
            for channel in 0..x.channels() {
                total += (x_hat.get(row, col, channel) - x.get(row, col, channel)).abs();
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: "fw_loss".to_string(),
        });
    }
    Ok(total)
}

/// `d fw_loss / d x_hat`: `sign(x_hat - x) * mask`, elementwise.
pub fn fw_loss_grad(x: &Tensor3, x_hat: &Tensor3, mask: &FeatureMask) -> Result<Tensor3> {
    x.ensure_same_shape(x_hat)?;
    ensure_mask_shape(x, mask)?;
    let mut grad = Tensor3::zeros(x.height(), x.width(), x.channels());
    for row in 0..x.height() {
        for col in 0..x.width() {
            if !mask.get(row, col) {
                continue;
            }
            for channel in 0..x.channels() {
                let residual = x_hat.get(row, col, channel) - x.get(row, col, channel);
                let sign = if residual > 0.0 {
                    1.0
                } else if residual < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                grad.set(row, col, channel, sign);
            }
        }
    }
    Ok(grad)
}

/// Mini-batch realization of the expectation: the mean of per-item losses.
pub fn fw_loss_batch(items: &[(&Tensor3, &Tensor3, &FeatureMask)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyInput {
            context: "fw_loss batch".to_string(),
        });
    }
    let mut total = 0.0;
    for (x, x_hat, mask) in items {
        total += fw_loss(x, x_hat, mask)?;
    }
    Ok(total / items.len() as f64)
}

/// Per-item gradients of the batch-mean loss (each scaled by 1/batch).
pub fn fw_loss_grad_batch(items: &[(&Tensor3, &Tensor3, &FeatureMask)]) -> Result<Vec<Tensor3>> {
    if items.is_empty() {
        return Err(Error::EmptyInput {
            context: "fw_loss batch".to_string(),
        });
    }
    let scale = 1.0 / items.len() as f64;
    items
        .iter()
        .map(|(x, x_hat, mask)| {
            let mut grad = fw_loss_grad(x, x_hat, mask)?;
            for value in grad.values_mut() {
                *value *= scale;
            }
            Ok(grad)
        })
        .collect()
}

/// A differentiable tensor map with forward and vector-Jacobian
/// evaluation. Shape-preserving and deterministic. Stand-ins for the
/// translation networks in tests live in this module.
pub trait Generator {
    fn forward(&self, input: &Tensor3) -> Result<Tensor3>;

    /// Pull the cotangent `d loss / d output` back to `d loss / d input`
    /// at the given input.
    fn vjp(&self, input: &Tensor3, cotangent: &Tensor3) -> Result<Tensor3>;
}

/// The identity map.
pub struct IdentityGen;

impl Generator for IdentityGen {
    fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        Ok(input.clone())
    }

    fn vjp(&self, _input: &Tensor3, cotangent: &Tensor3) -> Result<Tensor3> {
        Ok(cotangent.clone())
    }
}

/// Per-element affine map `scale * x + bias`, clamp-free.
pub struct AffineGen {
    pub scale: f64,
    pub bias: f64,
}

impl Generator for AffineGen {
    fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        let values = input.values().iter().map(|v| self.scale * v + self.bias).collect();
        Tensor3::new(input.height(), input.width(), input.channels(), values)
    }

    fn vjp(&self, _input: &Tensor3, cotangent: &Tensor3) -> Result<Tensor3> {
        let values = cotangent.values().iter().map(|v| self.scale * v).collect();
        Tensor3::new(
            cotangent.height(),
            cotangent.width(),
            cotangent.channels(),
            values,
        )
    }
}

/// Per-channel 3x3 convolution with zero padding.
pub struct Conv3x3Gen {
    pub kernel: [[f64; 3]; 3],
}

impl Generator for Conv3x3Gen {
    fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        let mut out = Tensor3::zeros(input.height(), input.width(), input.channels());
        for row in 0..input.height() {
            for col in 0..input.width() {
                for channel in 0..input.channels() {
                    let mut acc = 0.0;
                    for (kr, kernel_row) in self.kernel.iter().enumerate() {
                        for (kc, weight) in kernel_row.iter().enumerate() {
                            let r = row as i64 + kr as i64 - 1;
                            let c = col as i64 + kc as i64 - 1;
                            if r >= 0
                                && c >= 0
                                && r < i64::from(input.height())
                                && c < i64::from(input.width())
                            {
                                acc += weight * input.get(r as u32, c as u32, channel);
                            }
                        }
                    }
                    out.set(row, col, channel, acc);
                }
            }
        }
        Ok(out)
    }

    fn vjp(&self, input: &Tensor3, cotangent: &Tensor3) -> Result<Tensor3> {
        input.ensure_same_shape(cotangent)?;
        // Correlation with the flipped kernel.
        let mut out = Tensor3::zeros(input.height(), input.width(), input.channels());
        for row in 0..input.height() {
            for col in 0..input.width() {
                for channel in 0..input.channels() {
                    let mut acc = 0.0;
                    for (kr, kernel_row) in self.kernel.iter().enumerate() {
                        for (kc, weight) in kernel_row.iter().enumerate() {
                            let r = row as i64 - (kr as i64 - 1);
                            let c = col as i64 - (kc as i64 - 1);
                            if r >= 0
                                && c >= 0
                                && r < i64::from(input.height())
                                && c < i64::from(input.width())
                            {
                                acc += weight * cotangent.get(r as u32, c as u32, channel);
                            }
                        }
                    }
                    out.set(row, col, channel, acc);
                }
            }
        }
        Ok(out)
    }
}

/// Relative weight of the feature-weighted term when composed with other
/// objective terms. No canonical value exists; 1.0 by default.
#[derive(Debug, Clone, Copy)]
pub struct FwLossConfig {
    pub weight: f64,
}

impl Default for FwLossConfig {
    fn default() -> Self {
        Self { weight: 1.0 }
    }
}

/// One full cycle evaluation.
#[derive(Debug, Clone)]
pub struct CycleFwLoss {
    pub loss: f64,
    pub mask: FeatureMask,
    pub y_hat: Tensor3,
    pub x_hat: Tensor3,
    /// d loss / d x_hat (the forward generator's output).
    pub grad_x_hat: Tensor3,
    /// d loss / d y_hat, pulled back through the image-side generator.
    pub grad_y_hat: Tensor3,
}

/// Run the cycle `x -> g_map -> y_hat -> g_image -> x_hat`, build the mask
/// as `M(y) OR M(y_hat)` over every palette class (the generated map is
/// rendered to 8-bit for masking), and evaluate the masked L1 loss and its
/// gradient chain. The mask is constant with respect to differentiation.
pub fn cycle_fw_loss(
    x: &Tensor3,
    y: &RasterTile,
    g_map: &dyn Generator,
    g_image: &dyn Generator,
    palette: &FeaturePalette,
    config: &FwLossConfig,
) -> Result<CycleFwLoss> {
    if x.height() != y.height() || x.width() != y.width() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "image tensor {}x{} vs map tile {}x{}",
                x.height(),
                x.width(),
                y.height(),
                y.width()
            ),
        });
    }
    let y_hat = g_map.forward(x)?;
    if !y_hat.same_shape(x) {
        return Err(Error::ShapeMismatch {
            context: "map generator changed the tensor shape".to_string(),
        });
    }
    let x_hat = g_image.forward(&y_hat)?;
    if !x_hat.same_shape(x) {
        return Err(Error::ShapeMismatch {
            context: "image generator changed the tensor shape".to_string(),
        });
    }

    let mask_y = extract_mask_all(y, palette)?;
    let mask_y_hat = extract_mask_all(&y_hat.to_tile(), palette)?;
    let mask = mask_y.union(&mask_y_hat)?;

    let loss = config.weight * fw_loss(x, &x_hat, &mask)?;
    let mut grad_x_hat = fw_loss_grad(x, &x_hat, &mask)?;
    for value in grad_x_hat.values_mut() {
        *value *= config.weight;
    }
    let grad_y_hat = g_image.vjp(&y_hat, &grad_x_hat)?;
    Ok(CycleFwLoss {
        loss,
        mask,
        y_hat,
        x_hat,
        grad_x_hat,
        grad_y_hat,
    })
}

/// Summary row printed by the loss-check command.
#[derive(Debug, Serialize)]
pub struct LossCheck {
    pub loss: f64,
    pub masked_pixels: usize,
    pub max_grad_rel_error: f64,
}

/// Central finite differences of the cycle loss with the mask held fixed,
/// compared against the analytic `grad_y_hat` at `probes` randomly chosen
/// coordinates. Returns the maximum relative error.
pub fn finite_difference_check(
    x: &Tensor3,
    y_hat: &Tensor3,
    g_image: &dyn Generator,
    mask: &FeatureMask,
    grad_y_hat: &Tensor3,
    probes: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let row = rng.gen_range(0..y_hat.height());
        let col = rng.gen_range(0..y_hat.width());
        let channel = rng.gen_range(0..y_hat.channels());
        let mut plus = y_hat.clone();
        plus.set(row, col, channel, plus.get(row, col, channel) + step);
        let mut minus = y_hat.clone();
        minus.set(row, col, channel, minus.get(row, col, channel) - step);
        let loss_plus = fw_loss(x, &g_image.forward(&plus)?, mask)?;
        let loss_minus = fw_loss(x, &g_image.forward(&minus)?, mask)?;
        let numeric = (loss_plus - loss_minus) / (2.0 * step);
        let analytic = grad_y_hat.get(row, col, channel);
        let scale = analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((numeric - analytic).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_tensor(height: u32, width: u32, channels: u32, seed: u64) -> Tensor3 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..height as usize * width as usize * channels as usize)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        Tensor3::new(height, width, channels, values).unwrap()
    }

    fn full_mask(height: u32, width: u32) -> FeatureMask {
        let bits = vec![true; height as usize * width as usize];
        FeatureMask::new(width, height, bits, "all").unwrap()
    }

    #[test]
    fn zero_mask_means_zero_loss_and_gradient() {
        let x = random_tensor(6, 5, 3, 1);
        let x_hat = random_tensor(6, 5, 3, 2);
        let mask = FeatureMask::zeros(5, 6, "all");
        assert_eq!(fw_loss(&x, &x_hat, &mask).unwrap(), 0.0);
        let grad = fw_loss_grad(&x, &x_hat, &mask).unwrap();
        assert!(grad.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_pixel_arithmetic() {
        let x = Tensor3::new(1, 1, 1, vec![0.2]).unwrap();
        let x_hat = Tensor3::new(1, 1, 1, vec![0.5]).unwrap();
        let mask = full_mask(1, 1);
        assert!((fw_loss(&x, &x_hat, &mask).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(fw_loss_grad(&x, &x_hat, &mask).unwrap().get(0, 0, 0), 1.0);
    }

    // Independent summation oracle for the all-ones mask: plain L1.
    #[test]
    fn full_mask_equals_plain_l1() {
        let x = random_tensor(8, 8, 3, 3);
        let x_hat = random_tensor(8, 8, 3, 4);
        let mask = full_mask(8, 8);
        let plain: f64 = x
            .values()
            .iter()
            .zip(x_hat.values())
            .map(|(a, b)| (b - a).abs())
            .sum();
        assert!((fw_loss(&x, &x_hat, &mask).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn loss_is_monotone_in_the_mask() {
        let x = random_tensor(8, 8, 3, 5);
        let x_hat = random_tensor(8, 8, 3, 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut small = FeatureMask::zeros(8, 8, "all");
        let mut large = FeatureMask::zeros(8, 8, "all");
        for row in 0..8 {
            for col in 0..8 {
                let in_small = rng.gen_bool(0.3);
                let in_large = in_small || rng.gen_bool(0.4);
                small.set(row, col, in_small);
                large.set(row, col, in_large);
            }
        }
        assert!(
            fw_loss(&x, &x_hat, &small).unwrap() <= fw_loss(&x, &x_hat, &large).unwrap()
        );
    }

    #[test]
    fn loss_is_zero_iff_masked_values_agree() {
        let x = random_tensor(4, 4, 2, 8);
        let mut x_hat = x.clone();
        let mut mask = FeatureMask::zeros(4, 4, "all");
        mask.set(1, 1, true);
        mask.set(2, 3, true);
        assert_eq!(fw_loss(&x, &x_hat, &mask).unwrap(), 0.0);
        // Perturb an unmasked value: still zero.
        x_hat.set(0, 0, 0, 0.99);
        assert_eq!(fw_loss(&x, &x_hat, &mask).unwrap(), 0.0);
        // Perturb a masked value: strictly positive.
        x_hat.set(2, 3, 1, x_hat.get(2, 3, 1) + 0.25);
        assert!(fw_loss(&x, &x_hat, &mask).unwrap() > 0.0);
    }

    #[test]
    fn gradient_sign_follows_the_residual() {
        let x = Tensor3::new(1, 2, 1, vec![0.5, 0.5]).unwrap();
        let x_hat = Tensor3::new(1, 2, 1, vec![0.9, 0.1]).unwrap();
        let mask = full_mask(1, 2);
        let grad = fw_loss_grad(&x, &x_hat, &mask).unwrap();
        assert_eq!(grad.values(), [1.0, -1.0]);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..10 {
            let x = random_tensor(6, 6, 3, 100 + trial);
            // Keep residuals away from the L1 kink.
            let x_hat = {
                let values = x
                    .values()
                    .iter()
                    .map(|v| v + if rng.gen_bool(0.5) { 0.11 } else { -0.13 })
                    .collect();
                Tensor3::new(6, 6, 3, values).unwrap()
            };
            let mut mask = FeatureMask::zeros(6, 6, "all");
            for row in 0..6 {
                for col in 0..6 {
                    mask.set(row, col, rng.gen_bool(0.6));
                }
            }
            let grad = fw_loss_grad(&x, &x_hat, &mask).unwrap();
            let step = 1e-6;
            for _ in 0..40 {
                let row = rng.gen_range(0..6);
                let col = rng.gen_range(0..6);
                let channel = rng.gen_range(0..3);
                let mut plus = x_hat.clone();
                plus.set(row, col, channel, plus.get(row, col, channel) + step);
                let mut minus = x_hat.clone();
                minus.set(row, col, channel, minus.get(row, col, channel) - step);
                let numeric = (fw_loss(&x, &plus, &mask).unwrap()
                    - fw_loss(&x, &minus, &mask).unwrap())
                    / (2.0 * step);
                let analytic = grad.get(row, col, channel);
                let scale = analytic.abs().max(numeric.abs()).max(1.0);
                assert!(
                    ((numeric - analytic).abs() / scale) < 1e-4,
                    "numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn batch_loss_is_the_mean() {
        let x = random_tensor(4, 4, 1, 11);
        let x_hat = random_tensor(4, 4, 1, 12);
        let mask = full_mask(4, 4);
        let single = fw_loss(&x, &x_hat, &mask).unwrap();
        let batch = fw_loss_batch(&[(&x, &x_hat, &mask), (&x, &x, &mask)]).unwrap();
        assert!((batch - single / 2.0).abs() < 1e-12);
        let grads = fw_loss_grad_batch(&[(&x, &x_hat, &mask), (&x, &x, &mask)]).unwrap();
        let unscaled = fw_loss_grad(&x, &x_hat, &mask).unwrap();
        for (a, b) in grads[0].values().iter().zip(unscaled.values()) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let x = random_tensor(4, 4, 1, 13);
        let y = random_tensor(4, 5, 1, 14);
        let mask = full_mask(4, 4);
        assert!(fw_loss(&x, &y, &mask).is_err());
        let bad_mask = FeatureMask::zeros(5, 5, "all");
        assert!(fw_loss(&x, &x, &bad_mask).is_err());
    }

    #[test]
    fn conv_vjp_matches_finite_differences() {
        let kernel = [[0.05, -0.1, 0.2], [0.3, 0.5, -0.08], [0.0, 0.12, -0.2]];
        let conv = Conv3x3Gen { kernel };
        let input = random_tensor(5, 5, 2, 21);
        let cotangent = random_tensor(5, 5, 2, 22);
        let pullback = conv.vjp(&input, &cotangent).unwrap();
        let step = 1e-6;
        let dot = |a: &Tensor3, b: &Tensor3| -> f64 {
            a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        use rand::Rng;
        for _ in 0..25 {
            let row = rng.gen_range(0..5);
            let col = rng.gen_range(0..5);
            let channel = rng.gen_range(0..2);
            let mut plus = input.clone();
            plus.set(row, col, channel, plus.get(row, col, channel) + step);
            let mut minus = input.clone();
            minus.set(row, col, channel, minus.get(row, col, channel) - step);
            let numeric = (dot(&conv.forward(&plus).unwrap(), &cotangent)
                - dot(&conv.forward(&minus).unwrap(), &cotangent))
                / (2.0 * step);
            let analytic = pullback.get(row, col, channel);
            assert!((numeric - analytic).abs() < 1e-6);
        }
    }
}
