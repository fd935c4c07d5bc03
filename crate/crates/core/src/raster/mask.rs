use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::raster::color::{cie76_distance, ColorLab};
use crate::raster::palette::{FeatureClassConfig, FeaturePalette};
use crate::raster::tile::RasterTile;

/// A binary per-pixel feature indicator with the dimensions of its source
/// tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    class_name: String,
}

impl FeatureMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>, class_name: impl Into<String>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "mask bit count {} does not match {width}x{height}",
                    bits.len()
                ),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
            class_name: class_name.into(),
        })
    }

    pub fn zeros(width: u32, height: u32, class_name: impl Into<String>) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
            class_name: class_name.into(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.bits[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Pixel-wise logical OR of two same-size masks.
    pub fn union(&self, other: &FeatureMask) -> Result<FeatureMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            });
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a || *b)
            .collect();
        let class_name = if self.class_name == other.class_name {
            self.class_name.clone()
        } else {
            format!("{}|{}", self.class_name, other.class_name)
        };
        Ok(FeatureMask {
            width: self.width,
            height: self.height,
            bits,
            class_name,
        })
    }

    /// True when `self` is 1 only where `other` is 1.
    pub fn is_subset_of(&self, other: &FeatureMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Mark every pixel whose minimum CIE76 distance to the class colors is at
/// most the class threshold. Rasterized maps repeat a handful of colors, so
/// distances are memoized per distinct RGB value.
pub fn extract_mask(tile: &RasterTile, cfg: &FeatureClassConfig) -> Result<FeatureMask> {
    tile.ensure_rgb()?;
    cfg.validate()?;
    let labs = cfg.lab_colors();
    let mut cache: HashMap<u32, bool> = HashMap::new();
    let mut bits = Vec::with_capacity(tile.width() as usize * tile.height() as usize);
    for row in 0..tile.height() {
        for col in 0..tile.width() {
            let rgb = tile.rgb_at(row, col);
            let packed = u32::from(rgb.r) << 16 | u32::from(rgb.g) << 8 | u32::from(rgb.b);
            let hit = *cache
                .entry(packed)
                .or_insert_with(|| min_distance(rgb.to_lab(), &labs) <= cfg.delta_threshold);
            bits.push(hit);
        }
    }
    FeatureMask::new(tile.width(), tile.height(), bits, cfg.class_name.clone())
}

/// Union of the per-class masks over every class in the palette.
pub fn extract_mask_all(tile: &RasterTile, palette: &FeaturePalette) -> Result<FeatureMask> {
    palette.validate()?;
    let mut merged: Option<FeatureMask> = None;
    for class in &palette.classes {
        let mask = extract_mask(tile, class)?;
        merged = Some(match merged {
            None => mask,
            Some(acc) => acc.union(&mask)?,
        });
    }
    let mut mask = merged.expect("palette validated non-empty");
    mask.class_name = "all".to_string();
    Ok(mask)
}

fn min_distance(pixel: ColorLab, colors: &[ColorLab]) -> f64 {
    colors
        .iter()
        .map(|c| cie76_distance(pixel, *c))
        .fold(f64::INFINITY, f64::min)
}
