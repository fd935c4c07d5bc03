use crate::error::{Error, Result};
use crate::raster::{ColorRgb, QuadKey};

/// Default edge length (pixels) of exported tiles.
pub const DEFAULT_TILE_SIZE: u32 = 512;

/// An H x W x C raster with 8-bit samples and a geo reference.
///
/// Pixels are stored row-major, channels interleaved. Tiles are immutable
/// value objects once built; all operations on them are pure functions.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterTile {
    width: u32,
    height: u32,
    channels: u32,
    pixels: Vec<u8>,
    geo: QuadKey,
    ground_resolution_m: f64,
}

impl RasterTile {
    /// Build a tile from a raw sample buffer. Fails when the buffer length
    /// does not equal `width * height * channels` or a dimension is zero.
    pub fn new(width: u32, height: u32, channels: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidConfig {
                context: format!("tile dimensions {width}x{height}x{channels} must be positive"),
            });
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::PixelBufferSize {
                width,
                height,
                channels,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            geo: QuadKey::root(),
            ground_resolution_m: 1.0,
        })
    }

    /// An RGB tile filled with a single color.
    pub fn filled(width: u32, height: u32, color: ColorRgb) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            pixels.extend_from_slice(&[color.r, color.g, color.b]);
        }
        Self::new(width, height, 3, pixels).expect("buffer sized to dimensions")
    }

    pub fn with_geo(mut self, geo: QuadKey) -> Self {
        self.geo = geo;
        self
    }

    /// Ground resolution in meters per pixel; must be positive.
    pub fn with_ground_resolution(mut self, meters_per_pixel: f64) -> Result<Self> {
        if !(meters_per_pixel > 0.0) {
            return Err(Error::InvalidConfig {
                context: format!("ground resolution {meters_per_pixel} must be > 0"),
            });
        }
        self.ground_resolution_m = meters_per_pixel;
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn geo(&self) -> &QuadKey {
        &self.geo
    }

    pub fn ground_resolution_m(&self) -> f64 {
        self.ground_resolution_m
    }

    /// Tile footprint in square kilometers at the tile's ground resolution.
    pub fn area_km2(&self) -> f64 {
        let res = self.ground_resolution_m;
        (res * f64::from(self.width)) * (res * f64::from(self.height)) / 1.0e6
    }

    pub fn same_dimensions(&self, other: &RasterTile) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_dimensions(&self, other: &RasterTile) -> Result<()> {
        if self.same_dimensions(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: other.width,
                b_height: other.height,
            })
        }
    }

    pub(crate) fn ensure_rgb(&self) -> Result<()> {
        if self.channels == 3 {
            Ok(())
        } else {
            Err(Error::ChannelCount {
                expected: 3,
                actual: self.channels,
            })
        }
    }

    /// RGB sample at (row, col). Panics out of bounds; callers validate
    /// dimensions up front.
    pub fn rgb_at(&self, row: u32, col: u32) -> ColorRgb {
        debug_assert_eq!(self.channels, 3);
        let idx = (row as usize * self.width as usize + col as usize) * 3;
        ColorRgb::new(self.pixels[idx], self.pixels[idx + 1], self.pixels[idx + 2])
    }

    pub fn set_rgb(&mut self, row: u32, col: u32, color: ColorRgb) {
        debug_assert_eq!(self.channels, 3);
        let idx = (row as usize * self.width as usize + col as usize) * 3;
        self.pixels[idx] = color.r;
        self.pixels[idx + 1] = color.g;
        self.pixels[idx + 2] = color.b;
    }
}
