//! sRGB to CIE L*a*b* conversion and the CIE76 color difference.
//!
//! Conversion uses the D65 reference white and the standard sRGB transfer
//! function, so identical inputs always yield identical Lab coordinates.

use serde::{Deserialize, Serialize};

/// An 8-bit sRGB color. Serialized as an `[r, g, b]` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u8; 3]", from = "[u8; 3]")]
pub struct ColorRgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorRgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Convert to CIE L*a*b* (D65, 2-degree observer).
    pub fn to_lab(self) -> ColorLab {
        srgb_to_lab(self)
    }
}

impl From<[u8; 3]> for ColorRgb {
    fn from(v: [u8; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<ColorRgb> for [u8; 3] {
    fn from(c: ColorRgb) -> Self {
        [c.r, c.g, c.b]
    }
}

/// A CIE L*a*b* color. `l` lies in [0, 100] for in-gamut sRGB inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorLab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

// D65 reference white, 2-degree observer.
const REF_X: f64 = 0.95047;
const REF_Y: f64 = 1.0;
const REF_Z: f64 = 1.08883;

fn srgb_channel_to_linear(c: u8) -> f64 {
    let c = f64::from(c) / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB -> linear RGB -> XYZ (D65) -> L*a*b*.
pub fn srgb_to_lab(c: ColorRgb) -> ColorLab {
    let r = srgb_channel_to_linear(c.r);
    let g = srgb_channel_to_linear(c.g);
    let b = srgb_channel_to_linear(c.b);

    // sRGB D65 primaries (IEC 61966-2-1).
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    let fx = lab_f(x / REF_X);
    let fy = lab_f(y / REF_Y);
    let fz = lab_f(z / REF_Z);

    ColorLab {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// CIE76 color difference: the Euclidean distance in L*a*b* space.
pub fn cie76_distance(a: ColorLab, b: ColorLab) -> f64 {
    let dl = a.l - b.l;
    let da = a.a - b.a;
    let db = a.b - b.b;
    (dl * dl + da * da + db * db).sqrt()
}
