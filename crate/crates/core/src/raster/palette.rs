use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::color::{ColorLab, ColorRgb};

/// Default per-class CIE76 match threshold, in delta-E units.
pub const DEFAULT_DELTA_E: f64 = 10.0;

/// A feature class: its name, the set of label colors that mark it in a
/// rasterized map, and the delta-E threshold used when matching pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureClassConfig {
    pub class_name: String,
    /// Label colors for this class; non-empty.
    pub colors: Vec<ColorRgb>,
    /// Maximum CIE76 distance at which a pixel still counts as this class.
    #[serde(default = "default_delta")]
    pub delta_threshold: f64,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA_E
}

impl FeatureClassConfig {
    pub fn new(class_name: impl Into<String>, colors: Vec<ColorRgb>, delta_threshold: f64) -> Result<Self> {
        let cfg = Self {
            class_name: class_name.into(),
            colors,
            delta_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.colors.is_empty() {
            return Err(Error::InvalidConfig {
                context: format!("class '{}' has no colors", self.class_name),
            });
        }
        if !(self.delta_threshold >= 0.0) {
            return Err(Error::InvalidConfig {
                context: format!(
                    "class '{}' delta threshold {} must be >= 0",
                    self.class_name, self.delta_threshold
                ),
            });
        }
        Ok(())
    }

    /// First configured color; the canonical shade used when burning this
    /// class back into a label map.
    pub fn canonical_color(&self) -> ColorRgb {
        self.colors[0]
    }

    pub(crate) fn lab_colors(&self) -> Vec<ColorLab> {
        self.colors.iter().map(|c| c.to_lab()).collect()
    }
}

/// The full per-map palette: one entry per feature class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturePalette {
    pub classes: Vec<FeatureClassConfig>,
}

/// Built-in palette approximating a standard street-map rendering. The RGB
/// values are configuration data (see `config/default_palette.json`), not
/// constants of any algorithm; override them per corpus as needed.
const DEFAULT_PALETTE_JSON: &str = include_str!("../../../../config/default_palette.json");

impl FeaturePalette {
    pub fn new(classes: Vec<FeatureClassConfig>) -> Result<Self> {
        let palette = Self { classes };
        palette.validate()?;
        Ok(palette)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig {
                context: "palette has no classes".to_string(),
            });
        }
        for class in &self.classes {
            class.validate()?;
        }
        Ok(())
    }

    /// The default street-map palette: brown houses, white roads, yellow
    /// main roads, blue highways.
    pub fn default_osm() -> Self {
        let palette: FeaturePalette =
            serde_json::from_str(DEFAULT_PALETTE_JSON).expect("bundled palette parses");
        palette.validate().expect("bundled palette is valid");
        palette
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let palette: FeaturePalette =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        palette.validate()?;
        Ok(palette)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("palette serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn class(&self, name: &str) -> Option<&FeatureClassConfig> {
        self.classes.iter().find(|c| c.class_name == name)
    }

    pub fn require_class(&self, name: &str) -> Result<&FeatureClassConfig> {
        self.class(name).ok_or_else(|| Error::InvalidConfig {
            context: format!("palette has no class named '{name}'"),
        })
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.class_name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::color::cie76_distance;

    #[test]
    fn default_palette_has_expected_classes() {
        let palette = FeaturePalette::default_osm();
        let names: Vec<_> = palette.class_names().collect();
        assert_eq!(names, ["house", "road", "main_road", "highway"]);
        for class in &palette.classes {
            assert_eq!(class.delta_threshold, DEFAULT_DELTA_E);
        }
    }

    // The default class colors must sit further apart than their match
    // thresholds, otherwise one class would capture another's pixels.
    #[test]
    fn default_classes_are_mutually_separable() {
        let palette = FeaturePalette::default_osm();
        for a in &palette.classes {
            for b in &palette.classes {
                if a.class_name == b.class_name {
                    continue;
                }
                for ca in &a.colors {
                    for cb in &b.colors {
                        let d = cie76_distance(ca.to_lab(), cb.to_lab());
                        assert!(
                            d > a.delta_threshold + b.delta_threshold,
                            "{} and {} colors are only {d:.1} dE apart",
                            a.class_name,
                            b.class_name
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn empty_color_list_is_rejected() {
        assert!(FeatureClassConfig::new("house", vec![], 10.0).is_err());
    }

    #[test]
    fn negative_delta_is_rejected() {
        assert!(FeatureClassConfig::new("house", vec![ColorRgb::new(1, 2, 3)], -0.5).is_err());
    }
}
