use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// Optional tool-level config file. Precedence everywhere is
/// flags > config file > built-in defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub palette: Option<PathBuf>,
    pub iou_threshold: Option<f64>,
    pub entropy_threshold: Option<f64>,
    pub ground_resolution_m: Option<f64>,
    pub reference_density: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
            }
        }
    }
}

/// Resolve one setting: explicit flag, then config file, then default.
pub fn resolve<T: Clone>(flag: Option<T>, file_value: Option<T>, default: T) -> T {
    flag.or(file_value).unwrap_or(default)
}

pub fn load_palette(
    flag: Option<&Path>,
    config: &ToolConfig,
) -> Result<tilelab::FeaturePalette> {
    let path = flag.map(Path::to_path_buf).or_else(|| config.palette.clone());
    match path {
        Some(path) => tilelab::FeaturePalette::from_json_file(&path)
            .with_context(|| format!("loading palette {}", path.display())),
        None => Ok(tilelab::FeaturePalette::default_osm()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        assert_eq!(resolve(Some(1.0), Some(2.0), 3.0), 1.0);
        assert_eq!(resolve(None, Some(2.0), 3.0), 2.0);
        assert_eq!(resolve::<f64>(None, None, 3.0), 3.0);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"iou_threshold": 0.4, "bogus": 1}"#).unwrap();
        assert!(ToolConfig::load(Some(&path)).is_err());
        std::fs::write(&path, r#"{"iou_threshold": 0.4}"#).unwrap();
        assert_eq!(
            ToolConfig::load(Some(&path)).unwrap().iou_threshold,
            Some(0.4)
        );
    }
}
