//! Tile and corpus I/O.
//!
//! A paired corpus lives under one root as `images/<key>.png` and
//! `maps/<key>.png`, matched by filename stem. Each PNG may carry a sidecar
//! `<key>.json` holding its geo reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::quadkey::QuadKey;
use crate::raster::tile::RasterTile;

pub const IMAGES_DIR: &str = "images";
pub const MAPS_DIR: &str = "maps";
pub const CORPUS_META_FILE: &str = "corpus.json";

/// Geo sidecar stored next to each tile PNG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileMeta {
    pub quadkey: String,
    pub level: u8,
    pub ground_resolution_m: f64,
    #[serde(default)]
    pub timestamp: u64,
}

impl TileMeta {
    pub fn of(tile: &RasterTile) -> Self {
        Self {
            quadkey: tile.geo().to_string(),
            level: tile.geo().level(),
            ground_resolution_m: tile.ground_resolution_m(),
            timestamp: tile.geo().timestamp(),
        }
    }

    pub fn quadkey(&self) -> Result<QuadKey> {
        let parsed: QuadKey = self.quadkey.parse()?;
        QuadKey::new(parsed.path().to_vec(), self.timestamp)
    }
}

/// Corpus-level marker, e.g. which split a corpus belongs to.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("json")
}

/// Write a tile as PNG plus its geo sidecar. One- and three-channel tiles
/// are supported.
pub fn save_tile(path: impl AsRef<Path>, tile: &RasterTile) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let saved = match tile.channels() {
        3 => RgbImage::from_raw(tile.width(), tile.height(), tile.pixels().to_vec())
            .expect("tile buffer matches dimensions")
            .save(path),
        1 => GrayImage::from_raw(tile.width(), tile.height(), tile.pixels().to_vec())
            .expect("tile buffer matches dimensions")
            .save(path),
        other => {
            return Err(Error::ChannelCount {
                expected: 3,
                actual: other,
            })
        }
    };
    saved.map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;

    let meta = TileMeta::of(tile);
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), text).map_err(|e| Error::io(path, e))
}

/// Load a tile PNG, restoring its geo reference from the sidecar when one
/// exists.
pub fn load_tile(path: impl AsRef<Path>) -> Result<RasterTile> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    let tile = match decoded {
        DynamicImage::ImageLuma8(gray) => {
            let (width, height) = (gray.width(), gray.height());
            RasterTile::new(width, height, 1, gray.into_raw())?
        }
        other => {
            let rgb = other.to_rgb8();
            let (width, height) = (rgb.width(), rgb.height());
            RasterTile::new(width, height, 3, rgb.into_raw())?
        }
    };

    let sidecar = sidecar_path(path);
    if sidecar.is_file() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: TileMeta =
            serde_json::from_str(&text).map_err(|e| Error::json(&sidecar, e))?;
        Ok(tile
            .with_geo(meta.quadkey()?)
            .with_ground_resolution(meta.ground_resolution_m)?)
    } else {
        Ok(tile)
    }
}

/// A key found under both sides of a paired layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedTile {
    pub key: String,
    pub image_path: PathBuf,
    pub map_path: PathBuf,
}

/// A key present on only one side of a pairing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnpairedKey {
    pub key: String,
    /// Which side the key was found on.
    pub present_in: String,
}

/// Sorted PNG stems in a directory.
pub fn list_map_keys(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut keys = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                keys.push(stem.to_string());
            }
        }
    }
    keys.sort();
    Ok(keys)
}

/// Pair PNGs between two directories by filename stem. Returns the sorted
/// pairs and every key that is missing a counterpart.
pub fn pair_png_dirs(
    left: impl AsRef<Path>,
    right: impl AsRef<Path>,
    left_name: &str,
    right_name: &str,
) -> Result<(Vec<(String, PathBuf, PathBuf)>, Vec<UnpairedKey>)> {
    let (left, right) = (left.as_ref(), right.as_ref());
    let left_keys = list_map_keys(left)?;
    let right_keys: BTreeMap<String, ()> =
        list_map_keys(right)?.into_iter().map(|k| (k, ())).collect();

    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    let mut left_set = BTreeMap::new();
    for key in left_keys {
        left_set.insert(key.clone(), ());
        if right_keys.contains_key(&key) {
            pairs.push((
                key.clone(),
                left.join(format!("{key}.png")),
                right.join(format!("{key}.png")),
            ));
        } else {
            unpaired.push(UnpairedKey {
                key,
                present_in: left_name.to_string(),
            });
        }
    }
    for key in right_keys.keys() {
        if !left_set.contains_key(key) {
            unpaired.push(UnpairedKey {
                key: key.clone(),
                present_in: right_name.to_string(),
            });
        }
    }
    Ok((pairs, unpaired))
}

/// Pair the `images/` and `maps/` sides of a corpus root.
pub fn pair_corpus(root: impl AsRef<Path>) -> Result<(Vec<PairedTile>, Vec<UnpairedKey>)> {
    let root = root.as_ref();
    let (pairs, unpaired) = pair_png_dirs(
        root.join(IMAGES_DIR),
        root.join(MAPS_DIR),
        IMAGES_DIR,
        MAPS_DIR,
    )?;
    let pairs = pairs
        .into_iter()
        .map(|(key, image_path, map_path)| PairedTile {
            key,
            image_path,
            map_path,
        })
        .collect();
    Ok((pairs, unpaired))
}

/// Read `corpus.json` at the root; absent file means no markers.
pub fn read_corpus_meta(root: impl AsRef<Path>) -> Result<CorpusMeta> {
    let path = root.as_ref().join(CORPUS_META_FILE);
    if !path.is_file() {
        return Ok(CorpusMeta::default());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

pub fn write_corpus_meta(root: impl AsRef<Path>, meta: &CorpusMeta) -> Result<()> {
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(CORPUS_META_FILE);
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
