//! Synthetic paired corpora with exact bookkeeping.
//!
//! Each scene yields an image tile (textured rendering of the full scene),
//! a map tile (label rasterization with top-z compositing, optional label
//! dropout, and optional jitter), and a truth list covering every feature
//! including the dropped ones. Corpus-level metric tests lean on this
//! module for planted counts.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    save_tile, write_corpus_meta, ColorRgb, CorpusMeta, FeaturePalette, QuadKey, RasterTile,
    IMAGES_DIR, MAPS_DIR,
};

/// Default map background: an off-palette land green, far (> 25 dE) from
/// every default feature color so masks stay exact on synthetic tiles.
pub const DEFAULT_BACKGROUND: ColorRgb = ColorRgb::new(205, 235, 176);

/// A feature footprint in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Footprint {
    Rect {
        row: u32,
        col: u32,
        height: u32,
        width: u32,
    },
    Polyline {
        points: Vec<(u32, u32)>,
        width: u32,
    },
}

impl Footprint {
    /// Pixels covered by the footprint. Polylines stamp a `width`-sized
    /// square at subpixel steps along each segment.
    pub fn pixels(&self) -> Vec<(u32, u32)> {
        let mut set = HashSet::new();
        match self {
            Footprint::Rect {
                row,
                col,
                height,
                width,
            } => {
                for r in *row..row + height {
                    for c in *col..col + width {
                        set.insert((r, c));
                    }
                }
            }
            Footprint::Polyline { points, width } => {
                let half = (*width as i64 - 1) / 2;
                let stamp = |set: &mut HashSet<(u32, u32)>, r: f64, c: f64| {
                    let (r, c) = (r.round() as i64, c.round() as i64);
                    for dr in -half..=(*width as i64 - 1 - half) {
                        for dc in -half..=(*width as i64 - 1 - half) {
                            if r + dr >= 0 && c + dc >= 0 {
                                set.insert(((r + dr) as u32, (c + dc) as u32));
                            }
                        }
                    }
                };
                for segment in points.windows(2) {
                    let (r0, c0) = (f64::from(segment[0].0), f64::from(segment[0].1));
                    let (r1, c1) = (f64::from(segment[1].0), f64::from(segment[1].1));
                    let length = ((r1 - r0).powi(2) + (c1 - c0).powi(2)).sqrt();
                    let steps = (length * 2.0).ceil() as usize + 1;
                    for i in 0..=steps {
                        let t = i as f64 / steps as f64;
                        stamp(&mut set, r0 + (r1 - r0) * t, c0 + (c1 - c0) * t);
                    }
                }
            }
        }
        let mut pixels: Vec<_> = set.into_iter().collect();
        pixels.sort_unstable();
        pixels
    }

    fn max_extent(&self) -> (u32, u32) {
        match self {
            Footprint::Rect {
                row,
                col,
                height,
                width,
            } => (row + height, col + width),
            Footprint::Polyline { points, width } => {
                let max_r = points.iter().map(|p| p.0).max().unwrap_or(0);
                let max_c = points.iter().map(|p| p.1).max().unwrap_or(0);
                (max_r + width, max_c + width)
            }
        }
    }
}

/// One scene feature: class, footprint, and stacking order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFeature {
    pub class_name: String,
    pub footprint: Footprint,
    pub z_order: i32,
}

/// Scene description: the full feature list plus the label-degradation
/// knobs that make the MAP side diverge from the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub tile_size: u32,
    #[serde(default = "default_background")]
    pub background: ColorRgb,
    pub features: Vec<SceneFeature>,
    /// Probability that an eligible feature is omitted from the map.
    #[serde(default)]
    pub label_dropout: f64,
    /// Maximum per-axis label offset in pixels, mimicking GPS error
    /// (roads traced by GPS can be tens of pixels off at 1 m/px).
    #[serde(default)]
    pub jitter_px: u32,
    /// Classes subject to dropout; label incompleteness mostly affects
    /// houses.
    #[serde(default = "default_dropout_classes")]
    pub dropout_classes: Vec<String>,
}

fn default_background() -> ColorRgb {
    DEFAULT_BACKGROUND
}

fn default_dropout_classes() -> Vec<String> {
    vec!["house".to_string()]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig {
                context: "tile size must be positive".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.label_dropout) {
            return Err(Error::InvalidConfig {
                context: format!("label dropout {} must be in [0, 1]", self.label_dropout),
            });
        }
        for feature in &self.features {
            let (max_r, max_c) = feature.footprint.max_extent();
            if max_r > self.tile_size || max_c > self.tile_size {
                return Err(Error::FootprintOutOfBounds {
                    footprint: format!("{:?}", feature.footprint),
                    width: self.tile_size,
                    height: self.tile_size,
                });
            }
        }
        Ok(())
    }
}

/// A feature as recorded in the truth manifest: dropped labels stay listed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFeature {
    pub class_name: String,
    pub footprint: Footprint,
    pub z_order: i32,
    pub dropped: bool,
    pub area_px: usize,
}

/// Output of rendering one scene.
#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub image: RasterTile,
    pub map: RasterTile,
    pub truth: Vec<TruthFeature>,
}

fn hash_noise(seed: u64, row: u32, col: u32, channel: u32) -> i16 {
    // splitmix64 over the pixel address; cheap, stateless, deterministic.
    let mut z = seed
        ^ (u64::from(row) << 40)
        ^ (u64::from(col) << 16)
        ^ u64::from(channel);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z % 25) as i16 - 12
}

fn shade(base: ColorRgb, seed: u64, row: u32, col: u32) -> ColorRgb {
    let channel = |value: u8, c: u32| {
        (i16::from(value) + hash_noise(seed, row, col, c)).clamp(0, 255) as u8
    };
    ColorRgb::new(channel(base.r, 0), channel(base.g, 1), channel(base.b, 2))
}

/// Aerial-texture base colors per class. Only geometric fidelity matters
/// for the oracles; the texture just keeps image tiles visually distinct
/// from label maps.
fn image_base_color(class_name: &str) -> ColorRgb {
    match class_name {
        "house" => ColorRgb::new(112, 92, 82),
        "road" => ColorRgb::new(78, 78, 84),
        "main_road" => ColorRgb::new(96, 90, 80),
        "highway" => ColorRgb::new(60, 62, 70),
        _ => ColorRgb::new(100, 100, 100),
    }
}

const IMAGE_BACKGROUND: ColorRgb = ColorRgb::new(92, 128, 72);

/// Rasterize a scene into (image, map, truth).
///
/// The map composites features by ascending z-order so the highest z wins
/// each contested pixel, mirroring the top-down view; ties go to the later
/// feature in the list. The image renders the full scene, undropped and
/// unjittered. Deterministic for a fixed spec.
pub fn render_pair(spec: &SceneSpec, palette: &FeaturePalette) -> Result<RenderedPair> {
    spec.validate()?;
    for feature in &spec.features {
        palette.require_class(&feature.class_name)?;
    }

    let size = spec.tile_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Per-feature degradation draws happen in feature order so the stream
    // is stable regardless of how the draws are used afterwards.
    struct MapPlacement {
        dropped: bool,
        offset: (i64, i64),
    }
    let placements: Vec<MapPlacement> = spec
        .features
        .iter()
        .map(|feature| {
            let eligible = spec.dropout_classes.contains(&feature.class_name);
            let dropped = eligible
                && spec.label_dropout > 0.0
                && rng.gen_bool(spec.label_dropout);
            let offset = if spec.jitter_px > 0 {
                let j = i64::from(spec.jitter_px);
                (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
            } else {
                (0, 0)
            };
            MapPlacement { dropped, offset }
        })
        .collect();

    // Stable sort keeps input order among equal z.
    let mut order: Vec<usize> = (0..spec.features.len()).collect();
    order.sort_by_key(|&i| spec.features[i].z_order);

    let mut map = RasterTile::filled(size, size, spec.background);
    let mut image = RasterTile::filled(size, size, IMAGE_BACKGROUND);
    for row in 0..size {
        for col in 0..size {
            image.set_rgb(row, col, shade(IMAGE_BACKGROUND, spec.seed, row, col));
        }
    }

    for &index in &order {
        let feature = &spec.features[index];
        let color = palette
            .require_class(&feature.class_name)?
            .canonical_color();
        let image_base = image_base_color(&feature.class_name);
        let placement = &placements[index];
        for (row, col) in feature.footprint.pixels() {
            image.set_rgb(row, col, shade(image_base, spec.seed ^ 0xfeed, row, col));
            if placement.dropped {
                continue;
            }
            let (r, c) = (
                i64::from(row) + placement.offset.0,
                i64::from(col) + placement.offset.1,
            );
            if r >= 0 && c >= 0 && r < i64::from(size) && c < i64::from(size) {
                map.set_rgb(r as u32, c as u32, color);
            }
        }
    }

    let truth = spec
        .features
        .iter()
        .zip(&placements)
        .map(|(feature, placement)| TruthFeature {
            class_name: feature.class_name.clone(),
            footprint: feature.footprint.clone(),
            z_order: feature.z_order,
            dropped: placement.dropped,
            area_px: feature.footprint.pixels().len(),
        })
        .collect();

    Ok(RenderedPair { image, map, truth })
}

/// Random-scene parameters for corpus generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_tiles: usize,
    pub tile_size: u32,
    /// Quadkey level of the generated tiles; must address `n_tiles` keys.
    pub level: u8,
    pub houses_per_tile: (usize, usize),
    pub roads_per_tile: (usize, usize),
    pub label_dropout: f64,
    pub jitter_px: u32,
    pub seed: u64,
    pub ground_resolution_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_tiles: 4,
            tile_size: 128,
            level: 6,
            houses_per_tile: (6, 14),
            roads_per_tile: (1, 2),
            label_dropout: 0.0,
            jitter_px: 0,
            seed: 7,
            ground_resolution_m: 1.0,
            split: None,
        }
    }
}

/// Truth manifest entry for one tile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileTruth {
    pub key: String,
    pub quadkey: String,
    pub features: Vec<TruthFeature>,
}

impl TileTruth {
    pub fn count(&self, class_name: &str, include_dropped: bool) -> usize {
        self.features
            .iter()
            .filter(|f| f.class_name == class_name && (include_dropped || !f.dropped))
            .count()
    }
}

/// Corpus truth manifest: every planted feature, per tile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub tiles: Vec<TileTruth>,
}

impl CorpusManifest {
    pub fn count(&self, class_name: &str, include_dropped: bool) -> usize {
        self.tiles
            .iter()
            .map(|t| t.count(class_name, include_dropped))
            .sum()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generate a random scene: roads first, then houses rejection-sampled so
/// no house touches a road corridor or another house. The separation keeps
/// every house a single connected component in both rendered maps, which
/// the exact-count oracles rely on.
pub fn random_scene(
    seed: u64,
    tile_size: u32,
    houses: usize,
    roads: usize,
    label_dropout: f64,
    jitter_px: u32,
) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut blocked = vec![false; tile_size as usize * tile_size as usize];
    let margin = jitter_px + 2;

    let road_classes = ["road", "main_road", "highway"];
    for road_index in 0..roads {
        let class = road_classes[rng.gen_range(0..road_classes.len())];
        let width = rng.gen_range(2..=3u32);
        let horizontal = rng.gen_bool(0.5);
        let a = rng.gen_range(width..tile_size - width);
        let b = rng.gen_range(width..tile_size - width);
        let points = if horizontal {
            vec![(a, 0), (b, tile_size - 1)]
        } else {
            vec![(0, a), (tile_size - 1, b)]
        };
        let footprint = Footprint::Polyline { points, width };
        for (row, col) in footprint.pixels() {
            if row < tile_size && col < tile_size {
                block_around(&mut blocked, tile_size, row, col, margin);
            }
        }
        features.push(SceneFeature {
            class_name: class.to_string(),
            footprint,
            // Highways sit above the other road classes.
            z_order: if class == "highway" { 20 } else { 10 + road_index as i32 },
        });
    }

    let mut placed = 0;
    let mut attempts = 0;
    while placed < houses && attempts < houses * 200 {
        attempts += 1;
        let house_size = rng.gen_range(3..=7u32);
        if tile_size <= house_size + 2 * margin {
            break;
        }
        let row = rng.gen_range(margin..tile_size - house_size - margin);
        let col = rng.gen_range(margin..tile_size - house_size - margin);
        let mut free = true;
        'scan: for r in row.saturating_sub(margin)..(row + house_size + margin).min(tile_size) {
            for c in col.saturating_sub(margin)..(col + house_size + margin).min(tile_size) {
                if blocked[r as usize * tile_size as usize + c as usize] {
                    free = false;
                    break 'scan;
                }
            }
        }
        if !free {
            continue;
        }
        let footprint = Footprint::Rect {
            row,
            col,
            height: house_size,
            width: house_size,
        };
        for (r, c) in footprint.pixels() {
            block_around(&mut blocked, tile_size, r, c, 0);
        }
        features.push(SceneFeature {
            class_name: "house".to_string(),
            footprint,
            z_order: 1,
        });
        placed += 1;
    }

    SceneSpec {
        seed: derive_seed(seed, 0xace),
        tile_size,
        background: DEFAULT_BACKGROUND,
        features,
        label_dropout,
        jitter_px,
        dropout_classes: default_dropout_classes(),
    }
}

fn block_around(blocked: &mut [bool], tile_size: u32, row: u32, col: u32, margin: u32) {
    let lo_r = row.saturating_sub(margin);
    let hi_r = (row + margin + 1).min(tile_size);
    let lo_c = col.saturating_sub(margin);
    let hi_c = (col + margin + 1).min(tile_size);
    for r in lo_r..hi_r {
        for c in lo_c..hi_c {
            blocked[r as usize * tile_size as usize + c as usize] = true;
        }
    }
}

/// Per-tile outputs of `make_corpus`, kept in memory for oracles.
pub struct GeneratedTile {
    pub key: String,
    pub quadkey: QuadKey,
    pub pair: RenderedPair,
}

fn quadkey_for_index(level: u8, index: usize) -> QuadKey {
    let path: Vec<u8> = (0..level)
        .map(|d| ((index >> (2 * (level - 1 - d) as usize)) & 0b11) as u8)
        .collect();
    QuadKey::new(path, 0).expect("digits in range")
}

/// Generate the tiles of a corpus in memory. Deterministic per spec; tiles
/// render in parallel off per-tile derived seeds.
pub fn generate_tiles(spec: &CorpusSpec, palette: &FeaturePalette) -> Result<Vec<GeneratedTile>> {
    if spec.n_tiles == 0 {
        return Err(Error::EmptyInput {
            context: "corpus tile count".to_string(),
        });
    }
    if 4usize.checked_pow(u32::from(spec.level)).map_or(false, |max| spec.n_tiles > max) {
        return Err(Error::InvalidConfig {
            context: format!(
                "level {} addresses only {} tiles, requested {}",
                spec.level,
                4usize.pow(u32::from(spec.level)),
                spec.n_tiles
            ),
        });
    }
    (0..spec.n_tiles)
        .into_par_iter()
        .map(|index| {
            let tile_seed = derive_seed(spec.seed, index as u64);
            let mut layout_rng = ChaCha8Rng::seed_from_u64(derive_seed(tile_seed, 1));
            let houses = layout_rng.gen_range(spec.houses_per_tile.0..=spec.houses_per_tile.1);
            let roads = layout_rng.gen_range(spec.roads_per_tile.0..=spec.roads_per_tile.1);
            let scene = random_scene(
                tile_seed,
                spec.tile_size,
                houses,
                roads,
                spec.label_dropout,
                spec.jitter_px,
            );
            let pair = render_pair(&scene, palette)?;
            let quadkey = quadkey_for_index(spec.level, index);
            let key = format!("q{quadkey}");
            let geo_res = spec.ground_resolution_m;
            Ok(GeneratedTile {
                key,
                quadkey: quadkey.clone(),
                pair: RenderedPair {
                    image: pair
                        .image
                        .with_geo(quadkey.clone())
                        .with_ground_resolution(geo_res)?,
                    map: pair.map.with_geo(quadkey).with_ground_resolution(geo_res)?,
                    truth: pair.truth,
                },
            })
        })
        .collect()
}

/// Write a full paired corpus to disk: `images/`, `maps/`, sidecars, the
/// truth manifest, and the corpus marker. Returns the manifest.
pub fn make_corpus(
    spec: &CorpusSpec,
    palette: &FeaturePalette,
    out_dir: impl AsRef<Path>,
) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    let tiles = generate_tiles(spec, palette)?;

    let mut manifest = CorpusManifest { tiles: Vec::new() };
    for tile in &tiles {
        save_tile(
            out_dir.join(IMAGES_DIR).join(format!("{}.png", tile.key)),
            &tile.pair.image,
        )?;
        save_tile(
            out_dir.join(MAPS_DIR).join(format!("{}.png", tile.key)),
            &tile.pair.map,
        )?;
        manifest.tiles.push(TileTruth {
            key: tile.key.clone(),
            quadkey: tile.quadkey.to_string(),
            features: tile.pair.truth.clone(),
        });
    }

    let manifest_path = out_dir.join("truth.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    write_corpus_meta(
        out_dir,
        &CorpusMeta {
            split: spec.split.clone(),
        },
    )?;
    Ok(manifest)
}

/// Path of the truth manifest under a corpus root.
pub fn truth_manifest_path(root: impl AsRef<Path>) -> PathBuf {
    root.as_ref().join("truth.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::extract_mask;

    fn palette() -> FeaturePalette {
        FeaturePalette::default_osm()
    }

    #[test]
    fn highway_wins_contested_pixels() {
        let spec = SceneSpec {
            seed: 1,
            tile_size: 32,
            background: DEFAULT_BACKGROUND,
            features: vec![
                SceneFeature {
                    class_name: "road".to_string(),
                    footprint: Footprint::Polyline {
                        points: vec![(16, 0), (16, 31)],
                        width: 3,
                    },
                    z_order: 1,
                },
                SceneFeature {
                    class_name: "highway".to_string(),
                    footprint: Footprint::Polyline {
                        points: vec![(0, 16), (31, 16)],
                        width: 3,
                    },
                    z_order: 2,
                },
            ],
            label_dropout: 0.0,
            jitter_px: 0,
            dropout_classes: vec![],
        };
        let rendered = render_pair(&spec, &palette()).unwrap();
        let highway = palette().require_class("highway").unwrap().canonical_color();
        // The crossing pixel is covered by both; highest z must win.
        assert_eq!(rendered.map.rgb_at(16, 16), highway);
    }

    #[test]
    fn compositing_matches_max_z_oracle() {
        let scene = random_scene(99, 64, 8, 2, 0.0, 0);
        let rendered = render_pair(&scene, &palette()).unwrap();
        let pal = palette();
        for row in 0..64 {
            for col in 0..64 {
                let covering: Option<&SceneFeature> = scene
                    .features
                    .iter()
                    .filter(|f| f.footprint.pixels().contains(&(row, col)))
                    .max_by_key(|f| f.z_order);
                if let Some(feature) = covering {
                    let expected = pal
                        .require_class(&feature.class_name)
                        .unwrap()
                        .canonical_color();
                    assert_eq!(rendered.map.rgb_at(row, col), expected, "at ({row},{col})");
                }
            }
        }
    }

    #[test]
    fn no_degradation_means_map_matches_truth_footprints() {
        let scene = random_scene(5, 64, 6, 1, 0.0, 0);
        let rendered = render_pair(&scene, &palette()).unwrap();
        assert!(rendered.truth.iter().all(|t| !t.dropped));
        let house_cfg = palette();
        let house_cfg = house_cfg.require_class("house").unwrap();
        let mask = extract_mask(&rendered.map, house_cfg).unwrap();
        let expected: HashSet<(u32, u32)> = rendered
            .truth
            .iter()
            .filter(|t| t.class_name == "house")
            .flat_map(|t| t.footprint.pixels())
            .collect();
        for row in 0..64 {
            for col in 0..64 {
                assert_eq!(mask.get(row, col), expected.contains(&(row, col)));
            }
        }
    }

    #[test]
    fn dropout_bookkeeping_matches_the_seeded_draw() {
        let mut features = Vec::new();
        for i in 0..200u32 {
            features.push(SceneFeature {
                class_name: "house".to_string(),
                footprint: Footprint::Rect {
                    row: (i / 20) * 12,
                    col: (i % 20) * 12,
                    height: 4,
                    width: 4,
                },
                z_order: 1,
            });
        }
        let spec = SceneSpec {
            seed: 42,
            tile_size: 256,
            background: DEFAULT_BACKGROUND,
            features,
            label_dropout: 0.5,
            jitter_px: 0,
            dropout_classes: default_dropout_classes(),
        };
        let rendered = render_pair(&spec, &palette()).unwrap();
        let dropped = rendered.truth.iter().filter(|t| t.dropped).count();
        assert!(dropped > 60 && dropped < 140, "dropped {dropped} of 200");

        // The map must contain exactly the kept houses.
        let pal = palette();
        let mask = extract_mask(&rendered.map, pal.require_class("house").unwrap()).unwrap();
        let polygons = crate::polygon::polygonize(&mask, crate::polygon::Connectivity::Eight, 4);
        assert_eq!(polygons.len(), 200 - dropped);

        // Same spec renders identically.
        let again = render_pair(&spec, &palette()).unwrap();
        assert_eq!(again.map, rendered.map);
        assert_eq!(
            again.truth.iter().filter(|t| t.dropped).count(),
            dropped
        );
    }

    #[test]
    fn out_of_bounds_footprint_is_rejected() {
        let spec = SceneSpec {
            seed: 0,
            tile_size: 16,
            background: DEFAULT_BACKGROUND,
            features: vec![SceneFeature {
                class_name: "house".to_string(),
                footprint: Footprint::Rect {
                    row: 10,
                    col: 10,
                    height: 10,
                    width: 4,
                },
                z_order: 1,
            }],
            label_dropout: 0.0,
            jitter_px: 0,
            dropout_classes: vec![],
        };
        assert!(matches!(
            render_pair(&spec, &palette()),
            Err(Error::FootprintOutOfBounds { .. })
        ));
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            n_tiles: 3,
            tile_size: 48,
            level: 2,
            houses_per_tile: (2, 4),
            roads_per_tile: (1, 1),
            seed: 11,
            ..CorpusSpec::default()
        };
        let manifest = make_corpus(&spec, &palette(), dir.path()).unwrap();
        assert_eq!(manifest.tiles.len(), 3);

        let (pairs, unpaired) = crate::raster::pair_corpus(dir.path()).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(unpaired.is_empty());

        let tiles = generate_tiles(&spec, &palette()).unwrap();
        for (pair, tile) in pairs.iter().zip(&tiles) {
            assert_eq!(pair.key, tile.key);
            let map = crate::raster::load_tile(&pair.map_path).unwrap();
            assert_eq!(map, tile.pair.map, "write-then-read changed pixels");
        }

        let reloaded = CorpusManifest::from_json_file(truth_manifest_path(dir.path())).unwrap();
        assert_eq!(reloaded.count("house", true), manifest.count("house", true));
    }

    #[test]
    fn same_spec_writes_byte_identical_corpora() {
        let spec = CorpusSpec {
            n_tiles: 2,
            tile_size: 32,
            level: 1,
            seed: 3,
            ..CorpusSpec::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        make_corpus(&spec, &palette(), dir_a.path()).unwrap();
        make_corpus(&spec, &palette(), dir_b.path()).unwrap();
        for sub in [IMAGES_DIR, MAPS_DIR] {
            for key in crate::raster::list_map_keys(dir_a.path().join(sub)).unwrap() {
                let a = std::fs::read(dir_a.path().join(sub).join(format!("{key}.png"))).unwrap();
                let b = std::fs::read(dir_b.path().join(sub).join(format!("{key}.png"))).unwrap();
                assert_eq!(a, b, "{sub}/{key}.png differs between runs");
            }
        }
    }
}
