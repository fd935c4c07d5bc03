//! Incremental label augmentation and density scoring.
//!
//! Detections that come back as false positives against an incomplete label
//! map are usually real features the labels miss; merging them back in
//! densifies the training labels. House density (features per square
//! kilometer) and its completeness score against a reference city quantify
//! that incompleteness before and after.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{match_tile, EvalOptions, MatchKind};
use crate::polygon::polygonize;
use crate::raster::{
    extract_mask, load_tile, pair_png_dirs, read_corpus_meta, save_tile, write_corpus_meta,
    FeatureClassConfig, FeaturePalette, RasterTile, UnpairedKey, IMAGES_DIR, MAPS_DIR,
};

/// Reference house density used for completeness scores, in features per
/// square kilometer. Configurable; the default matches the most completely
/// labeled benchmark city available (Las Vegas).
pub const DEFAULT_REFERENCE_DENSITY: f64 = 3283.0;

/// Raw density measurement over a corpus.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityStats {
    pub feature_count: u64,
    pub tile_count: usize,
    pub area_km2: f64,
    pub density_per_km2: f64,
}

/// Density plus its completeness against a reference density.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub city: String,
    pub class_name: String,
    #[serde(flatten)]
    pub stats: DensityStats,
    pub reference_density_per_km2: f64,
    pub completeness_pct: f64,
}

/// Completeness score: density as a percentage of the reference density.
pub fn completeness_pct(density_per_km2: f64, reference_density_per_km2: f64) -> f64 {
    density_per_km2 / reference_density_per_km2 * 100.0
}

impl DensityReport {
    pub fn new(
        city: impl Into<String>,
        class_name: impl Into<String>,
        stats: DensityStats,
        reference_density_per_km2: f64,
    ) -> Self {
        Self {
            city: city.into(),
            class_name: class_name.into(),
            stats,
            reference_density_per_km2,
            completeness_pct: completeness_pct(stats.density_per_km2, reference_density_per_km2),
        }
    }
}

/// Count polygons of one class across map tiles and divide by the corpus
/// ground area. When `resolution_override` is unset each tile contributes
/// area at its own ground resolution.
pub fn feature_density(
    maps: &[RasterTile],
    class: &FeatureClassConfig,
    resolution_override: Option<f64>,
    options: &EvalOptions,
) -> Result<DensityStats> {
    if maps.is_empty() {
        return Err(Error::EmptyInput {
            context: "density over an empty corpus".to_string(),
        });
    }
    if let Some(res) = resolution_override {
        if !(res > 0.0) {
            return Err(Error::InvalidConfig {
                context: format!("ground resolution {res} must be > 0"),
            });
        }
    }

    let counted: Vec<Result<(u64, f64)>> = maps
        .par_iter()
        .map(|map| {
            let mask = extract_mask(map, class)?;
            let polygons = polygonize(&mask, options.connectivity, options.min_area_px);
            let area = match resolution_override {
                Some(res) => {
                    (res * f64::from(map.width())) * (res * f64::from(map.height())) / 1.0e6
                }
                None => map.area_km2(),
            };
            Ok((polygons.len() as u64, area))
        })
        .collect();

    let mut feature_count = 0u64;
    let mut area_km2 = 0.0;
    for entry in counted {
        let (count, area) = entry?;
        feature_count += count;
        area_km2 += area;
    }
    Ok(DensityStats {
        feature_count,
        tile_count: maps.len(),
        area_km2,
        density_per_km2: feature_count as f64 / area_km2,
    })
}

/// `feature_density` over every map PNG in a directory.
pub fn feature_density_of_dir(
    dir: impl AsRef<Path>,
    class: &FeatureClassConfig,
    resolution_override: Option<f64>,
    options: &EvalOptions,
) -> Result<DensityStats> {
    let dir = dir.as_ref();
    let keys = crate::raster::list_map_keys(dir)?;
    let maps: Result<Vec<RasterTile>> = keys
        .iter()
        .map(|key| load_tile(dir.join(format!("{key}.png"))))
        .collect();
    feature_density(&maps?, class, resolution_override, options)
}

/// Outcome of merging one generated map into its original label map.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentOutcome {
    /// Detections classified FP and burned into the labels.
    pub merged_polygons: u64,
    /// Pixels overwritten with the canonical class color.
    pub merged_pixels: u64,
}

/// Merge the false-positive detections of `generated` into `original`.
///
/// Detections are matched against the original labels at the evaluation
/// threshold; every unmatched detection has its pixel set burned in the
/// class's canonical color (generated maps may carry off-palette shades,
/// and downstream mask extraction must re-detect the merged labels
/// exactly). Matched and missed label regions, and every pixel outside the
/// merged footprints, are left bit-identical. Detections that overlap a
/// label too weakly to match still merge; they are false positives by
/// definition.
pub fn augment_labels(
    original: &RasterTile,
    generated: &RasterTile,
    class: &FeatureClassConfig,
    options: &EvalOptions,
) -> Result<(RasterTile, AugmentOutcome)> {
    original.ensure_same_dimensions(generated)?;
    let original_polygons = polygonize(
        &extract_mask(original, class)?,
        options.connectivity,
        options.min_area_px,
    );
    let generated_polygons = polygonize(
        &extract_mask(generated, class)?,
        options.connectivity,
        options.min_area_px,
    );
    let records = match_tile(&original_polygons, &generated_polygons, options.iou_threshold)?;

    let color = class.canonical_color();
    let mut merged = original.clone();
    let mut outcome = AugmentOutcome {
        merged_polygons: 0,
        merged_pixels: 0,
    };
    for record in records {
        if record.kind != MatchKind::Fp {
            continue;
        }
        let det_id = record.det_id.expect("FP records carry the detection id");
        let polygon = &generated_polygons[det_id];
        outcome.merged_polygons += 1;
        for &(row, col) in polygon.pixels() {
            merged.set_rgb(row, col, color);
            outcome.merged_pixels += 1;
        }
    }
    Ok((merged, outcome))
}

/// Corpus-level augmentation report.
#[derive(Debug, Serialize)]
pub struct AugmentReport {
    pub class_name: String,
    pub pairs_augmented: usize,
    pub merged_polygons: u64,
    pub merged_pixels: u64,
    pub density_before: DensityReport,
    pub density_after: DensityReport,
    pub unpaired: Vec<UnpairedKey>,
}

/// Options for corpus augmentation.
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub eval: EvalOptions,
    /// Classes to merge. Label incompleteness is a house phenomenon;
    /// road merging stays opt-in.
    pub classes: Vec<String>,
    pub reference_density_per_km2: f64,
    pub resolution_override: Option<f64>,
    pub city: String,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            eval: EvalOptions::default(),
            classes: vec!["house".to_string()],
            reference_density_per_km2: DEFAULT_REFERENCE_DENSITY,
            resolution_override: None,
            city: "corpus".to_string(),
        }
    }
}

/// Augment a training corpus with the false positives of a generated map
/// directory, writing the merged corpus to `out_root`.
///
/// The train root must not be flagged as a test split: augmentation is a
/// training-data operation only. Images (when present) are copied through
/// unchanged; unpaired keys are reported and their maps copied unmodified.
pub fn augment_corpus(
    train_root: impl AsRef<Path>,
    generated_maps: impl AsRef<Path>,
    out_root: impl AsRef<Path>,
    palette: &FeaturePalette,
    options: &AugmentOptions,
) -> Result<AugmentReport> {
    let train_root = train_root.as_ref();
    let generated_maps = generated_maps.as_ref();
    let out_root = out_root.as_ref();

    let meta = read_corpus_meta(train_root)?;
    if meta.split.as_deref() == Some("test") {
        return Err(Error::SplitGuard {
            root: train_root.to_path_buf(),
            split: "test".to_string(),
        });
    }

    let train_maps = train_root.join(MAPS_DIR);
    let train_maps = if train_maps.is_dir() {
        train_maps
    } else {
        train_root.to_path_buf()
    };
    let (pairs, unpaired) = pair_png_dirs(&train_maps, generated_maps, "train", "generated")?;

    let classes: Vec<&FeatureClassConfig> = options
        .classes
        .iter()
        .map(|name| palette.require_class(name))
        .collect::<Result<_>>()?;
    let primary_class = classes.first().ok_or_else(|| Error::InvalidConfig {
        context: "augmentation needs at least one class".to_string(),
    })?;

    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut merged_polygons = 0u64;
    let mut merged_pixels = 0u64;
    for (key, train_path, generated_path) in &pairs {
        let original = load_tile(train_path)?;
        let generated = load_tile(generated_path)?;
        let mut merged = original.clone();
        for class in &classes {
            let (next, outcome) = augment_labels(&merged, &generated, class, &options.eval)?;
            merged = next;
            merged_polygons += outcome.merged_polygons;
            merged_pixels += outcome.merged_pixels;
        }
        save_tile(out_root.join(MAPS_DIR).join(format!("{key}.png")), &merged)?;
        before.push(original);
        after.push(merged);
    }

    // Train maps with no generated counterpart pass through unchanged.
    for entry in &unpaired {
        if entry.present_in == "train" {
            let tile = load_tile(train_maps.join(format!("{}.png", entry.key)))?;
            save_tile(
                out_root.join(MAPS_DIR).join(format!("{}.png", entry.key)),
                &tile,
            )?;
        }
    }

    let train_images = train_root.join(IMAGES_DIR);
    if train_images.is_dir() {
        for key in crate::raster::list_map_keys(&train_images)? {
            let tile = load_tile(train_images.join(format!("{key}.png")))?;
            save_tile(out_root.join(IMAGES_DIR).join(format!("{key}.png")), &tile)?;
        }
    }
    write_corpus_meta(out_root, &meta)?;

    let stats_before = feature_density(
        &before,
        primary_class,
        options.resolution_override,
        &options.eval,
    )?;
    let stats_after = feature_density(
        &after,
        primary_class,
        options.resolution_override,
        &options.eval,
    )?;
    Ok(AugmentReport {
        class_name: primary_class.class_name.clone(),
        pairs_augmented: pairs.len(),
        merged_polygons,
        merged_pixels,
        density_before: DensityReport::new(
            options.city.clone(),
            primary_class.class_name.clone(),
            stats_before,
            options.reference_density_per_km2,
        ),
        density_after: DensityReport::new(
            options.city.clone(),
            primary_class.class_name.clone(),
            stats_after,
            options.reference_density_per_km2,
        ),
        unpaired,
    })
}
