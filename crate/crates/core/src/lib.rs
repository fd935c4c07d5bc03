//! tilelab: measure, augment, and stress-test rasterized map labels.
//!
//! The crate covers the support machinery around map-generation pipelines
//! without any neural-network dependency:
//!
//! - [`raster`] — tiles, palettes, color-distance feature masks, entropy
//!   filtering, quadtree keys, and dataset splits.
//! - [`polygon`] — connected-component polygon extraction and IoU.
//! - [`metrics`] — polygon-level TP/FP/FN matching with precision, recall,
//!   and F1 reporting over paired corpora.
//! - [`augment`] — house-density and completeness scores, plus incremental
//!   label augmentation that merges false-positive detections back into
//!   training maps.
//! - [`fwloss`] — the feature-weighted cycle-consistency loss kernel with
//!   analytic gradients and toy generators for verification.
//! - [`dpsgd`] — a deterministic decentralized-SGD simulator with
//!   random-partner weight averaging over a worker ring.
//! - [`synth`] — synthetic paired corpora with exact bookkeeping, used as
//!   ground truth for every corpus-level check.

pub mod augment;
pub mod dpsgd;
mod error;
pub mod fwloss;
pub mod metrics;
pub mod polygon;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{
    cie76_distance, extract_mask, extract_mask_all, filter_tiles, split_dataset, tile_entropy,
    ColorLab, ColorRgb, FeatureClassConfig, FeatureMask, FeaturePalette, QuadKey, RasterTile,
};
