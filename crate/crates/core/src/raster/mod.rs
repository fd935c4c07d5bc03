//! Raster tiles, feature palettes, mask extraction, entropy filtering, and
//! quadtree keying.

mod color;
mod entropy;
mod io;
mod mask;
mod palette;
mod quadkey;
mod split;
mod tile;

pub use color::{cie76_distance, srgb_to_lab, ColorLab, ColorRgb};
pub use entropy::{filter_tiles, tile_entropy};
pub use io::{
    list_map_keys, load_tile, pair_corpus, pair_png_dirs, read_corpus_meta, save_tile,
    write_corpus_meta, CorpusMeta, PairedTile, TileMeta, UnpairedKey, CORPUS_META_FILE,
    IMAGES_DIR, MAPS_DIR,
};
pub use mask::{extract_mask, extract_mask_all, FeatureMask};
pub use palette::{FeatureClassConfig, FeaturePalette, DEFAULT_DELTA_E};
pub use quadkey::{QuadKey, MAX_LEVEL_TIMED, MAX_LEVEL_UNTIMED, QUADKEY_BYTES};
pub use split::split_dataset;
pub use tile::{RasterTile, DEFAULT_TILE_SIZE};
