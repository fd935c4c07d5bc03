//! Polygon-level detection scoring: greedy IoU matching per tile, TP/FP/FN
//! accounting, and precision/recall/F1 aggregation over corpora.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::polygon::{iou, polygonize, Connectivity, FeaturePolygon, DEFAULT_CONNECTIVITY, DEFAULT_MIN_AREA_PX};
use crate::raster::{extract_mask, pair_png_dirs, FeaturePalette, RasterTile, UnpairedKey};

/// Default IoU threshold for counting a detection as a true positive. Kept
/// below the common 0.5 because tree cover erodes detected house footprints.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MatchKind {
    Tp,
    Fp,
    Fn,
}

/// One matching outcome: a matched pair, a missed ground-truth polygon, or
/// an unmatched detection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRecord {
    pub gt_id: Option<usize>,
    pub det_id: Option<usize>,
    pub iou: f64,
    pub kind: MatchKind,
}

/// Greedy one-to-one matching by descending IoU among pairs at or above the
/// threshold; ties break on (gt_id, det_id). Every polygon lands in exactly
/// one record: matched pairs become TP, leftover ground truth FN, leftover
/// detections FP.
pub fn match_tile(
    gt: &[FeaturePolygon],
    det: &[FeaturePolygon],
    iou_threshold: f64,
) -> Result<Vec<MatchRecord>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidConfig {
            context: format!("IoU threshold {iou_threshold} must be in (0, 1]"),
        });
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for g in gt {
        for d in det {
            let value = iou(g, d);
            if value >= iou_threshold {
                candidates.push((value, g.id(), d.id()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut gt_match: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut det_used: BTreeMap<usize, ()> = BTreeMap::new();
    for (value, gt_id, det_id) in candidates {
        if gt_match.contains_key(&gt_id) || det_used.contains_key(&det_id) {
            continue;
        }
        gt_match.insert(gt_id, (det_id, value));
        det_used.insert(det_id, ());
    }

    let mut records = Vec::with_capacity(gt.len() + det.len());
    for g in gt {
        match gt_match.get(&g.id()) {
            Some(&(det_id, value)) => records.push(MatchRecord {
                gt_id: Some(g.id()),
                det_id: Some(det_id),
                iou: value,
                kind: MatchKind::Tp,
            }),
            None => records.push(MatchRecord {
                gt_id: Some(g.id()),
                det_id: None,
                iou: 0.0,
                kind: MatchKind::Fn,
            }),
        }
    }
    for d in det {
        if !det_used.contains_key(&d.id()) {
            records.push(MatchRecord {
                gt_id: None,
                det_id: Some(d.id()),
                iou: 0.0,
                kind: MatchKind::Fp,
            });
        }
    }
    Ok(records)
}

/// Match records for one tile, tagged with the tile key.
#[derive(Debug, Clone, Serialize)]
pub struct TileMatches {
    pub quadkey: String,
    pub records: Vec<MatchRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TileCounts {
    pub quadkey: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Aggregate counts and scores. `precision`, `recall`, and `f1` are `None`
/// when their denominators are zero: undefined is reported explicitly, not
/// as 0.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub per_tile: Vec<TileCounts>,
    pub records: Vec<TileMatches>,
}

/// Harmonic mean of precision and recall; `None` when p + r = 0.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

impl MatchReport {
    /// Scores from raw counts, with no per-tile detail.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => f1_score(p, r),
            _ => None,
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            per_tile: Vec::new(),
            records: Vec::new(),
        }
    }
}

/// Sum per-tile TP/FP/FN counts over the corpus, then derive the scores.
/// All input tiles must come from the same class and threshold.
pub fn aggregate(tiles: Vec<TileMatches>) -> MatchReport {
    let mut per_tile = Vec::with_capacity(tiles.len());
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for tile in &tiles {
        let mut counts = TileCounts {
            quadkey: tile.quadkey.clone(),
            tp: 0,
            fp: 0,
            fn_: 0,
        };
        for record in &tile.records {
            match record.kind {
                MatchKind::Tp => counts.tp += 1,
                MatchKind::Fp => counts.fp += 1,
                MatchKind::Fn => counts.fn_ += 1,
            }
        }
        tp += counts.tp;
        fp += counts.fp;
        fn_ += counts.fn_;
        per_tile.push(counts);
    }
    let mut report = MatchReport::from_counts(tp, fp, fn_);
    report.per_tile = per_tile;
    report.records = tiles;
    report
}

/// Knobs for corpus evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub connectivity: Connectivity,
    pub min_area_px: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            connectivity: DEFAULT_CONNECTIVITY,
            min_area_px: DEFAULT_MIN_AREA_PX,
        }
    }
}

/// A pair that could not be evaluated; evaluation continues past it.
#[derive(Debug, Clone, Serialize)]
pub struct PairError {
    pub key: String,
    pub error: String,
}

/// Corpus-level evaluation artifact: one report per palette class, plus
/// unpaired keys and per-pair failures.
#[derive(Debug, Serialize)]
pub struct CorpusReport {
    pub iou_threshold: f64,
    pub pairs_evaluated: usize,
    pub class_reports: BTreeMap<String, MatchReport>,
    pub unpaired: Vec<UnpairedKey>,
    pub pair_errors: Vec<PairError>,
}

impl CorpusReport {
    pub fn class_report(&self, class: &str) -> Option<&MatchReport> {
        self.class_reports.get(class)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// One CSV row per class: label, class, tp, fp, fn, precision, recall,
    /// f1. Undefined scores are written as the literal string `undefined`.
    pub fn write_csv_summary(&self, path: impl AsRef<Path>, label: &str) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        writer
            .write_record(["city", "class", "tp", "fp", "fn", "precision", "recall", "f1"])
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
        let fmt = |score: Option<f64>| match score {
            Some(value) => format!("{value:.6}"),
            None => "undefined".to_string(),
        };
        for (class, report) in &self.class_reports {
            writer
                .write_record([
                    label.to_string(),
                    class.clone(),
                    report.tp.to_string(),
                    report.fp.to_string(),
                    report.fn_.to_string(),
                    fmt(report.precision),
                    fmt(report.recall),
                    fmt(report.f1),
                ])
                .map_err(|e| Error::Csv {
                    path: path.to_path_buf(),
                    source: e,
                })?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

/// Evaluate in-memory (ground truth, detection) map pairs for every class
/// in the palette: mask extraction, polygonization, per-tile matching, and
/// aggregation. Pairs with mismatched dimensions become `pair_errors`.
pub fn evaluate_pairs(
    pairs: &[(String, &RasterTile, &RasterTile)],
    palette: &FeaturePalette,
    options: &EvalOptions,
) -> Result<CorpusReport> {
    palette.validate()?;

    struct PairEval {
        key: String,
        per_class: Vec<(String, Vec<MatchRecord>)>,
    }

    let evaluated: Vec<std::result::Result<PairEval, PairError>> = pairs
        .par_iter()
        .map(|(key, gt_map, det_map)| {
            let run = || -> Result<PairEval> {
                gt_map.ensure_same_dimensions(det_map)?;
                let mut per_class = Vec::with_capacity(palette.classes.len());
                for class in &palette.classes {
                    let gt_polygons = polygonize(
                        &extract_mask(gt_map, class)?,
                        options.connectivity,
                        options.min_area_px,
                    );
                    let det_polygons = polygonize(
                        &extract_mask(det_map, class)?,
                        options.connectivity,
                        options.min_area_px,
                    );
                    let records = match_tile(&gt_polygons, &det_polygons, options.iou_threshold)?;
                    per_class.push((class.class_name.clone(), records));
                }
                Ok(PairEval {
                    key: key.clone(),
                    per_class,
                })
            };
            run().map_err(|e| PairError {
                key: key.clone(),
                error: e.to_string(),
            })
        })
        .collect();

    let mut per_class_tiles: BTreeMap<String, Vec<TileMatches>> = palette
        .class_names()
        .map(|name| (name.to_string(), Vec::new()))
        .collect();
    let mut pair_errors = Vec::new();
    let mut pairs_evaluated = 0usize;
    for outcome in evaluated {
        match outcome {
            Ok(eval) => {
                pairs_evaluated += 1;
                for (class, records) in eval.per_class {
                    per_class_tiles
                        .get_mut(&class)
                        .expect("class seeded above")
                        .push(TileMatches {
                            quadkey: eval.key.clone(),
                            records,
                        });
                }
            }
            Err(error) => pair_errors.push(error),
        }
    }

    let class_reports = per_class_tiles
        .into_iter()
        .map(|(class, tiles)| (class, aggregate(tiles)))
        .collect();
    Ok(CorpusReport {
        iou_threshold: options.iou_threshold,
        pairs_evaluated,
        class_reports,
        unpaired: Vec::new(),
        pair_errors,
    })
}

/// Evaluate two directories of map PNGs paired by filename stem. Keys
/// missing a counterpart are reported in the result, not skipped silently.
pub fn evaluate_corpus_dirs(
    gt_dir: impl AsRef<Path>,
    det_dir: impl AsRef<Path>,
    palette: &FeaturePalette,
    options: &EvalOptions,
) -> Result<CorpusReport> {
    let (paths, unpaired) = pair_png_dirs(gt_dir, det_dir, "gt", "det")?;

    let mut loaded = Vec::with_capacity(paths.len());
    let mut pair_errors = Vec::new();
    for (key, gt_path, det_path) in paths {
        match (crate::raster::load_tile(&gt_path), crate::raster::load_tile(&det_path)) {
            (Ok(gt_map), Ok(det_map)) => loaded.push((key, gt_map, det_map)),
            (Err(e), _) | (_, Err(e)) => pair_errors.push(PairError {
                key,
                error: e.to_string(),
            }),
        }
    }
    let borrowed: Vec<(String, &RasterTile, &RasterTile)> = loaded
        .iter()
        .map(|(key, gt_map, det_map)| (key.clone(), gt_map, det_map))
        .collect();
    let mut report = evaluate_pairs(&borrowed, palette, options)?;
    report.unpaired = unpaired;
    report.pair_errors.extend(pair_errors);
    Ok(report)
}
