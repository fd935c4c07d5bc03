//! Connected-component polygons over feature masks, pixel-set IoU, and
//! GeoJSON export.

use std::collections::VecDeque;

use serde_json::{json, Value};

use crate::raster::{FeatureMask, QuadKey};

/// Neighbor rule for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Diagonally touching house pixels count as one building by default.
pub const DEFAULT_CONNECTIVITY: Connectivity = Connectivity::Eight;

/// Components smaller than this are treated as speckle and dropped.
pub const DEFAULT_MIN_AREA_PX: usize = 4;

/// One connected region of mask pixels: the unit of feature matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturePolygon {
    class_name: String,
    /// Sorted (row, col) members.
    pixel_set: Vec<(u32, u32)>,
    /// (min_row, min_col, max_row, max_col), inclusive.
    bbox: (u32, u32, u32, u32),
    id: usize,
}

impl FeaturePolygon {
    /// Build from an arbitrary pixel list; pixels are sorted and
    /// deduplicated, and the bounding box is derived. Panics on an empty
    /// list, which has no geometric meaning.
    pub fn from_pixels(id: usize, class_name: impl Into<String>, mut pixels: Vec<(u32, u32)>) -> Self {
        assert!(!pixels.is_empty(), "a feature polygon needs at least one pixel");
        pixels.sort_unstable();
        pixels.dedup();
        let mut bbox = (u32::MAX, u32::MAX, 0, 0);
        for &(row, col) in &pixels {
            bbox.0 = bbox.0.min(row);
            bbox.1 = bbox.1.min(col);
            bbox.2 = bbox.2.max(row);
            bbox.3 = bbox.3.max(col);
        }
        Self {
            class_name: class_name.into(),
            pixel_set: pixels,
            bbox,
            id,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn area_px(&self) -> usize {
        self.pixel_set.len()
    }

    pub fn bbox(&self) -> (u32, u32, u32, u32) {
        self.bbox
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixel_set
    }

    fn bbox_intersects(&self, other: &FeaturePolygon) -> bool {
        self.bbox.0 <= other.bbox.2
            && other.bbox.0 <= self.bbox.2
            && self.bbox.1 <= other.bbox.3
            && other.bbox.1 <= self.bbox.3
    }
}

/// Extract the connected components of the mask's 1-pixels with area at
/// least `min_area_px`, ordered by (min_row, min_col) of their bounding
/// boxes. Component ids are their position in the returned list.
pub fn polygonize(
    mask: &FeatureMask,
    connectivity: Connectivity,
    min_area_px: usize,
) -> Vec<FeaturePolygon> {
    let (width, height) = (mask.width(), mask.height());
    let mut visited = vec![false; width as usize * height as usize];
    let index = |row: u32, col: u32| row as usize * width as usize + col as usize;

    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };

    let mut components: Vec<Vec<(u32, u32)>> = Vec::new();
    for row in 0..height {
        for col in 0..width {
            if !mask.get(row, col) || visited[index(row, col)] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::new();
            visited[index(row, col)] = true;
            queue.push_back((row, col));
            while let Some((r, c)) = queue.pop_front() {
                pixels.push((r, c));
                for (dr, dc) in offsets {
                    let (nr, nc) = (i64::from(r) + dr, i64::from(c) + dc);
                    if nr < 0 || nc < 0 || nr >= i64::from(height) || nc >= i64::from(width) {
                        continue;
                    }
                    let (nr, nc) = (nr as u32, nc as u32);
                    if mask.get(nr, nc) && !visited[index(nr, nc)] {
                        visited[index(nr, nc)] = true;
                        queue.push_back((nr, nc));
                    }
                }
            }
            if pixels.len() >= min_area_px {
                components.push(pixels);
            }
        }
    }

    let mut seeds: Vec<(Vec<(u32, u32)>, (u32, u32), (u32, u32))> = components
        .into_iter()
        .map(|pixels| {
            let min_row = pixels.iter().map(|p| p.0).min().unwrap();
            let min_col = pixels.iter().map(|p| p.1).min().unwrap();
            let first = *pixels.iter().min().unwrap();
            (pixels, (min_row, min_col), first)
        })
        .collect();
    seeds.sort_by_key(|(_, bbox_min, first)| (*bbox_min, *first));

    seeds
        .into_iter()
        .enumerate()
        .map(|(id, (pixels, _, _))| FeaturePolygon::from_pixels(id, mask.class_name(), pixels))
        .collect()
}

/// Intersection-over-union of two pixel sets.
pub fn iou(a: &FeaturePolygon, b: &FeaturePolygon) -> f64 {
    if !a.bbox_intersects(b) {
        return 0.0;
    }
    // Two-pointer merge over the sorted pixel lists.
    let mut intersection = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.pixel_set.len() && j < b.pixel_set.len() {
        match a.pixel_set[i].cmp(&b.pixel_set[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                intersection += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.pixel_set.len() + b.pixel_set.len() - intersection;
    intersection as f64 / union as f64
}

/// Serialize polygons as a GeoJSON FeatureCollection in pixel space
/// (x = column, y = row, y growing downward). Each feature's geometry is a
/// MultiPolygon of the traced boundary rings; disjoint rings arising from
/// diagonal-only connections or enclosed holes are emitted as separate
/// rings rather than hole topology.
pub fn polygons_to_geojson(polygons: &[FeaturePolygon], quadkey: &QuadKey) -> Value {
    let features: Vec<Value> = polygons
        .iter()
        .map(|polygon| {
            let rings = boundary_rings(polygon);
            let coordinates: Vec<Value> = rings
                .into_iter()
                .map(|ring| {
                    let points: Vec<Value> =
                        ring.into_iter().map(|(x, y)| json!([x, y])).collect();
                    json!([points])
                })
                .collect();
            json!({
                "type": "Feature",
                "properties": {
                    "class_name": polygon.class_name(),
                    "id": polygon.id(),
                    "area_px": polygon.area_px(),
                    "quadkey": quadkey.to_string(),
                },
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": coordinates,
                }
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

type Point = (i64, i64);

/// Trace the boundary of the pixel set into closed rings of grid-corner
/// coordinates. Pixel (row, col) occupies the unit square with corners
/// (col, row) and (col + 1, row + 1).
fn boundary_rings(polygon: &FeaturePolygon) -> Vec<Vec<(f64, f64)>> {
    use std::collections::{HashMap, HashSet};

    let members: HashSet<(u32, u32)> = polygon.pixel_set.iter().copied().collect();
    let has = |row: i64, col: i64| {
        row >= 0 && col >= 0 && members.contains(&(row as u32, col as u32))
    };

    // Directed edges along exposed pixel sides, oriented so each square is
    // walked top -> right -> bottom -> left.
    let mut outgoing: HashMap<Point, Vec<Point>> = HashMap::new();
    let mut edges: HashSet<(Point, Point)> = HashSet::new();
    for &(row, col) in &polygon.pixel_set {
        let (r, c) = (i64::from(row), i64::from(col));
        let sides = [
            (!has(r - 1, c), (c, r), (c + 1, r)),
            (!has(r, c + 1), (c + 1, r), (c + 1, r + 1)),
            (!has(r + 1, c), (c + 1, r + 1), (c, r + 1)),
            (!has(r, c - 1), (c, r + 1), (c, r)),
        ];
        for (exposed, from, to) in sides {
            if exposed {
                outgoing.entry(from).or_default().push(to);
                edges.insert((from, to));
            }
        }
    }

    let mut rings = Vec::new();
    let mut starts: Vec<(Point, Point)> = edges.iter().copied().collect();
    starts.sort_unstable();
    for start in starts {
        if !edges.contains(&start) {
            continue;
        }
        let mut ring = vec![start.0];
        let (mut from, mut to) = start;
        edges.remove(&start);
        loop {
            ring.push(to);
            if to == start.0 {
                break;
            }
            let direction = (to.0 - from.0, to.1 - from.1);
            // Prefer the sharpest available turn so pinch vertices split
            // into separate rings instead of figure eights.
            let right = (-direction.1, direction.0);
            let left = (direction.1, -direction.0);
            let candidates = [
                (to.0 + right.0, to.1 + right.1),
                (to.0 + direction.0, to.1 + direction.1),
                (to.0 + left.0, to.1 + left.1),
            ];
            let next = candidates
                .into_iter()
                .find(|next| edges.contains(&(to, *next)))
                .or_else(|| {
                    outgoing
                        .get(&to)
                        .and_then(|outs| outs.iter().find(|n| edges.contains(&(to, **n))))
                        .copied()
                });
            match next {
                Some(next) => {
                    edges.remove(&(to, next));
                    from = to;
                    to = next;
                }
                None => break,
            }
        }
        rings.push(ring.into_iter().map(|(x, y)| (x as f64, y as f64)).collect());
    }
    rings
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_rows(rows: &[&str]) -> FeatureMask {
        let height = rows.len() as u32;
        let width = rows[0].len() as u32;
        let mut mask = FeatureMask::zeros(width, height, "house");
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                if ch == '#' {
                    mask.set(r as u32, c as u32, true);
                }
            }
        }
        mask
    }

    // Independent oracle: plain recursive flood fill over the same mask.
    fn flood_fill_components(mask: &FeatureMask, connectivity: Connectivity) -> Vec<Vec<(u32, u32)>> {
        fn fill(
            mask: &FeatureMask,
            seen: &mut Vec<bool>,
            row: i64,
            col: i64,
            eight: bool,
            out: &mut Vec<(u32, u32)>,
        ) {
            if row < 0 || col < 0 || row >= i64::from(mask.height()) || col >= i64::from(mask.width()) {
                return;
            }
            let idx = row as usize * mask.width() as usize + col as usize;
            if seen[idx] || !mask.get(row as u32, col as u32) {
                return;
            }
            seen[idx] = true;
            out.push((row as u32, col as u32));
            fill(mask, seen, row - 1, col, eight, out);
            fill(mask, seen, row + 1, col, eight, out);
            fill(mask, seen, row, col - 1, eight, out);
            fill(mask, seen, row, col + 1, eight, out);
            if eight {
                fill(mask, seen, row - 1, col - 1, eight, out);
                fill(mask, seen, row - 1, col + 1, eight, out);
                fill(mask, seen, row + 1, col - 1, eight, out);
                fill(mask, seen, row + 1, col + 1, eight, out);
            }
        }

        let eight = connectivity == Connectivity::Eight;
        let mut seen = vec![false; mask.width() as usize * mask.height() as usize];
        let mut components = Vec::new();
        for row in 0..mask.height() {
            for col in 0..mask.width() {
                let mut pixels = Vec::new();
                fill(mask, &mut seen, i64::from(row), i64::from(col), eight, &mut pixels);
                if !pixels.is_empty() {
                    pixels.sort_unstable();
                    components.push(pixels);
                }
            }
        }
        components.sort();
        components
    }

    #[test]
    fn empty_mask_gives_no_polygons() {
        let mask = FeatureMask::zeros(8, 8, "house");
        assert!(polygonize(&mask, Connectivity::Four, 1).is_empty());
    }

    #[test]
    fn two_disjoint_blocks_match_flood_fill_oracle() {
        let mask = mask_from_rows(&[
            "##....",
            "##....",
            "......",
            "....##",
            "....##",
        ]);
        let polygons = polygonize(&mask, Connectivity::Four, 1);
        assert_eq!(polygons.len(), 2);
        assert!(polygons.iter().all(|p| p.area_px() == 4));
        assert_eq!(polygons[0].id(), 0);
        assert_eq!(polygons[0].bbox(), (0, 0, 1, 1));
        assert_eq!(polygons[1].bbox(), (3, 4, 4, 5));

        let mut ours: Vec<Vec<(u32, u32)>> =
            polygons.iter().map(|p| p.pixels().to_vec()).collect();
        ours.sort();
        assert_eq!(ours, flood_fill_components(&mask, Connectivity::Four));
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let mask = mask_from_rows(&["#..", ".#.", "..."]);
        assert_eq!(polygonize(&mask, Connectivity::Four, 1).len(), 2);
        assert_eq!(polygonize(&mask, Connectivity::Eight, 1).len(), 1);
    }

    #[test]
    fn min_area_filters_speckle() {
        let mask = mask_from_rows(&["#..##", "..###", ".....", "#...."]);
        let polygons = polygonize(&mask, Connectivity::Eight, 4);
        assert_eq!(polygons.len(), 1);
        assert_eq!(polygons[0].area_px(), 5);
    }

    #[test]
    fn every_kept_pixel_belongs_to_exactly_one_polygon() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let mut mask = FeatureMask::zeros(16, 16, "x");
            for row in 0..16 {
                for col in 0..16 {
                    if rng.gen_bool(0.4) {
                        mask.set(row, col, true);
                    }
                }
            }
            let polygons = polygonize(&mask, Connectivity::Eight, 1);
            let mut seen = std::collections::HashSet::new();
            for polygon in &polygons {
                for &pixel in polygon.pixels() {
                    assert!(seen.insert(pixel), "pixel {pixel:?} in two polygons");
                    assert!(mask.get(pixel.0, pixel.1));
                }
            }
            assert_eq!(seen.len(), mask.count_ones());
        }
    }

    #[test]
    fn identical_polygons_have_unit_iou() {
        let p = FeaturePolygon::from_pixels(0, "x", vec![(0, 0), (0, 1), (1, 0)]);
        let q = FeaturePolygon::from_pixels(1, "x", vec![(1, 0), (0, 1), (0, 0)]);
        assert_eq!(iou(&p, &q), 1.0);
    }

    #[test]
    fn disjoint_polygons_have_zero_iou() {
        let p = FeaturePolygon::from_pixels(0, "x", vec![(0, 0)]);
        let q = FeaturePolygon::from_pixels(1, "x", vec![(5, 5)]);
        assert_eq!(iou(&p, &q), 0.0);
    }

    #[test]
    fn offset_blocks_give_one_seventh() {
        let block = |r0: u32, c0: u32| {
            vec![(r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)]
        };
        let p = FeaturePolygon::from_pixels(0, "x", block(0, 0));
        let q = FeaturePolygon::from_pixels(1, "x", block(1, 1));
        let value = iou(&p, &q);
        assert!((value - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&q, &p), value);
    }

    #[test]
    fn iou_is_translation_invariant() {
        let p = FeaturePolygon::from_pixels(0, "x", vec![(2, 2), (2, 3), (3, 2)]);
        let q = FeaturePolygon::from_pixels(1, "x", vec![(3, 3), (2, 3), (4, 2)]);
        let before = iou(&p, &q);
        let shift = |poly: &FeaturePolygon, dr: u32, dc: u32| {
            FeaturePolygon::from_pixels(
                poly.id(),
                poly.class_name(),
                poly.pixels().iter().map(|(r, c)| (r + dr, c + dc)).collect(),
            )
        };
        assert_eq!(iou(&shift(&p, 7, 11), &shift(&q, 7, 11)), before);
    }

    #[test]
    fn geojson_block_traces_a_closed_square() {
        let polygon = FeaturePolygon::from_pixels(0, "house", vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let doc = polygons_to_geojson(&[polygon], &QuadKey::root());
        assert_eq!(doc["type"], "FeatureCollection");
        let feature = &doc["features"][0];
        assert_eq!(feature["properties"]["class_name"], "house");
        let ring = &feature["geometry"]["coordinates"][0][0];
        let points: Vec<(f64, f64)> = ring
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
            .collect();
        assert_eq!(points.first(), points.last());
        // Shoelace area of the single ring must equal the pixel area.
        let area = points
            .windows(2)
            .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
            .sum::<f64>()
            .abs()
            / 2.0;
        assert_eq!(area, 4.0);
    }

    #[test]
    fn geojson_handles_pinch_vertices() {
        let polygon = FeaturePolygon::from_pixels(0, "house", vec![(0, 0), (1, 1)]);
        let doc = polygons_to_geojson(&[polygon], &QuadKey::root());
        let rings = doc["features"][0]["geometry"]["coordinates"]
            .as_array()
            .unwrap()
            .len();
        assert_eq!(rings, 2);
    }
}
