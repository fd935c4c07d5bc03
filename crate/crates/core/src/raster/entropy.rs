use crate::raster::tile::RasterTile;

/// Shannon entropy, in bits, of the 256-bin histogram over all samples of
/// the tile (channels pooled). Ranges over [0, 8] for 8-bit samples.
pub fn tile_entropy(tile: &RasterTile) -> f64 {
    let mut histogram = [0u64; 256];
    for &sample in tile.pixels() {
        histogram[sample as usize] += 1;
    }
    let total = tile.pixels().len() as f64;
    let mut entropy = 0.0;
    for count in histogram {
        if count > 0 {
            let p = count as f64 / total;
            entropy -= p * p.log2();
        }
    }
    entropy
}

/// Partition tiles into (kept, dropped) by `tile_entropy >= threshold`,
/// preserving input order. Low-entropy tiles are the near-uniform ones
/// dominated by bare land.
pub fn filter_tiles(tiles: Vec<RasterTile>, threshold: f64) -> (Vec<RasterTile>, Vec<RasterTile>) {
    tiles
        .into_iter()
        .partition(|tile| tile_entropy(tile) >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ColorRgb;

    #[test]
    fn constant_tile_has_zero_entropy() {
        let tile = RasterTile::filled(8, 8, ColorRgb::new(42, 42, 42));
        assert_eq!(tile_entropy(&tile), 0.0);
    }

    #[test]
    fn two_equal_frequency_values_give_one_bit() {
        let pixels: Vec<u8> = (0..64).map(|i| if i % 2 == 0 { 10 } else { 200 }).collect();
        let tile = RasterTile::new(8, 8, 1, pixels).unwrap();
        assert!((tile_entropy(&tile) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sixty_four_distinct_values_give_six_bits() {
        let pixels: Vec<u8> = (0..64).map(|i| (i * 4) as u8).collect();
        let tile = RasterTile::new(8, 8, 1, pixels).unwrap();
        assert!((tile_entropy(&tile) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded_and_permutation_invariant() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut pixels: Vec<u8> = (0..16 * 16 * 3).map(|_| rng.gen()).collect();
        let tile = RasterTile::new(16, 16, 3, pixels.clone()).unwrap();
        let h = tile_entropy(&tile);
        assert!((0.0..=8.0).contains(&h));

        pixels.shuffle(&mut rng);
        let shuffled = RasterTile::new(16, 16, 3, pixels).unwrap();
        assert_eq!(tile_entropy(&shuffled), h);
    }

    #[test]
    fn threshold_zero_keeps_everything() {
        let tiles = vec![
            RasterTile::filled(4, 4, ColorRgb::new(0, 0, 0)),
            RasterTile::filled(4, 4, ColorRgb::new(9, 9, 9)),
        ];
        let (kept, dropped) = filter_tiles(tiles, 0.0);
        assert_eq!((kept.len(), dropped.len()), (2, 0));
    }

    #[test]
    fn threshold_above_eight_drops_everything() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pixels: Vec<u8> = (0..32 * 32 * 3).map(|_| rng.gen()).collect();
        let tiles = vec![RasterTile::new(32, 32, 3, pixels).unwrap()];
        let (kept, dropped) = filter_tiles(tiles, 8.0 + 1e-9);
        assert_eq!((kept.len(), dropped.len()), (0, 1));
    }

    // Entropies computed individually first, then the partition is checked
    // against them.
    #[test]
    fn mixed_corpus_keeps_exactly_the_noisy_tiles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut tiles = Vec::new();
        let mut expected_noisy = Vec::new();
        for i in 0..10 {
            if i % 3 == 0 {
                tiles.push(RasterTile::filled(8, 8, ColorRgb::new(i as u8, i as u8, 0)));
            } else {
                let pixels: Vec<u8> = (0..8 * 8 * 3).map(|_| rng.gen()).collect();
                let tile = RasterTile::new(8, 8, 3, pixels).unwrap();
                assert!(tile_entropy(&tile) >= 0.5);
                expected_noisy.push(tile.clone());
                tiles.push(tile);
            }
        }
        let total = tiles.len();
        let (kept, dropped) = filter_tiles(tiles, 0.5);
        assert_eq!(kept.len() + dropped.len(), total);
        assert_eq!(kept, expected_noisy);
        assert!(dropped.iter().all(|t| tile_entropy(t) < 0.5));
    }
}
