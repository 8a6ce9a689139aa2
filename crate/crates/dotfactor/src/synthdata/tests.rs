use std::collections::HashSet;

use super::*;

fn default_dsprites() -> FactoredDataset {
    generate_dsprites_mini(32, &[3, 4, 8, 8], 0).unwrap()
}

fn default_shapes3d() -> FactoredDataset {
    generate_shapes3d_mini(32, &[4, 4, 4, 2, 3]).unwrap()
}

#[test]
fn dsprites_item_count_is_product_of_cardinalities() {
    let ds = default_dsprites();
    assert_eq!(ds.num_items(), 3 * 4 * 8 * 8);
    assert_eq!(ds.images.len(), 768 * 32 * 32);
    assert_eq!(ds.factor_indices.len(), 768 * 4);
}

#[test]
fn renders_are_deterministic() {
    let a = default_dsprites();
    let b = default_dsprites();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.images), bits(&b.images));
    let a3 = default_shapes3d();
    let b3 = default_shapes3d();
    assert_eq!(bits(&a3.images), bits(&b3.images));
}

#[test]
fn square_pixel_count_strictly_increases_with_scale() {
    let ds = default_dsprites();
    // square shape, position levels nearest the frame center
    let mut counts = Vec::new();
    for scale in 0..4 {
        let idx = ds.grid.factors_to_index(&[0, scale, 4, 4]).unwrap();
        let count = ds.image(idx).iter().filter(|&&p| p > 0.5).count();
        counts.push(count);
    }
    for w in counts.windows(2) {
        assert!(w[0] < w[1], "pixel counts not strictly increasing: {counts:?}");
    }
    // the rasterizer oracle: a square of half-extent h covers (2h+1)^2 pixels
    for (scale, &count) in counts.iter().enumerate() {
        let h = ds.grid.factors[1].values[scale] as usize;
        assert_eq!(count, (2 * h + 1) * (2 * h + 1));
    }
}

#[test]
fn sprites_never_touch_the_border() {
    let ds = default_dsprites();
    let res = ds.grid.resolution;
    for idx in 0..ds.num_items() {
        let img = ds.image(idx);
        for i in 0..res {
            assert_eq!(img[i], 0.0, "top border hit at item {idx}");
            assert_eq!(img[(res - 1) * res + i], 0.0, "bottom border hit at item {idx}");
            assert_eq!(img[i * res], 0.0, "left border hit at item {idx}");
            assert_eq!(img[i * res + res - 1], 0.0, "right border hit at item {idx}");
        }
    }
}

#[test]
fn render_is_injective_on_default_grids() {
    for ds in [default_dsprites(), default_shapes3d()] {
        let mut seen = HashSet::new();
        for idx in 0..ds.num_items() {
            let key: Vec<u32> = ds.image(idx).iter().map(|v| v.to_bits()).collect();
            assert!(seen.insert(key), "duplicate image at index {idx}");
        }
    }
}

#[test]
fn orientation_variant_renders_and_keeps_sprites_inside() {
    let ds = generate_dsprites_mini(32, &[3, 3, 6, 6], 4).unwrap();
    assert_eq!(ds.num_items(), 3 * 3 * 6 * 6 * 4);
    let res = ds.grid.resolution;
    for idx in 0..ds.num_items() {
        let img = ds.image(idx);
        for i in 0..res {
            assert_eq!(img[i], 0.0);
            assert_eq!(img[(res - 1) * res + i], 0.0);
        }
    }
    // distinct orientations of a triangle give distinct images
    let a = ds.grid.factors_to_index(&[2, 1, 3, 3, 0]).unwrap();
    let b = ds.grid.factors_to_index(&[2, 1, 3, 3, 1]).unwrap();
    assert_ne!(ds.image(a), ds.image(b));
}

#[test]
fn shapes3d_floor_hue_only_alters_pixels_below_horizon() {
    let ds = default_shapes3d();
    let res = ds.grid.resolution;
    let horizon = res * 55 / 100;
    let a = ds.grid.factors_to_index(&[0, 1, 2, 1, 0]).unwrap();
    let b = ds.grid.factors_to_index(&[3, 1, 2, 1, 0]).unwrap();
    let (ia, ib) = (ds.image(a), ds.image(b));
    let mut changed = 0;
    for y in 0..res {
        for x in 0..res {
            if ia[y * res + x] != ib[y * res + x] {
                assert!(y >= horizon, "floor hue changed pixel above horizon at ({x}, {y})");
                changed += 1;
            }
        }
    }
    assert!(changed > 0);
}

#[test]
fn shapes3d_object_mean_monotone_in_object_hue() {
    let ds = default_shapes3d();
    // object mask from the rasterizer oracle: pixels that differ from both
    // background renders, identified by intensity band
    let mut means = Vec::new();
    for hue in 0..4 {
        let idx = ds.grid.factors_to_index(&[0, 0, hue, 1, 1]).unwrap();
        let img = ds.image(idx);
        let obj: Vec<f32> = img.iter().copied().filter(|&p| p >= 0.75).collect();
        assert!(!obj.is_empty());
        means.push(obj.iter().sum::<f32>() / obj.len() as f32);
    }
    for w in means.windows(2) {
        assert!(w[0] < w[1], "object means not monotone: {means:?}");
    }
}

#[test]
fn index_mapping_round_trips() {
    let ds = default_dsprites();
    assert_eq!(ds.grid.factors_to_index(&[0, 0, 0, 0]).unwrap(), 0);
    assert_eq!(ds.grid.factors_to_index(&[2, 3, 7, 7]).unwrap(), ds.num_items() - 1);
    for idx in 0..ds.num_items() {
        let levels = ds.grid.index_to_factors(idx).unwrap();
        assert_eq!(ds.grid.factors_to_index(&levels).unwrap(), idx);
        // stored factor levels agree with the mapping
        let stored: Vec<usize> = ds.levels(idx).iter().map(|&v| v as usize).collect();
        assert_eq!(stored, levels);
    }
    assert!(ds.grid.factors_to_index(&[0, 0, 0, 8]).is_err());
    assert!(ds.grid.index_to_factors(ds.num_items()).is_err());
}

#[test]
fn fixed_factor_batches_fix_exactly_one_factor() {
    let ds = default_dsprites();
    let mut rng = SplitMixRng::new(9);
    let (indices, level) = ds.sample_fixed_factor_batch(2, 64, &mut rng).unwrap();
    assert_eq!(indices.len(), 64);
    for &i in &indices {
        assert_eq!(ds.levels(i)[2] as usize, level);
    }
    // identical seed, identical batch
    let mut rng2 = SplitMixRng::new(9);
    let (indices2, level2) = ds.sample_fixed_factor_batch(2, 64, &mut rng2).unwrap();
    assert_eq!(indices, indices2);
    assert_eq!(level, level2);

    assert!(ds.sample_fixed_factor_batch(0, 1, &mut rng).is_err());
}

#[test]
fn non_fixed_factors_are_uniform() {
    // chi-squared test against the uniform distribution for a non-fixed
    // factor over a large fixed-factor batch
    let ds = default_dsprites();
    let mut rng = SplitMixRng::new(123);
    let (indices, _) = ds.sample_fixed_factor_batch(0, 10_000, &mut rng).unwrap();
    let card = ds.grid.factors[3].cardinality;
    let mut counts = vec![0usize; card];
    for &i in &indices {
        counts[ds.levels(i)[3] as usize] += 1;
    }
    let expected = indices.len() as f64 / card as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-squared with 7 degrees of freedom
    assert!(chi2 < 24.32, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn dataset_files_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_dsprites_mini(16, &[3, 3, 6, 6], 0).unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.grid, ds.grid);
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&loaded.images), bits(&ds.images));
    assert_eq!(loaded.factor_indices, ds.factor_indices);

    // saving the loaded dataset reproduces identical bytes
    let dir2 = tempfile::tempdir().unwrap();
    save_dataset(dir2.path(), &loaded).unwrap();
    for name in ["grid.json", "images.bin", "factors.bin"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(generate_dsprites_mini(8, &[3, 4, 8, 8], 0).is_err());
    assert!(generate_dsprites_mini(32, &[2, 4, 8, 8], 0).is_err());
    assert!(generate_dsprites_mini(32, &[3, 2, 8, 8], 0).is_err());
    assert!(generate_dsprites_mini(32, &[3, 4, 5, 8], 0).is_err());
    // too many scale levels: the largest sprite cannot keep 6 distinct
    // centers inside a 16-pixel frame
    assert!(generate_dsprites_mini(16, &[3, 6, 8, 8], 0).is_err());
    assert!(generate_shapes3d_mini(32, &[3, 4, 4, 2, 3]).is_err());
    assert!(generate_shapes3d_mini(32, &[4, 4, 4, 1, 3]).is_err());
}
