//! Latent traversal grids and their PGM serialization.
//!
//! One grid per seed image: row 1 the original, row 2 its reconstruction
//! (both repeated across the columns), then one row per traversed structured
//! dimension with that dimension swept over the traversal values while every
//! other latent stays at the seed's posterior mean. Tiles are separated by
//! one-pixel gray lines, so a grid of `R` rows and `T` columns of `HxW`
//! tiles measures `(R*(H+1)-1) x (T*(W+1)-1)` pixels.

use thiserror::Error;

use crate::diffcore::{DiffError, Tensor};
use crate::dotvae::DotVae;
use crate::synthdata::FactoredDataset;

const SEPARATOR: u8 = 128;

#[derive(Debug, Error)]
pub enum TraversalError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub fn pixel_to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Serializes one grayscale image as binary PGM (P5, maxval 255).
pub fn pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Lays out `rows x cols` tiles of `h x w` pixels with 1-pixel separators.
pub fn assemble_grid(
    tiles: &[Vec<u8>],
    rows: usize,
    cols: usize,
    h: usize,
    w: usize,
) -> (Vec<u8>, usize, usize) {
    assert_eq!(tiles.len(), rows * cols);
    let grid_w = cols * (w + 1) - 1;
    let grid_h = rows * (h + 1) - 1;
    let mut out = vec![SEPARATOR; grid_w * grid_h];
    for r in 0..rows {
        for c in 0..cols {
            let tile = &tiles[r * cols + c];
            let top = r * (h + 1);
            let left = c * (w + 1);
            for y in 0..h {
                let dst = (top + y) * grid_w + left;
                out[dst..dst + w].copy_from_slice(&tile[y * w..(y + 1) * w]);
            }
        }
    }
    (out, grid_w, grid_h)
}

pub struct TraversalGrid {
    pub pixels: Vec<u8>,
    pub width: usize,
    pub height: usize,
    /// Tiles in row-major order before assembly: original row,
    /// reconstruction row, then one row per traversed dim.
    pub tiles: Vec<Vec<u8>>,
    pub cols: usize,
}

/// Evenly spaced sweep values over `[-range, range]`.
pub fn traversal_values(points: usize, range: f32) -> Vec<f32> {
    (0..points)
        .map(|i| -range + 2.0 * range * i as f32 / (points.max(2) - 1) as f32)
        .collect()
}

/// Renders the traversal grid for one dataset image.
pub fn render_traversal(
    model: &DotVae,
    ds: &FactoredDataset,
    image_idx: usize,
    dims: &[usize],
    values: &[f32],
) -> Result<TraversalGrid, TraversalError> {
    let res = ds.grid.resolution;
    let image_dim = ds.image_dim();
    if image_idx >= ds.num_items() {
        return Err(TraversalError::BadRequest(format!(
            "image index {image_idx} out of range for {} items",
            ds.num_items()
        )));
    }
    for &d in dims {
        if d >= model.latent_c() {
            return Err(TraversalError::BadRequest(format!(
                "traversal dim {d} out of range for {} structured dims",
                model.latent_c()
            )));
        }
    }
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        return Err(TraversalError::BadRequest(
            "need at least 2 finite traversal values".into(),
        ));
    }

    let x = Tensor::from_vec(vec![1, image_dim], ds.image(image_idx).to_vec())?;
    let post = model.encode(&x)?;
    let recon = model.decode_mean(&post.mu_c, &post.mu_z)?;

    let original_tile: Vec<u8> = x.data().iter().map(|&v| pixel_to_byte(v)).collect();
    let recon_tile: Vec<u8> = recon.data().iter().map(|&v| pixel_to_byte(v)).collect();

    let cols = values.len();
    // one decoder pass over every (dim, value) pair
    let kc = model.latent_c();
    let kz = model.latent_z();
    let batch = dims.len() * cols;
    let mut c_batch = vec![0.0f32; batch * kc];
    let mut z_batch = vec![0.0f32; batch * kz];
    for (row, &dim) in dims.iter().enumerate() {
        for (col, &value) in values.iter().enumerate() {
            let b = row * cols + col;
            c_batch[b * kc..(b + 1) * kc].copy_from_slice(post.mu_c.data());
            c_batch[b * kc + dim] = value;
            z_batch[b * kz..(b + 1) * kz].copy_from_slice(post.mu_z.data());
        }
    }
    let sweep = model.decode_mean(
        &Tensor::from_vec(vec![batch, kc], c_batch)?,
        &Tensor::from_vec(vec![batch, kz], z_batch)?,
    )?;

    let mut tiles = Vec::with_capacity((dims.len() + 2) * cols);
    for _ in 0..cols {
        tiles.push(original_tile.clone());
    }
    for _ in 0..cols {
        tiles.push(recon_tile.clone());
    }
    for b in 0..batch {
        let probs = &sweep.data()[b * image_dim..(b + 1) * image_dim];
        tiles.push(probs.iter().map(|&v| pixel_to_byte(v)).collect());
    }

    let rows = dims.len() + 2;
    let (pixels, width, height) = assemble_grid(&tiles, rows, cols, res, res);
    Ok(TraversalGrid { pixels, width, height, tiles, cols })
}

/// Center of mass of a tile along the horizontal axis.
pub fn tile_centroid_x(tile: &[u8], w: usize, h: usize) -> f64 {
    let mut mass = 0.0f64;
    let mut weighted = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let p = tile[y * w + x] as f64;
            mass += p;
            weighted += p * x as f64;
        }
    }
    if mass > 0.0 {
        weighted / mass
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dotvae::ModelConfig;
    use crate::synthdata::generate_dsprites_mini;

    fn test_model_and_data() -> (DotVae, FactoredDataset) {
        let ds = generate_dsprites_mini(16, &[3, 3, 6, 6], 0).unwrap();
        let cfg = ModelConfig {
            latent_c: 3,
            latent_z: 2,
            enc_hidden: vec![16],
            dec_hidden: vec![16],
            disc_hidden: vec![8],
            ..ModelConfig::default()
        };
        let model = DotVae::init(cfg, ds.image_dim(), 7).unwrap();
        (model, ds)
    }

    #[test]
    fn grid_dimensions_follow_the_layout_formula() {
        let (model, ds) = test_model_and_data();
        let dims: Vec<usize> = (0..model.latent_c()).collect();
        let values = traversal_values(7, 2.5);
        let grid = render_traversal(&model, &ds, 0, &dims, &values).unwrap();
        let h = ds.grid.resolution;
        assert_eq!(grid.height, (model.latent_c() + 2) * (h + 1) - 1);
        assert_eq!(grid.width, 7 * (h + 1) - 1);
        assert_eq!(grid.pixels.len(), grid.width * grid.height);
    }

    #[test]
    fn sweep_through_the_posterior_mean_reproduces_the_reconstruction() {
        let (model, ds) = test_model_and_data();
        let x = Tensor::from_vec(vec![1, ds.image_dim()], ds.image(3).to_vec()).unwrap();
        let post = model.encode(&x).unwrap();
        let dim = 1usize;
        let mu_val = post.mu_c.data()[dim];
        let values = vec![-2.5f32, mu_val, 2.5];
        let grid = render_traversal(&model, &ds, 3, &[dim], &values).unwrap();
        // row 2 (index 1) holds the reconstruction; row 3 is the sweep
        let recon_tile = &grid.tiles[grid.cols];
        let sweep_tile = &grid.tiles[2 * grid.cols + 1];
        assert_eq!(recon_tile, sweep_tile);
    }

    #[test]
    fn out_of_range_requests_are_rejected() {
        let (model, ds) = test_model_and_data();
        let values = traversal_values(7, 2.5);
        assert!(matches!(
            render_traversal(&model, &ds, ds.num_items(), &[0], &values),
            Err(TraversalError::BadRequest(_))
        ));
        assert!(matches!(
            render_traversal(&model, &ds, 0, &[model.latent_c()], &values),
            Err(TraversalError::BadRequest(_))
        ));
        assert!(matches!(
            render_traversal(&model, &ds, 0, &[0], &[1.0]),
            Err(TraversalError::BadRequest(_))
        ));
    }

    #[test]
    fn centroid_tracks_a_hand_built_moving_blob() {
        // decoder wired so the pixel mass slides right as c_0 grows:
        // logits(col) = slope(col) * c_0 via a paired-relu identity
        let ds = generate_dsprites_mini(16, &[3, 3, 6, 6], 0).unwrap();
        let res = ds.grid.resolution;
        let cfg = ModelConfig {
            latent_c: 1,
            latent_z: 1,
            enc_hidden: vec![4],
            dec_hidden: vec![2],
            disc_hidden: vec![4],
            ..ModelConfig::default()
        };
        let mut model = DotVae::init(cfg, ds.image_dim(), 0).unwrap();
        for params in [&mut model.enc_params, &mut model.dec_params] {
            let zeros = vec![0.0f32; params.total_elems()];
            params.load_flat_values(&zeros).unwrap();
        }
        // decoder: w0 [2,2] maps (c, z) -> (relu(c), relu(-c)); w1 [2, HW]
        let mut dec = model.dec_params.flat_values();
        dec[0] = 1.0; // c -> h0
        dec[1] = -1.0; // c -> h1
        let w1_off = 2 * 2 + 2;
        for y in 0..res {
            for x in 0..res {
                let slope = 0.6 * (x as f32 - (res as f32 - 1.0) / 2.0);
                dec[w1_off + (y * res + x)] = slope; // h0 row
                dec[w1_off + ds.image_dim() + (y * res + x)] = -slope; // h1 row
            }
        }
        model.dec_params.load_flat_values(&dec).unwrap();

        let values = traversal_values(7, 2.5);
        let grid = render_traversal(&model, &ds, 0, &[0], &values).unwrap();
        let mut centroids = Vec::new();
        for col in 0..grid.cols {
            let tile = &grid.tiles[2 * grid.cols + col];
            centroids.push(tile_centroid_x(tile, res, res));
        }
        for pair in centroids.windows(2) {
            assert!(pair[0] < pair[1], "centroids not increasing: {centroids:?}");
        }
    }

    #[test]
    fn pgm_header_and_payload() {
        let bytes = pgm_bytes(3, 2, &[0, 255, 12, 9, 8, 7]);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 255, 12, 9, 8, 7]);
    }
}
