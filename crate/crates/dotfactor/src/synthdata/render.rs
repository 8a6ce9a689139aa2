//! Exact rasterizers for the two synthetic dataset families.

use super::{DataError, Factor, FactorGrid, FactoredDataset};

fn integer_centers(lo: usize, hi: usize, levels: usize) -> Option<Vec<usize>> {
    if hi < lo || levels < 2 {
        return None;
    }
    let span = (hi - lo) as f64;
    let mut centers = Vec::with_capacity(levels);
    for i in 0..levels {
        let c = lo as f64 + span * i as f64 / (levels - 1) as f64;
        centers.push(c.round() as usize);
    }
    let distinct = centers.windows(2).all(|w| w[0] < w[1]);
    if distinct {
        Some(centers)
    } else {
        None
    }
}

pub fn generate_dsprites_mini(
    resolution: usize,
    cardinalities: &[usize],
    orientation_levels: usize,
) -> Result<FactoredDataset, DataError> {
    if !(16..=64).contains(&resolution) {
        return Err(DataError::InvalidGrid(format!("resolution {resolution} outside [16, 64]")));
    }
    let with_orientation = orientation_levels > 0;
    if cardinalities.len() != 4 {
        return Err(DataError::InvalidGrid(format!(
            "dsprites-mini takes 4 cardinalities (shape, scale, pos-x, pos-y), got {}",
            cardinalities.len()
        )));
    }
    let (n_shape, n_scale, n_x, n_y) =
        (cardinalities[0], cardinalities[1], cardinalities[2], cardinalities[3]);
    if n_shape != 3 {
        return Err(DataError::InvalidGrid(format!("shape factor must have 3 levels, got {n_shape}")));
    }
    if n_scale < 3 {
        return Err(DataError::InvalidGrid(format!("scale needs >= 3 levels, got {n_scale}")));
    }
    if n_x < 6 || n_y < 6 {
        return Err(DataError::InvalidGrid(format!(
            "positions need >= 6 levels each, got ({n_x}, {n_y})"
        )));
    }
    if with_orientation && orientation_levels < 2 {
        return Err(DataError::InvalidGrid("orientation needs >= 2 levels when enabled".into()));
    }

    let half_min = (resolution * 3 / 32).max(2);
    let halves: Vec<usize> = (0..n_scale).map(|l| half_min + l).collect();
    let half_max = *halves.last().unwrap();
    // rotation can push triangle corners out to half * sqrt(2)
    let margin = if with_orientation {
        (half_max as f64 * std::f64::consts::SQRT_2).ceil() as usize
    } else {
        half_max
    };
    // one pixel of slack keeps even the largest sprite off the border
    let margin = margin + 1;
    if 2 * margin + 1 > resolution {
        return Err(DataError::ShapeClipsFrame(vec![n_scale - 1]));
    }
    let centers_x = integer_centers(margin, resolution - 1 - margin, n_x)
        .ok_or_else(|| DataError::ShapeClipsFrame(vec![n_scale - 1, n_x - 1]))?;
    let centers_y = integer_centers(margin, resolution - 1 - margin, n_y)
        .ok_or_else(|| DataError::ShapeClipsFrame(vec![n_scale - 1, n_y - 1]))?;

    let mut factors = vec![
        Factor {
            name: "shape".into(),
            cardinality: 3,
            values: (0..3).map(|v| v as f64).collect(),
        },
        Factor {
            name: "scale".into(),
            cardinality: n_scale,
            values: halves.iter().map(|&h| h as f64).collect(),
        },
        Factor {
            name: "pos_x".into(),
            cardinality: n_x,
            values: centers_x.iter().map(|&c| c as f64).collect(),
        },
        Factor {
            name: "pos_y".into(),
            cardinality: n_y,
            values: centers_y.iter().map(|&c| c as f64).collect(),
        },
    ];
    if with_orientation {
        factors.push(Factor {
            name: "orientation".into(),
            cardinality: orientation_levels,
            values: (0..orientation_levels)
                .map(|o| o as f64 * std::f64::consts::PI / orientation_levels as f64)
                .collect(),
        });
    }
    let grid = FactorGrid { factors, resolution, channels: 1 };
    grid.validate()?;

    let n = grid.num_items();
    let dim = resolution * resolution;
    let mut images = vec![0.0f32; n * dim];
    let mut factor_indices = vec![0u16; n * grid.num_factors()];

    for idx in 0..n {
        let levels = grid.index_to_factors(idx)?;
        for (f, &l) in levels.iter().enumerate() {
            factor_indices[idx * grid.num_factors() + f] = l as u16;
        }
        let shape = levels[0];
        let half = halves[levels[1]];
        let cx = centers_x[levels[2]] as f64;
        let cy = centers_y[levels[3]] as f64;
        // orientation only affects the ellipse and the triangle
        let angle = if with_orientation && shape != 0 {
            levels[4] as f64 * std::f64::consts::PI / orientation_levels as f64
        } else {
            0.0
        };
        let img = &mut images[idx * dim..(idx + 1) * dim];
        rasterize_sprite(img, resolution, shape, half as f64, cx, cy, angle);
    }

    Ok(FactoredDataset { grid, images, factor_indices })
}

fn rasterize_sprite(img: &mut [f32], res: usize, shape: usize, half: f64, cx: f64, cy: f64, angle: f64) {
    let (sin, cos) = angle.sin_cos();
    for y in 0..res {
        for x in 0..res {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // rotate pixel into the shape's frame
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            let inside = match shape {
                0 => u.abs() <= half && v.abs() <= half,
                1 => {
                    let b = (half * 0.6).max(1.5);
                    (u / half) * (u / half) + (v / b) * (v / b) <= 1.0
                }
                _ => point_in_triangle(u, v, half),
            };
            if inside {
                img[y * res + x] = 1.0;
            }
        }
    }
}

/// Isoceles triangle with apex at `(0, -half)` and base corners at
/// `(+-half, +half)`, tested via half-plane sign checks.
fn point_in_triangle(u: f64, v: f64, half: f64) -> bool {
    let ax = 0.0;
    let ay = -half;
    let bx = -half;
    let by = half;
    let cx = half;
    let cy = half;
    let d1 = (u - bx) * (ay - by) - (ax - bx) * (v - by);
    let d2 = (u - cx) * (by - cy) - (bx - cx) * (v - cy);
    let d3 = (u - ax) * (cy - ay) - (cx - ax) * (v - ay);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

pub fn generate_shapes3d_mini(
    resolution: usize,
    cardinalities: &[usize],
) -> Result<FactoredDataset, DataError> {
    if !(16..=64).contains(&resolution) {
        return Err(DataError::InvalidGrid(format!("resolution {resolution} outside [16, 64]")));
    }
    if cardinalities.len() != 5 {
        return Err(DataError::InvalidGrid(format!(
            "shapes3d-mini takes 5 cardinalities (floor, wall, object hue, scale, shape), got {}",
            cardinalities.len()
        )));
    }
    let (n_floor, n_wall, n_obj, n_scale, n_shape) = (
        cardinalities[0],
        cardinalities[1],
        cardinalities[2],
        cardinalities[3],
        cardinalities[4],
    );
    for (name, card) in [("floor_hue", n_floor), ("wall_hue", n_wall), ("object_hue", n_obj)] {
        if card < 4 {
            return Err(DataError::InvalidGrid(format!("{name} needs >= 4 levels, got {card}")));
        }
    }
    if n_scale < 2 {
        return Err(DataError::InvalidGrid(format!("scale needs >= 2 levels, got {n_scale}")));
    }
    if n_shape != 3 {
        return Err(DataError::InvalidGrid(format!("shape factor must have 3 levels, got {n_shape}")));
    }

    // intensity bands are disjoint so every factor change is visible
    let ramp = |lo: f64, hi: f64, card: usize| -> Vec<f64> {
        (0..card).map(|l| lo + (hi - lo) * l as f64 / (card - 1) as f64).collect()
    };
    let floor_vals = ramp(0.40, 0.70, n_floor);
    let wall_vals = ramp(0.05, 0.35, n_wall);
    let obj_vals = ramp(0.75, 1.0, n_obj);

    let horizon = resolution * 55 / 100;
    let base_row = resolution - (resolution / 8).max(3);
    let s_min = (resolution * 5 / 32).max(3);
    let halves: Vec<usize> = (0..n_scale).map(|l| s_min + 2 * l).collect();
    let half_max = *halves.last().unwrap();
    let cx = resolution / 2;
    if base_row < 2 * half_max || cx < half_max || cx + half_max >= resolution {
        return Err(DataError::ShapeClipsFrame(vec![n_scale - 1]));
    }

    let factors = vec![
        Factor { name: "floor_hue".into(), cardinality: n_floor, values: floor_vals.clone() },
        Factor { name: "wall_hue".into(), cardinality: n_wall, values: wall_vals.clone() },
        Factor { name: "object_hue".into(), cardinality: n_obj, values: obj_vals.clone() },
        Factor {
            name: "scale".into(),
            cardinality: n_scale,
            values: halves.iter().map(|&h| h as f64).collect(),
        },
        Factor {
            name: "shape".into(),
            cardinality: 3,
            values: (0..3).map(|v| v as f64).collect(),
        },
    ];
    let grid = FactorGrid { factors, resolution, channels: 1 };
    grid.validate()?;

    let n = grid.num_items();
    let dim = resolution * resolution;
    let mut images = vec![0.0f32; n * dim];
    let mut factor_indices = vec![0u16; n * grid.num_factors()];

    for idx in 0..n {
        let levels = grid.index_to_factors(idx)?;
        for (f, &l) in levels.iter().enumerate() {
            factor_indices[idx * grid.num_factors() + f] = l as u16;
        }
        let floor_v = floor_vals[levels[0]] as f32;
        let wall_v = wall_vals[levels[1]] as f32;
        let obj_v = obj_vals[levels[2]] as f32;
        let half = halves[levels[3]] as f64;
        let shape = levels[4];
        let img = &mut images[idx * dim..(idx + 1) * dim];
        for y in 0..resolution {
            for x in 0..resolution {
                let in_obj = object_mask(x, y, shape, half, cx as f64, base_row as f64);
                img[y * resolution + x] = if in_obj {
                    obj_v
                } else if y < horizon {
                    wall_v
                } else {
                    floor_v
                };
            }
        }
    }

    Ok(FactoredDataset { grid, images, factor_indices })
}

/// Object silhouettes stand on `base_row`, centered at `cx`, with
/// half-extent `half`: cube = square, sphere = circle, pyramid = triangle.
fn object_mask(x: usize, y: usize, shape: usize, half: f64, cx: f64, base_row: f64) -> bool {
    let dx = x as f64 - cx;
    let fy = y as f64;
    match shape {
        0 => dx.abs() <= half && fy <= base_row && fy >= base_row - 2.0 * half,
        1 => {
            let cy = base_row - half;
            dx * dx + (fy - cy) * (fy - cy) <= half * half
        }
        _ => {
            // apex at base_row - 2*half, base corners at (cx +- half, base_row)
            if fy > base_row || fy < base_row - 2.0 * half {
                return false;
            }
            let t = (fy - (base_row - 2.0 * half)) / (2.0 * half);
            dx.abs() <= t * half
        }
    }
}
